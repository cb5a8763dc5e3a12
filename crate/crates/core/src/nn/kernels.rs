//! Per-sample compute kernels. Convolution lowers to im2col + GEMM.

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    pub fn out_positions(&self) -> usize {
        self.ho * self.wo
    }
}

/// `c[m x n] = alpha * a[m x k] * b[k x n] + beta * c`, all row-major
/// unless strides say otherwise.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: the callers size `a`, `b` and `c` for the given dimensions and
    // strides; `c` is an exclusive borrow.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Lays out every receptive field as a column: `cols[patch_len x positions]`.
pub(crate) fn im2col(g: &ConvGeom, input: &[f64], cols: &mut [f64]) {
    let positions = g.out_positions();
    for c in 0..g.cin {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Scatter-adds columns back onto the input plane (adjoint of [`im2col`]).
pub(crate) fn col2im(g: &ConvGeom, cols: &[f64], grad_input: &mut [f64]) {
    let positions = g.out_positions();
    for c in 0..g.cin {
        let plane = &mut grad_input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_forward(
    g: &ConvGeom,
    weight: &[f64],
    bias: &[f64],
    input: &[f64],
    cols: &mut [f64],
    out: &mut [f64],
) {
    let kk = g.patch_len();
    let p = g.out_positions();
    im2col(g, input, cols);
    gemm(g.cout, kk, p, weight, (kk as isize, 1), cols, (p as isize, 1), 0.0, out);
    for (co, plane) in out.chunks_exact_mut(p).enumerate() {
        let b = bias[co];
        plane.iter_mut().for_each(|v| *v += b);
    }
}

/// Accumulates weight and bias gradients; writes the input gradient when
/// `grad_input` is given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    g: &ConvGeom,
    weight: &[f64],
    input: &[f64],
    grad_out: &[f64],
    cols: &mut [f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    grad_input: Option<&mut [f64]>,
) {
    let kk = g.patch_len();
    let p = g.out_positions();
    im2col(g, input, cols);
    // dW[cout x kk] += dY[cout x p] * cols^T[p x kk]
    gemm(g.cout, p, kk, grad_out, (p as isize, 1), cols, (1, p as isize), 1.0, grad_weight);
    for (co, plane) in grad_out.chunks_exact(p).enumerate() {
        grad_bias[co] += plane.iter().sum::<f64>();
    }
    if let Some(gi) = grad_input {
        // dcols[kk x p] = W^T[kk x cout] * dY[cout x p]
        gemm(kk, g.cout, p, weight, (1, kk as isize), grad_out, (p as isize, 1), 0.0, cols);
        gi.fill(0.0);
        col2im(g, cols, gi);
    }
}

/// Max pooling; records the flat input index of each window maximum
/// (first maximum on ties).
pub(crate) fn maxpool_forward(
    (c, h, w): (usize, usize, usize),
    (window, stride): (usize, usize),
    (ho, wo): (usize, usize),
    input: &[f64],
    out: &mut [f64],
    argmax: Option<&mut [u32]>,
) {
    let mut argmax = argmax;
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for dy in 0..window {
                    let row = (oy * stride + dy) * w;
                    for dx in 0..window {
                        let idx = row + ox * stride + dx;
                        if plane[idx] > best {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (ch * ho + oy) * wo + ox;
                out[o] = best;
                if let Some(am) = argmax.as_deref_mut() {
                    am[o] = (ch * h * w + best_idx) as u32;
                }
            }
        }
    }
}
