use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeom};
use super::layer::LayerSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weight and bias of one conv or dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    fn zeros_like(&self) -> Self {
        LayerParams { weight: Tensor::zeros(self.weight.shape()), bias: Tensor::zeros(self.bias.shape()) }
    }
}

/// Outputs of an inference pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `[batch, classes]`, the input of the softmax/cross-entropy head.
    pub logits: Tensor,
    /// One `[batch, C, H, W]` tensor per conv layer: the post-activation
    /// feature map (the conv output itself if no activation follows).
    pub conv_activations: Vec<Tensor>,
}

/// Result of [`Network::loss_and_grads`].
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Unreduced cross-entropy in nats, one entry per sample.
    pub per_sample_loss: Tensor,
    /// Gradient of the batch-mean loss, aligned with the layer list.
    pub params: Vec<Option<LayerParams>>,
    /// Per conv layer: derivative of each sample's own loss with respect to
    /// its feature map. Independent of how samples are batched.
    pub activation_grads: Vec<Tensor>,
    pub conv_activations: Vec<Tensor>,
    pub logits: Tensor,
}

/// An ordered CNN: layer specs, parameters and per-conv-layer freeze sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    params: Vec<Option<LayerParams>>,
    freeze: BTreeMap<usize, BTreeSet<usize>>,
    shapes: Vec<Vec<usize>>,
}

fn infer_shapes(input_shape: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    if input_shape.len() != 3 || input_shape.contains(&0) {
        return Err(Error::InvalidNetwork(format!("input shape must be CxHxW, got {input_shape:?}")));
    }
    match layers.last() {
        Some(LayerSpec::SoftmaxCrossEntropy) => {}
        _ => return Err(Error::InvalidNetwork("the last layer must be softmax_cross_entropy".into())),
    }
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current = input_shape.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        if matches!(layer, LayerSpec::SoftmaxCrossEntropy) && i + 1 != layers.len() {
            return Err(Error::InvalidNetwork(format!("softmax_cross_entropy at layer {i} is not last")));
        }
        current = layer.output_shape(&current).map_err(|detail| Error::Shape { layer: i, detail })?;
        shapes.push(current.clone());
    }
    if current.len() != 1 {
        return Err(Error::InvalidNetwork(format!("classifier head receives {current:?}, expected a vector")));
    }
    Ok(shapes)
}

impl Network {
    /// Builds a network with fan-in scaled uniform weights and zero biases.
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let shapes = infer_shapes(input_shape, &layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let shape = layer.weight_shape()?;
                let fan_in: usize = shape[1..].iter().product();
                let gain = match layers.get(i + 1) {
                    Some(LayerSpec::Activation { function }) => function.init_gain(),
                    _ => 1.0,
                };
                let bound = gain * (3.0 / fan_in as f64).sqrt();
                let n: usize = shape.iter().product();
                let weight: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                Some(LayerParams {
                    weight: Tensor::from_vec(&shape, weight),
                    bias: Tensor::zeros(&[layer.bias_len().unwrap_or(0)]),
                })
            })
            .collect();
        Ok(Network { input_shape: input_shape.to_vec(), layers, params, freeze: BTreeMap::new(), shapes })
    }

    /// Assembles a network from explicit parameters, validating every shape
    /// and freeze index.
    pub fn from_parts(
        input_shape: &[usize],
        layers: Vec<LayerSpec>,
        params: Vec<Option<LayerParams>>,
        freeze: BTreeMap<usize, BTreeSet<usize>>,
    ) -> Result<Self> {
        let shapes = infer_shapes(input_shape, &layers)?;
        if params.len() != layers.len() {
            return Err(Error::InvalidNetwork(format!(
                "{} parameter slots for {} layers",
                params.len(),
                layers.len()
            )));
        }
        for (i, (layer, p)) in layers.iter().zip(&params).enumerate() {
            match (layer.weight_shape(), p) {
                (None, None) => {}
                (Some(ws), Some(p)) => {
                    let bl = layer.bias_len().unwrap_or(0);
                    if p.weight.shape() != ws.as_slice() || p.bias.shape() != [bl] {
                        return Err(Error::Shape {
                            layer: i,
                            detail: format!(
                                "parameters {:?}/{:?} do not match spec {:?}/[{bl}]",
                                p.weight.shape(),
                                p.bias.shape(),
                                ws
                            ),
                        });
                    }
                }
                _ => {
                    return Err(Error::Shape { layer: i, detail: "parameter presence does not match layer kind".into() })
                }
            }
        }
        for (&li, set) in &freeze {
            let Some(LayerSpec::Conv2d { out_channels, .. }) = layers.get(li) else {
                return Err(Error::InvalidNetwork(format!("freeze set on non-conv layer {li}")));
            };
            if let Some(&bad) = set.iter().find(|&&f| f >= *out_channels) {
                return Err(Error::InvalidNetwork(format!(
                    "frozen filter {bad} out of range for layer {li} with {out_channels} filters"
                )));
            }
        }
        let freeze = freeze.into_iter().filter(|(_, s)| !s.is_empty()).collect();
        Ok(Network { input_shape: input_shape.to_vec(), layers, params, freeze, shapes })
    }

    pub fn into_parts(
        self,
    ) -> (Vec<usize>, Vec<LayerSpec>, Vec<Option<LayerParams>>, BTreeMap<usize, BTreeSet<usize>>) {
        (self.input_shape, self.layers, self.params, self.freeze)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    pub fn layer_params(&self, layer: usize) -> Option<&LayerParams> {
        self.params.get(layer).and_then(Option::as_ref)
    }

    /// Mutable parameter access. Shapes must be preserved by the caller.
    pub fn layer_params_mut(&mut self, layer: usize) -> Option<&mut LayerParams> {
        self.params.get_mut(layer).and_then(Option::as_mut)
    }

    /// Per-sample output shape of `layer`.
    pub fn output_shape(&self, layer: usize) -> &[usize] {
        &self.shapes[layer]
    }

    /// Per-sample input shape of `layer`.
    pub fn layer_input_shape(&self, layer: usize) -> &[usize] {
        if layer == 0 {
            &self.input_shape
        } else {
            &self.shapes[layer - 1]
        }
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().map(|s| s[0]).unwrap_or(0)
    }

    /// Layer indices of the conv layers, in order.
    pub fn conv_layers(&self) -> Vec<usize> {
        self.layers.iter().enumerate().filter(|(_, l)| l.is_conv()).map(|(i, _)| i).collect()
    }

    pub fn conv_widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::Conv2d { out_channels, .. } => Some(out_channels),
                _ => None,
            })
            .collect()
    }

    pub fn total_filters(&self) -> usize {
        self.conv_widths().iter().sum()
    }

    /// Layer whose output is treated as the feature map of conv `layer`.
    pub fn feature_map_layer(&self, layer: usize) -> usize {
        match self.layers.get(layer + 1) {
            Some(LayerSpec::Activation { .. }) => layer + 1,
            _ => layer,
        }
    }

    pub fn frozen(&self, layer: usize) -> Option<&BTreeSet<usize>> {
        self.freeze.get(&layer)
    }

    pub fn freeze_sets(&self) -> &BTreeMap<usize, BTreeSet<usize>> {
        &self.freeze
    }

    pub fn freeze_filter(&mut self, layer: usize, filter: usize) -> Result<()> {
        match self.layers.get(layer) {
            Some(LayerSpec::Conv2d { out_channels, .. }) if filter < *out_channels => {
                self.freeze.entry(layer).or_default().insert(filter);
                Ok(())
            }
            _ => Err(Error::InvalidNetwork(format!("cannot freeze filter {filter} of layer {layer}"))),
        }
    }

    pub fn clear_freeze(&mut self) {
        self.freeze.clear();
    }

    /// Multiply-adds count as two FLOPs; pooling, activations and the
    /// softmax head are not counted, nor are bias additions.
    pub fn count_flops(&self) -> u64 {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| match *l {
                LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                    let s = &self.shapes[i];
                    2 * (kernel * kernel * in_channels * out_channels * s[1] * s[2]) as u64
                }
                LayerSpec::Dense { in_features, out_features } => 2 * (in_features * out_features) as u64,
                _ => 0,
            })
            .sum()
    }

    /// Conv weights plus biases at four bytes per parameter.
    pub fn param_bytes(&self) -> u64 {
        self.layers
            .iter()
            .filter(|l| l.is_conv())
            .map(|l| {
                let w: usize = l.weight_shape().unwrap().iter().product();
                4 * (w + l.bias_len().unwrap()) as u64
            })
            .sum()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let s = batch.shape();
        if s.len() != 4 || s[1..] != self.input_shape[..] {
            return Err(Error::Shape {
                layer: 0,
                detail: format!("batch shape {s:?} does not match input {:?}", self.input_shape),
            });
        }
        Ok(s[0])
    }

    fn conv_geom(&self, layer: usize) -> ConvGeom {
        let LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } = self.layers[layer] else {
            unreachable!("layer {layer} is not a conv layer")
        };
        let inp = self.layer_input_shape(layer);
        let out = &self.shapes[layer];
        ConvGeom {
            cin: in_channels,
            cout: out_channels,
            k: kernel,
            stride,
            pad: padding,
            h: inp[1],
            w: inp[2],
            ho: out[1],
            wo: out[2],
        }
    }

    /// Applies layer `layer` to a batch. For max-pool layers, `argmax`
    /// receives the flat per-sample input index of every output.
    fn apply_layer(&self, layer: usize, input: &Tensor, argmax: Option<&mut Vec<u32>>) -> Tensor {
        let n = input.shape()[0];
        let out_shape = &self.shapes[layer];
        let out_len: usize = out_shape.iter().product();
        let mut full_shape = vec![n];
        full_shape.extend_from_slice(out_shape);
        match self.layers[layer] {
            LayerSpec::Conv2d { .. } => {
                let g = self.conv_geom(layer);
                let p = self.params[layer].as_ref().unwrap();
                let mut cols = vec![0.0; g.patch_len() * g.out_positions()];
                let mut out = vec![0.0; n * out_len];
                for (x, y) in input.data().chunks_exact(input.row_len()).zip(out.chunks_exact_mut(out_len)) {
                    kernels::conv_forward(&g, p.weight.data(), p.bias.data(), x, &mut cols, y);
                }
                Tensor::from_vec(&full_shape, out)
            }
            LayerSpec::MaxPool2d { window, stride } => {
                let inp = self.layer_input_shape(layer);
                let (c, h, w) = (inp[0], inp[1], inp[2]);
                let mut out = vec![0.0; n * out_len];
                let mut am = argmax.map(|v| {
                    v.clear();
                    v.resize(n * out_len, 0);
                    v
                });
                for (s, (x, y)) in input.data().chunks_exact(input.row_len()).zip(out.chunks_exact_mut(out_len)).enumerate() {
                    let slot = am.as_deref_mut().map(|v| &mut v[s * out_len..(s + 1) * out_len]);
                    kernels::maxpool_forward((c, h, w), (window, stride), (out_shape[1], out_shape[2]), x, y, slot);
                }
                Tensor::from_vec(&full_shape, out)
            }
            LayerSpec::Activation { function } => {
                let data = input.data().iter().map(|&v| function.apply(v)).collect();
                Tensor::from_vec(&full_shape, data)
            }
            LayerSpec::Flatten | LayerSpec::SoftmaxCrossEntropy => input.clone().reshape(&full_shape),
            LayerSpec::Dense { in_features, out_features } => {
                let p = self.params[layer].as_ref().unwrap();
                let mut out = vec![0.0; n * out_features];
                // Row by row so each sample's logits do not depend on batch size.
                for (x, y) in input.data().chunks_exact(in_features).zip(out.chunks_exact_mut(out_features)) {
                    y.copy_from_slice(p.bias.data());
                    kernels::gemm(
                        1,
                        in_features,
                        out_features,
                        x,
                        (in_features as isize, 1),
                        p.weight.data(),
                        (1, in_features as isize),
                        1.0,
                        y,
                    );
                }
                Tensor::from_vec(&full_shape, out)
            }
        }
    }

    /// Logits only; keeps no intermediate tensors.
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let head = self.layers.len() - 1;
        let mut x = batch.clone();
        for li in 0..head {
            x = self.apply_layer(li, &x, None);
        }
        Ok(x)
    }

    pub fn forward(&self, batch: &Tensor) -> Result<ForwardPass> {
        self.check_batch(batch)?;
        let fmap_layers: Vec<usize> = self.conv_layers().iter().map(|&c| self.feature_map_layer(c)).collect();
        let mut conv_activations = Vec::with_capacity(fmap_layers.len());
        let head = self.layers.len() - 1;
        let mut x = batch.clone();
        for li in 0..head {
            x = self.apply_layer(li, &x, None);
            if fmap_layers.contains(&li) {
                conv_activations.push(x.clone());
            }
        }
        Ok(ForwardPass { logits: x, conv_activations })
    }

    /// Inference pass plus the unreduced cross-entropy of every sample.
    pub fn forward_with_loss(&self, batch: &Tensor, labels: &[usize]) -> Result<(ForwardPass, Vec<f64>)> {
        self.check_labels(batch, labels)?;
        let pass = self.forward(batch)?;
        let (losses, _) = softmax_cross_entropy(&pass.logits, labels)?;
        Ok((pass, losses))
    }

    fn check_labels(&self, batch: &Tensor, labels: &[usize]) -> Result<usize> {
        let n = self.check_batch(batch)?;
        let classes = self.num_classes();
        if labels.len() != n {
            return Err(Error::LengthMismatch(format!("{} labels for a batch of {n}", labels.len())));
        }
        if let Some((sample, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::Label { sample, label, classes });
        }
        Ok(n)
    }

    /// Forward and backward pass with an unreduced cross-entropy head.
    pub fn loss_and_grads(&self, batch: &Tensor, labels: &[usize]) -> Result<Gradients> {
        let n = self.check_labels(batch, labels)?;
        let head = self.layers.len() - 1;
        let mut outputs: Vec<Tensor> = Vec::with_capacity(head);
        let mut argmax: Vec<Vec<u32>> = vec![Vec::new(); head];
        for li in 0..head {
            let input = if li == 0 { batch } else { &outputs[li - 1] };
            let slot = matches!(self.layers[li], LayerSpec::MaxPool2d { .. }).then(|| &mut argmax[li]);
            let y = self.apply_layer(li, input, slot);
            outputs.push(y);
        }
        let logits = outputs[head - 1].clone();

        let (losses, grad) = softmax_cross_entropy(&logits, labels)?;

        let convs = self.conv_layers();
        let fmap_layers: Vec<usize> = convs.iter().map(|&c| self.feature_map_layer(c)).collect();
        let mut activation_grads = vec![Tensor::zeros(&[0]); convs.len()];
        let mut conv_activations = vec![Tensor::zeros(&[0]); convs.len()];
        let mut param_grads: Vec<Option<LayerParams>> =
            self.params.iter().map(|p| p.as_ref().map(LayerParams::zeros_like)).collect();

        let mut g = Tensor::from_vec(outputs[head - 1].shape(), grad);
        for li in (0..head).rev() {
            if let Some(ci) = fmap_layers.iter().position(|&f| f == li) {
                activation_grads[ci] = g.clone();
                conv_activations[ci] = outputs[li].clone();
            }
            let input = if li == 0 { batch } else { &outputs[li - 1] };
            let need_input_grad = li > 0;
            let mut in_shape = vec![n];
            in_shape.extend_from_slice(self.layer_input_shape(li));
            g = match self.layers[li] {
                LayerSpec::Conv2d { .. } => {
                    let geom = self.conv_geom(li);
                    let p = self.params[li].as_ref().unwrap();
                    let pg = param_grads[li].as_mut().unwrap();
                    let mut cols = vec![0.0; geom.patch_len() * geom.out_positions()];
                    let in_len = input.row_len();
                    let out_len = g.row_len();
                    let mut gin = vec![0.0; if need_input_grad { n * in_len } else { 0 }];
                    for s in 0..n {
                        let gi = need_input_grad.then(|| &mut gin[s * in_len..(s + 1) * in_len]);
                        kernels::conv_backward(
                            &geom,
                            p.weight.data(),
                            input.row(s),
                            &g.data()[s * out_len..(s + 1) * out_len],
                            &mut cols,
                            pg.weight.data_mut(),
                            pg.bias.data_mut(),
                            gi,
                        );
                    }
                    if need_input_grad {
                        Tensor::from_vec(&in_shape, gin)
                    } else {
                        Tensor::zeros(&[0])
                    }
                }
                LayerSpec::MaxPool2d { .. } => {
                    let in_len = input.row_len();
                    let out_len = g.row_len();
                    let mut gin = vec![0.0; n * in_len];
                    for s in 0..n {
                        let dst = &mut gin[s * in_len..(s + 1) * in_len];
                        for (o, &src) in argmax[li][s * out_len..(s + 1) * out_len].iter().enumerate() {
                            dst[src as usize] += g.data()[s * out_len + o];
                        }
                    }
                    Tensor::from_vec(&in_shape, gin)
                }
                LayerSpec::Activation { function } => {
                    let y = &outputs[li];
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&gv, &yv)| gv * function.derivative_from_output(yv))
                        .collect();
                    Tensor::from_vec(&in_shape, data)
                }
                LayerSpec::Flatten | LayerSpec::SoftmaxCrossEntropy => g.reshape(&in_shape),
                LayerSpec::Dense { in_features, out_features } => {
                    let p = self.params[li].as_ref().unwrap();
                    let pg = param_grads[li].as_mut().unwrap();
                    // dW[out x in] += G^T[out x n] * X[n x in]
                    kernels::gemm(
                        out_features,
                        n,
                        in_features,
                        g.data(),
                        (1, out_features as isize),
                        input.data(),
                        (in_features as isize, 1),
                        1.0,
                        pg.weight.data_mut(),
                    );
                    for row in g.data().chunks_exact(out_features) {
                        for (b, v) in pg.bias.data_mut().iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                    if need_input_grad {
                        let mut gin = vec![0.0; n * in_features];
                        kernels::gemm(
                            n,
                            out_features,
                            in_features,
                            g.data(),
                            (out_features as isize, 1),
                            p.weight.data(),
                            (in_features as isize, 1),
                            0.0,
                            &mut gin,
                        );
                        Tensor::from_vec(&in_shape, gin)
                    } else {
                        Tensor::zeros(&[0])
                    }
                }
            };
        }

        let scale = 1.0 / n as f64;
        for p in param_grads.iter_mut().flatten() {
            p.weight.data_mut().iter_mut().for_each(|v| *v *= scale);
            p.bias.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        Ok(Gradients {
            per_sample_loss: Tensor::from_vec(&[n], losses),
            params: param_grads,
            activation_grads,
            conv_activations,
            logits,
        })
    }
}

/// Per-sample cross-entropy in nats and its gradient with respect to the
/// logits (softmax minus one-hot), for `[n, classes]` logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let classes = logits.row_len();
    let mut losses = Vec::with_capacity(labels.len());
    let mut grad = vec![0.0; logits.len()];
    for (s, (z, g)) in logits.data().chunks_exact(classes).zip(grad.chunks_exact_mut(classes)).enumerate() {
        let top = super::eval::argmax(z);
        let max = z[top];
        let rest: f64 = z.iter().enumerate().filter(|&(i, _)| i != top).map(|(_, v)| (v - max).exp()).sum();
        let lse = max + rest.ln_1p();
        let loss = (max - z[labels[s]]) + rest.ln_1p();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { sample: s });
        }
        losses.push(loss.max(0.0));
        for (gi, zi) in g.iter_mut().zip(z) {
            *gi = (zi - lse).exp();
        }
        g[labels[s]] -= 1.0;
    }
    Ok((losses, grad))
}
