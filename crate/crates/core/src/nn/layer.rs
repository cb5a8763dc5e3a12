use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Gain used to scale the fan-in initialisation bound.
    pub(crate) fn init_gain(self) -> f64 {
        match self {
            Activation::Tanh => 5.0 / 3.0,
            Activation::Relu => std::f64::consts::SQRT_2,
        }
    }
}

/// One entry of the ordered layer list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize },
    MaxPool2d { window: usize, stride: usize },
    Activation { function: Activation },
    Flatten,
    Dense { in_features: usize, out_features: usize },
    SoftmaxCrossEntropy,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        LayerSpec::Conv2d { in_channels, out_channels, kernel, stride: 1, padding }
    }

    pub fn pool(window: usize) -> Self {
        LayerSpec::MaxPool2d { window, stride: window }
    }

    pub fn tanh() -> Self {
        LayerSpec::Activation { function: Activation::Tanh }
    }

    pub fn relu() -> Self {
        LayerSpec::Activation { function: Activation::Relu }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Dense { in_features, out_features }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. })
    }

    /// Weight tensor shape: `[out, in, k, k]` for conv, `[out, in]` for dense.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                Some(vec![out_channels, in_channels, kernel, kernel])
            }
            LayerSpec::Dense { in_features, out_features } => Some(vec![out_features, in_features]),
            _ => None,
        }
    }

    pub fn bias_len(&self) -> Option<usize> {
        match *self {
            LayerSpec::Conv2d { out_channels, .. } => Some(out_channels),
            LayerSpec::Dense { out_features, .. } => Some(out_features),
            _ => None,
        }
    }

    /// Per-sample output shape for a per-sample input shape, or a reason
    /// why the input is incompatible.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                let [c, h, w] = spatial(input)?;
                if c != in_channels {
                    return Err(format!("conv expects {in_channels} input channels, got {c}"));
                }
                if out_channels == 0 || kernel == 0 || stride == 0 {
                    return Err("conv needs out_channels, kernel and stride >= 1".into());
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(format!("kernel {kernel} larger than padded input {h}x{w}"));
                }
                let ho = (h + 2 * padding - kernel) / stride + 1;
                let wo = (w + 2 * padding - kernel) / stride + 1;
                Ok(vec![out_channels, ho, wo])
            }
            LayerSpec::MaxPool2d { window, stride } => {
                let [c, h, w] = spatial(input)?;
                if window == 0 || stride == 0 || h < window || w < window {
                    return Err(format!("pool window {window} does not fit {h}x{w}"));
                }
                Ok(vec![c, (h - window) / stride + 1, (w - window) / stride + 1])
            }
            LayerSpec::Activation { .. } | LayerSpec::SoftmaxCrossEntropy => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { in_features, out_features } => {
                if input.len() != 1 || input[0] != in_features {
                    return Err(format!("dense expects [{in_features}], got {input:?}"));
                }
                if out_features == 0 {
                    return Err("dense needs out_features >= 1".into());
                }
                Ok(vec![out_features])
            }
        }
    }
}

fn spatial(input: &[usize]) -> Result<[usize; 3], String> {
    match input {
        &[c, h, w] => Ok([c, h, w]),
        other => Err(format!("expected a CxHxW input, got {other:?}")),
    }
}
