//! Named model layouts for 1x28x28 inputs.

use crate::error::{Error, Result};
use crate::nn::LayerSpec;

pub const MNIST_SHAPE: [usize; 3] = [1, 28, 28];

/// Two 5x5 conv layers (8 and 16 filters) with relu and 2x2 pooling.
pub fn mnist2conv() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(1, 8, 5, 0),
        LayerSpec::relu(),
        LayerSpec::pool(2),
        LayerSpec::conv(8, 16, 5, 0),
        LayerSpec::relu(),
        LayerSpec::pool(2),
        LayerSpec::Flatten,
        LayerSpec::dense(16 * 4 * 4, 10),
        LayerSpec::SoftmaxCrossEntropy,
    ]
}

/// Six 3x3 tanh conv layers, 16/16/32/32/64/64 filters, in three pooled
/// stages, then a single dense classifier.
pub fn mini_vgg() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(1, 16, 3, 1),
        LayerSpec::tanh(),
        LayerSpec::pool(2),
        LayerSpec::conv(16, 16, 3, 1),
        LayerSpec::tanh(),
        LayerSpec::conv(16, 32, 3, 1),
        LayerSpec::tanh(),
        LayerSpec::pool(2),
        LayerSpec::conv(32, 32, 3, 1),
        LayerSpec::tanh(),
        LayerSpec::conv(32, 64, 3, 1),
        LayerSpec::tanh(),
        LayerSpec::pool(2),
        LayerSpec::conv(64, 64, 3, 1),
        LayerSpec::tanh(),
        LayerSpec::Flatten,
        LayerSpec::dense(64 * 3 * 3, 10),
        LayerSpec::SoftmaxCrossEntropy,
    ]
}

pub fn by_name(name: &str) -> Result<Vec<LayerSpec>> {
    match name {
        "mnist2conv" => Ok(mnist2conv()),
        "mini-vgg" | "mini_vgg" => Ok(mini_vgg()),
        other => Err(Error::Config(format!("unknown preset {other:?} (mnist2conv|mini-vgg)"))),
    }
}
