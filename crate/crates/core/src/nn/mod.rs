//! Minimal deterministic CNN engine.

pub mod checkpoint;
mod eval;
mod kernels;
mod layer;
mod network;
mod sgd;
mod train;

pub use eval::{argmax, evaluate, predict, EVAL_CHUNK};
pub use layer::{Activation, LayerSpec};
pub use network::{softmax_cross_entropy, ForwardPass, Gradients, LayerParams, Network};
pub use sgd::{Sgd, SgdConfig};
pub use train::{train_epochs, train_updates, TrainLogEntry};

#[cfg(test)]
mod tests;
