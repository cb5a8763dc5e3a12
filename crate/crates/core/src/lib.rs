//! Filter pruning driven by conditional entropy.
//!
//! The crate bundles a small deterministic CNN engine ([`nn`]), dataset
//! loading ([`data`]), per-sample activation tracing ([`trace`]), quantized
//! histogram entropy estimates ([`entstats`]), five filter-importance
//! criteria ([`criteria`]), structural network surgery ([`surgery`]) and the
//! two-phase pruning driver ([`driver`]). The [`cli`] module holds the
//! configuration schema and the command implementations behind the
//! `entprune` binary.
//!
//! Every numeric path runs in `f64` and every random draw comes from a
//! seeded ChaCha generator, so identical configs reproduce identical
//! checkpoints, traces and prune logs.

pub mod cli;
pub mod criteria;
pub mod data;
pub mod driver;
pub mod entstats;
pub mod error;
pub mod nn;
pub mod presets;
pub mod report;
pub mod surgery;
pub mod tensor;
pub mod trace;

pub use error::{Error, Result};
pub use tensor::Tensor;
