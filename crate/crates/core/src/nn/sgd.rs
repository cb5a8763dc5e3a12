use serde::{Deserialize, Serialize};

use super::network::{LayerParams, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { learning_rate: 1e-4, momentum: 0.9, weight_decay: 1e-4, batch_size: 32, seed: 0 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Momentum SGD with decoupled velocity buffers:
/// `v = momentum * v + (g + weight_decay * w)`, `w -= lr * v`.
///
/// Filters in the network's freeze sets are skipped entirely, so their
/// weights, bias and velocity never change.
#[derive(Debug, Clone)]
pub struct Sgd {
    cfg: SgdConfig,
    velocity: Vec<Option<LayerParams>>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig) -> Self {
        Sgd { cfg, velocity: Vec::new() }
    }

    pub fn config(&self) -> &SgdConfig {
        &self.cfg
    }

    pub fn step(&mut self, net: &mut Network, grads: &[Option<LayerParams>]) -> Result<()> {
        if grads.len() != net.layers().len() {
            return Err(Error::LengthMismatch(format!(
                "{} gradient slots for {} layers",
                grads.len(),
                net.layers().len()
            )));
        }
        for (li, g) in grads.iter().enumerate() {
            let p = net.layer_params(li);
            let ok = match (p, g) {
                (Some(p), Some(g)) => p.weight.shape() == g.weight.shape() && p.bias.shape() == g.bias.shape(),
                (None, None) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::Shape { layer: li, detail: "gradient shape does not match parameters".into() });
            }
        }
        let shapes_match = self.velocity.len() == grads.len()
            && self.velocity.iter().zip(grads).all(|(v, g)| match (v, g) {
                (Some(v), Some(g)) => v.weight.shape() == g.weight.shape(),
                (None, None) => true,
                _ => false,
            });
        if !shapes_match {
            self.velocity = grads
                .iter()
                .map(|g| {
                    g.as_ref().map(|g| LayerParams {
                        weight: crate::Tensor::zeros(g.weight.shape()),
                        bias: crate::Tensor::zeros(g.bias.shape()),
                    })
                })
                .collect();
        }

        let SgdConfig { learning_rate: lr, momentum, weight_decay: wd, .. } = self.cfg;
        for (li, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let frozen = net.frozen(li).cloned().unwrap_or_default();
            let v = self.velocity[li].as_mut().unwrap();
            let p = net.layer_params_mut(li).unwrap();
            let filters = p.bias.len();
            let row = p.weight.len() / filters.max(1);
            for f in 0..filters {
                if frozen.contains(&f) {
                    continue;
                }
                let range = f * row..(f + 1) * row;
                let w = &mut p.weight.data_mut()[range.clone()];
                let vw = &mut v.weight.data_mut()[range.clone()];
                for ((w, v), &g) in w.iter_mut().zip(vw).zip(&g.weight.data()[range]) {
                    *v = momentum * *v + (g + wd * *w);
                    *w -= lr * *v;
                }
                let b = &mut p.bias.data_mut()[f];
                let vb = &mut v.bias.data_mut()[f];
                *vb = momentum * *vb + (g.bias.data()[f] + wd * *b);
                *b -= lr * *vb;
            }
        }
        Ok(())
    }
}
