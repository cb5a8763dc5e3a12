use serde::{Deserialize, Serialize};

use super::network::Network;
use super::sgd::{Sgd, SgdConfig};
use crate::data::{batches, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub updates: usize,
    pub mean_loss: f64,
}

/// Full passes over `ds`, reshuffled each epoch from `cfg.seed`.
pub fn train_epochs(net: &mut Network, ds: &Dataset, cfg: &SgdConfig, epochs: usize) -> Result<Vec<TrainLogEntry>> {
    cfg.validate()?;
    let mut sgd = Sgd::new(cfg.clone());
    let mut log = Vec::with_capacity(epochs);
    let mut updates = 0;
    for epoch in 0..epochs {
        let mut total = 0.0;
        let epoch_seed = cfg.seed.wrapping_add(epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        for idx in batches(ds.len(), cfg.batch_size, Some(epoch_seed)) {
            let (x, y) = ds.batch(&idx);
            let g = net.loss_and_grads(&x, &y)?;
            total += g.per_sample_loss.data().iter().sum::<f64>();
            sgd.step(net, &g.params)?;
            updates += 1;
        }
        let mean_loss = total / ds.len().max(1) as f64;
        if !mean_loss.is_finite() {
            return Err(Error::NonFiniteLoss { sample: 0 });
        }
        log.push(TrainLogEntry { epoch, updates, mean_loss });
    }
    Ok(log)
}

/// Exactly `updates` minibatch steps drawn from seeded shuffles of `ds`,
/// reusing the optimizer state in `sgd`. Returns the mean minibatch loss.
pub fn train_updates(net: &mut Network, ds: &Dataset, sgd: &mut Sgd, updates: usize, seed: u64) -> Result<f64> {
    if ds.is_empty() && updates > 0 {
        return Err(Error::Data("cannot fine-tune on an empty dataset".into()));
    }
    let bs = sgd.config().batch_size;
    let mut total = 0.0;
    let mut done = 0;
    let mut round = 0u64;
    while done < updates {
        for idx in batches(ds.len(), bs, Some(seed.wrapping_add(round))) {
            if done == updates {
                break;
            }
            let (x, y) = ds.batch(&idx);
            let g = net.loss_and_grads(&x, &y)?;
            total += g.per_sample_loss.data().iter().sum::<f64>() / idx.len() as f64;
            sgd.step(net, &g.params)?;
            done += 1;
        }
        round += 1;
    }
    Ok(if updates == 0 { 0.0 } else { total / updates as f64 })
}
