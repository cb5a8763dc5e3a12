use rayon::prelude::*;

use super::network::Network;
use crate::data::Dataset;
use crate::error::Result;

/// Samples per inference chunk.
pub const EVAL_CHUNK: usize = 128;

/// Index of the largest logit; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Predicted class per sample. Chunks run on the rayon pool and are merged
/// in sample order.
pub fn predict(net: &Network, ds: &Dataset) -> Result<Vec<usize>> {
    let n = ds.len();
    let chunks: Vec<Vec<usize>> = (0..n).collect::<Vec<_>>().chunks(EVAL_CHUNK).map(<[usize]>::to_vec).collect();
    let parts: Vec<Result<Vec<usize>>> = chunks
        .par_iter()
        .map(|idx| {
            let (x, _) = ds.batch(idx);
            let logits = net.logits(&x)?;
            Ok(logits.data().chunks_exact(net.num_classes()).map(argmax).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate(net: &Network, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let pred = predict(net, ds)?;
    let correct = pred.iter().zip(&ds.labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / ds.len() as f64)
}
