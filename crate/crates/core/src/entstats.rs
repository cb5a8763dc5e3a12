//! Quantized histogram entropy estimates between a filter's activation and
//! the per-sample loss.
//!
//! Activations and losses are scaled by `eps_h` and floored to `i32` bins.
//! Per filter, `c_val` counts activation bins and `c_bins` counts
//! (activation bin, loss bin) pairs. From these:
//!
//! * `act_ent  = sum_{i != 0} -(c_val[i]/c_total) log2(c_val[i]/c_total)`
//! * `ent_i    = (c_val[i]/c_total) sum_j -(c_bins[i][j]/c_val[i]) log2(c_bins[i][j]/c_val[i])`
//! * `con_ent  = sum_i ent_i = H(loss | activation)`
//!
//! All entropies are in bits. Sums run over terms sorted ascending, so
//! results depend only on the multiset of counts and never on bin labels.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TraceFile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantSpec {
    pub eps_h: f64,
}

impl Default for QuantSpec {
    fn default() -> Self {
        QuantSpec { eps_h: 1e4 }
    }
}

/// A quantized value; `saturated` marks values clipped to the `i32` range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bin {
    pub index: i32,
    pub saturated: bool,
}

impl QuantSpec {
    pub fn validate(&self) -> Result<()> {
        if self.eps_h > 0.0 && self.eps_h.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("eps_h must be positive, got {}", self.eps_h)))
        }
    }

    /// `floor(eps_h * x)`, saturating at the `i32` limits.
    pub fn quantize(&self, x: f64) -> Bin {
        let scaled = (self.eps_h * x).floor();
        if scaled > i32::MAX as f64 {
            Bin { index: i32::MAX, saturated: true }
        } else if scaled < i32::MIN as f64 {
            Bin { index: i32::MIN, saturated: true }
        } else {
            Bin { index: scaled as i32, saturated: false }
        }
    }

    /// Midpoint of a bin in activation units.
    pub fn dequantize(&self, bin: i32) -> f64 {
        (bin as f64 + 0.5) / self.eps_h
    }
}

pub fn quantize(x: f64, q: QuantSpec) -> Bin {
    q.quantize(x)
}

#[inline]
fn plogp(p: f64) -> f64 {
    -(p * p.log2())
}

/// Sum of the terms taken in ascending order. Adding `0.0` turns the
/// `-0.0` of an all-zero sum into `0.0`.
fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum::<f64>() + 0.0
}

/// Activation/loss histograms of a single filter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntropyAccumulator {
    c_val: BTreeMap<i32, u64>,
    c_bins: BTreeMap<i32, BTreeMap<i32, u64>>,
    c_total: u64,
    saturated: u64,
}

/// `H(loss | activation)` together with its per-activation-bin terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalEntropy {
    pub con_ent: f64,
    /// `(activation bin, ent_i)` in ascending bin order.
    pub per_bin: Vec<(i32, f64)>,
    /// Bin with the largest `ent_i`; ties go to the more populated bin,
    /// then to the lower bin index.
    pub max_bin: i32,
    pub max_ent: f64,
}

impl EntropyAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one (activation bin, loss bin) event.
    pub fn accumulate(&mut self, i: i32, j: i32) {
        *self.c_val.entry(i).or_default() += 1;
        *self.c_bins.entry(i).or_default().entry(j).or_default() += 1;
        self.c_total += 1;
    }

    /// Quantizes and records a raw (activation, loss) pair.
    pub fn observe(&mut self, activation: f64, loss: f64, q: QuantSpec) {
        let a = q.quantize(activation);
        let l = q.quantize(loss);
        self.saturated += a.saturated as u64 + l.saturated as u64;
        self.accumulate(a.index, l.index);
    }

    pub fn merge_from(&mut self, other: &EntropyAccumulator) {
        for (&i, &c) in &other.c_val {
            *self.c_val.entry(i).or_default() += c;
        }
        for (&i, row) in &other.c_bins {
            let dst = self.c_bins.entry(i).or_default();
            for (&j, &c) in row {
                *dst.entry(j).or_default() += c;
            }
        }
        self.c_total += other.c_total;
        self.saturated += other.saturated;
    }

    pub fn merge(&self, other: &EntropyAccumulator) -> EntropyAccumulator {
        let mut out = self.clone();
        out.merge_from(other);
        out
    }

    pub fn c_total(&self) -> u64 {
        self.c_total
    }

    pub fn c_val(&self) -> &BTreeMap<i32, u64> {
        &self.c_val
    }

    pub fn c_bins(&self) -> &BTreeMap<i32, BTreeMap<i32, u64>> {
        &self.c_bins
    }

    /// Number of quantizations clipped to the `i32` range.
    pub fn saturated(&self) -> u64 {
        self.saturated
    }

    /// Count of events in activation bin 0.
    pub fn zero_count(&self) -> u64 {
        self.c_val.get(&0).copied().unwrap_or(0)
    }

    fn nonempty(&self) -> Result<f64> {
        if self.c_total == 0 {
            Err(Error::EmptyAccumulator)
        } else {
            Ok(self.c_total as f64)
        }
    }

    /// Entropy of the activation histogram, bin 0 excluded from the sum
    /// (but still counted in `c_total`).
    pub fn activation_entropy(&self) -> Result<f64> {
        let total = self.nonempty()?;
        Ok(sorted_sum(
            self.c_val.iter().filter(|(&i, _)| i != 0).map(|(_, &c)| plogp(c as f64 / total)).collect(),
        ))
    }

    pub fn conditional_entropy(&self) -> Result<ConditionalEntropy> {
        let total = self.nonempty()?;
        let mut per_bin = Vec::with_capacity(self.c_val.len());
        for (&i, row) in &self.c_bins {
            let cv = self.c_val[&i] as f64;
            let inner = sorted_sum(row.values().map(|&c| plogp(c as f64 / cv)).collect());
            per_bin.push((i, (cv / total) * inner));
        }
        let con_ent = sorted_sum(per_bin.iter().map(|&(_, e)| e).collect());
        let &(max_bin, max_ent) = per_bin
            .iter()
            .max_by(|a, b| {
                a.1.total_cmp(&b.1).then(self.c_val[&a.0].cmp(&self.c_val[&b.0])).then(b.0.cmp(&a.0))
            })
            .expect("non-empty accumulator has a bin");
        Ok(ConditionalEntropy { con_ent, per_bin, max_bin, max_ent })
    }

    /// Loss-bin marginal counts.
    pub fn loss_marginal(&self) -> BTreeMap<i32, u64> {
        let mut m = BTreeMap::new();
        for row in self.c_bins.values() {
            for (&j, &c) in row {
                *m.entry(j).or_default() += c;
            }
        }
        m
    }

    pub fn loss_entropy(&self) -> Result<f64> {
        let total = self.nonempty()?;
        Ok(sorted_sum(self.loss_marginal().values().map(|&c| plogp(c as f64 / total)).collect()))
    }

    /// `H(loss) - H(loss | activation)`.
    pub fn mutual_information(&self) -> Result<f64> {
        Ok(self.loss_entropy()? - self.conditional_entropy()?.con_ent)
    }
}

/// The per-filter statistics reported by `entprune stats`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStats {
    pub layer: usize,
    pub filter: usize,
    pub act_ent: f64,
    pub con_ent: f64,
    pub max_ent_i: f64,
    /// Dequantized activation of the bin with the largest `ent_i`.
    pub max_ent_activation: f64,
    pub zero_count: u64,
    pub samples: u64,
    pub loss_ent: f64,
    pub mutual_info: f64,
}

impl FilterStats {
    pub fn from_accumulator(layer: usize, filter: usize, acc: &EntropyAccumulator, q: QuantSpec) -> Result<Self> {
        let ce = acc.conditional_entropy()?;
        let loss_ent = acc.loss_entropy()?;
        Ok(FilterStats {
            layer,
            filter,
            act_ent: acc.activation_entropy()?,
            con_ent: ce.con_ent,
            max_ent_i: ce.max_ent,
            max_ent_activation: q.dequantize(ce.max_bin),
            zero_count: acc.zero_count(),
            samples: acc.c_total(),
            loss_ent,
            mutual_info: loss_ent - ce.con_ent,
        })
    }
}

/// One accumulator per conv filter, `[layer][filter]`, built from the
/// trace's (activation, loss) pairs. Record shards are accumulated in
/// parallel and merged; counts are integers, so the result is exact.
pub fn accumulate_trace(tf: &TraceFile, q: QuantSpec) -> Vec<Vec<EntropyAccumulator>> {
    let empty = || -> Vec<Vec<EntropyAccumulator>> {
        tf.header.layer_sizes.iter().map(|&n| vec![EntropyAccumulator::new(); n]).collect()
    };
    tf.records
        .par_chunks(512)
        .map(|chunk| {
            let mut accs = empty();
            for r in chunk {
                let loss_bin = q.quantize(r.loss);
                for (layer, acts) in r.activations.iter().enumerate() {
                    for (filter, &a) in acts.iter().enumerate() {
                        let acc = &mut accs[layer][filter];
                        let bin = q.quantize(a);
                        acc.saturated += bin.saturated as u64 + loss_bin.saturated as u64;
                        acc.accumulate(bin.index, loss_bin.index);
                    }
                }
            }
            accs
        })
        .reduce(empty, |mut a, b| {
            for (la, lb) in a.iter_mut().zip(&b) {
                for (fa, fb) in la.iter_mut().zip(lb) {
                    fa.merge_from(fb);
                }
            }
            a
        })
}

/// [`FilterStats`] for every filter of a trace, `[layer][filter]`.
pub fn trace_stats(tf: &TraceFile, q: QuantSpec) -> Result<Vec<Vec<FilterStats>>> {
    q.validate()?;
    accumulate_trace(tf, q)
        .iter()
        .enumerate()
        .map(|(layer, accs)| {
            accs.iter().enumerate().map(|(filter, acc)| FilterStats::from_accumulator(layer, filter, acc, q)).collect()
        })
        .collect()
}
