//! Filter-importance criteria and prune selection.
//!
//! | criterion  | score                                            | pruned first |
//! |------------|--------------------------------------------------|--------------|
//! | `cond-ent` | `H(loss bin | activation bin)` from a trace      | lowest       |
//! | `act-ent`  | activation entropy (zero bin excluded)           | lowest       |
//! | `l1`       | sum of absolute kernel weights, bias excluded    | lowest       |
//! | `apoz`     | fraction of zero post-activation outputs         | highest      |
//! | `taylor`   | `|mean(z * dC/dz)|` over samples and positions   | lowest       |
//!
//! Layer indices in scores and plans are conv ordinals (0 = first conv).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::entstats::{trace_stats, FilterStats, QuantSpec};
use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, Network, EVAL_CHUNK};
use crate::trace::TraceFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[serde(alias = "cond-ent")]
    CondEnt,
    #[serde(alias = "act-ent")]
    ActEnt,
    L1,
    Apoz,
    Taylor,
}

impl Criterion {
    pub const ALL: [Criterion; 5] =
        [Criterion::CondEnt, Criterion::ActEnt, Criterion::L1, Criterion::Apoz, Criterion::Taylor];

    pub fn default_direction(self) -> Direction {
        match self {
            Criterion::Apoz => Direction::Descending,
            _ => Direction::Ascending,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::CondEnt => "cond-ent",
            Criterion::ActEnt => "act-ent",
            Criterion::L1 => "l1",
            Criterion::Apoz => "apoz",
            Criterion::Taylor => "taylor",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s || c.name().replace('-', "_") == s)
            .ok_or_else(|| Error::Config(format!("unknown criterion {s:?}")))
    }
}

/// Which end of the score order is pruned first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Ascending,
    Descending,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ascending" | "asc" => Ok(Direction::Ascending),
            "descending" | "desc" => Ok(Direction::Descending),
            other => Err(Error::Config(format!("unknown direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterScore {
    pub layer: usize,
    pub filter: usize,
    pub criterion: Criterion,
    pub score: f64,
    /// Position in the layer's prune order (0 = pruned first).
    pub prune_rank: usize,
}

fn prune_order(a: &FilterScore, b: &FilterScore, direction: Direction) -> std::cmp::Ordering {
    let by_score = match direction {
        Direction::Ascending => a.score.total_cmp(&b.score),
        Direction::Descending => b.score.total_cmp(&a.score),
    };
    by_score.then(a.layer.cmp(&b.layer)).then(a.filter.cmp(&b.filter))
}

/// Builds scores from `values[layer][filter]` and assigns per-layer ranks.
pub fn scores_from_values(values: &[Vec<f64>], criterion: Criterion, direction: Direction) -> Vec<FilterScore> {
    let mut out = Vec::new();
    for (layer, row) in values.iter().enumerate() {
        let mut scores: Vec<FilterScore> = row
            .iter()
            .enumerate()
            .map(|(filter, &score)| FilterScore { layer, filter, criterion, score, prune_rank: 0 })
            .collect();
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| prune_order(&scores[a], &scores[b], direction));
        for (rank, &i) in order.iter().enumerate() {
            scores[i].prune_rank = rank;
        }
        out.extend(scores);
    }
    out
}

fn stats_column(stats: &[Vec<FilterStats>], f: impl Fn(&FilterStats) -> f64) -> Vec<Vec<f64>> {
    stats.iter().map(|l| l.iter().map(&f).collect()).collect()
}

/// Conditional entropy per filter, from precomputed stats.
pub fn cond_ent_from_stats(stats: &[Vec<FilterStats>]) -> Vec<FilterScore> {
    scores_from_values(&stats_column(stats, |s| s.con_ent), Criterion::CondEnt, Direction::Ascending)
}

pub fn score_cond_ent(tf: &TraceFile, q: QuantSpec) -> Result<Vec<FilterScore>> {
    Ok(cond_ent_from_stats(&trace_stats(tf, q)?))
}

pub fn act_ent_from_stats(stats: &[Vec<FilterStats>]) -> Vec<FilterScore> {
    scores_from_values(&stats_column(stats, |s| s.act_ent), Criterion::ActEnt, Direction::Ascending)
}

pub fn score_act_ent(tf: &TraceFile, q: QuantSpec) -> Result<Vec<FilterScore>> {
    Ok(act_ent_from_stats(&trace_stats(tf, q)?))
}

/// Sum of absolute kernel weights per filter.
pub fn l1_values(net: &Network) -> Vec<Vec<f64>> {
    net.conv_layers()
        .into_iter()
        .map(|li| {
            let w = &net.layer_params(li).unwrap().weight;
            w.data().chunks_exact(w.row_len()).map(|k| k.iter().map(|v| v.abs()).sum()).collect()
        })
        .collect()
}

pub fn score_l1(net: &Network) -> Vec<FilterScore> {
    scores_from_values(&l1_values(net), Criterion::L1, Direction::Ascending)
}

fn is_zero(x: f64, act: Option<Activation>) -> bool {
    match act {
        Some(Activation::Relu) => x == 0.0,
        _ => x.abs() < 1e-12,
    }
}

/// Per conv layer, the activation following it (if any).
fn conv_activation_kinds(net: &Network) -> Vec<Option<Activation>> {
    net.conv_layers()
        .into_iter()
        .map(|li| match net.layers().get(li + 1) {
            Some(LayerSpec::Activation { function }) => Some(*function),
            _ => None,
        })
        .collect()
}

fn sum_layers(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    a.into_iter().zip(b).map(|(x, y)| x.into_iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

/// Fraction of exactly-zero outputs per filter over all samples and
/// spatial positions (`|x| < 1e-12` counts as zero for tanh maps).
pub fn apoz_values(net: &Network, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    let kinds = conv_activation_kinds(net);
    let widths = net.conv_widths();
    let zero = || widths.iter().map(|&n| vec![0.0; n]).collect::<Vec<Vec<f64>>>();
    let indices: Vec<usize> = (0..ds.len()).collect();
    let parts: Vec<Result<Vec<Vec<f64>>>> = indices
        .par_chunks(EVAL_CHUNK)
        .map(|idx| {
            let (x, _) = ds.batch(idx);
            let pass = net.forward(&x)?;
            let mut counts = zero();
            for (layer, fmap) in pass.conv_activations.iter().enumerate() {
                let plane = fmap.row_len() / widths[layer];
                for (k, p) in fmap.data().chunks_exact(plane).enumerate() {
                    counts[layer][k % widths[layer]] += p.iter().filter(|&&v| is_zero(v, kinds[layer])).count() as f64;
                }
            }
            Ok(counts)
        })
        .collect();
    let mut total = zero();
    for p in parts {
        total = sum_layers(total, p?);
    }
    let planes: Vec<usize> = net
        .conv_layers()
        .iter()
        .map(|&li| {
            let s = net.output_shape(net.feature_map_layer(li));
            s[1] * s[2]
        })
        .collect();
    Ok(total
        .into_iter()
        .enumerate()
        .map(|(l, row)| row.into_iter().map(|c| c / (ds.len() * planes[l]) as f64).collect())
        .collect())
}

pub fn score_apoz(net: &Network, ds: &Dataset) -> Result<Vec<FilterScore>> {
    Ok(scores_from_values(&apoz_values(net, ds)?, Criterion::Apoz, Direction::Descending))
}

/// `|mean(z * dC/dz)|` per filter, the mean running jointly over samples
/// and spatial positions; `dC/dz` is each sample's own loss gradient.
pub fn taylor_values(net: &Network, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    let widths = net.conv_widths();
    let zero = || widths.iter().map(|&n| vec![0.0; n]).collect::<Vec<Vec<f64>>>();
    let indices: Vec<usize> = (0..ds.len()).collect();
    let parts: Vec<Result<Vec<Vec<f64>>>> = indices
        .par_chunks(EVAL_CHUNK)
        .map(|idx| {
            let (x, y) = ds.batch(idx);
            let g = net.loss_and_grads(&x, &y)?;
            let mut sums = zero();
            for (layer, (z, dz)) in g.conv_activations.iter().zip(&g.activation_grads).enumerate() {
                let plane = z.row_len() / widths[layer];
                for (k, (pz, pg)) in z.data().chunks_exact(plane).zip(dz.data().chunks_exact(plane)).enumerate() {
                    sums[layer][k % widths[layer]] += pz.iter().zip(pg).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            Ok(sums)
        })
        .collect();
    let mut total = zero();
    for p in parts {
        total = sum_layers(total, p?);
    }
    let planes: Vec<usize> = net
        .conv_layers()
        .iter()
        .map(|&li| {
            let s = net.output_shape(net.feature_map_layer(li));
            s[1] * s[2]
        })
        .collect();
    Ok(total
        .into_iter()
        .enumerate()
        .map(|(l, row)| row.into_iter().map(|s| (s / (ds.len() * planes[l]) as f64).abs()).collect())
        .collect())
}

pub fn score_taylor(net: &Network, ds: &Dataset) -> Result<Vec<FilterScore>> {
    Ok(scores_from_values(&taylor_values(net, ds)?, Criterion::Taylor, Direction::Ascending))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Global,
    PerLayer,
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Scope::Global),
            "layer" | "per-layer" | "per_layer" => Ok(Scope::PerLayer),
            other => Err(Error::Config(format!("unknown scope {other:?} (global|layer)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Amount {
    Count(usize),
    Fraction(f64),
}

impl FromStr for Amount {
    type Err = Error;

    /// `3` is a count; `0.25` or `1/16` is a fraction.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad amount {s:?}"));
        if let Some((a, b)) = s.split_once('/') {
            let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            return Ok(Amount::Fraction(a / b));
        }
        if let Ok(n) = s.parse::<usize>() {
            return Ok(Amount::Count(n));
        }
        let f: f64 = s.parse().map_err(|_| bad())?;
        if !(0.0..=1.0).contains(&f) {
            return Err(bad());
        }
        Ok(Amount::Fraction(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub scope: Scope,
    pub amount: Amount,
    /// `None` uses the criterion's default direction.
    pub direction: Option<Direction>,
    /// Keep at least one filter per layer by skipping candidates instead of
    /// rejecting the selection.
    pub clamp_min_width: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSelection {
    pub layer: usize,
    /// `true` = keep (the selection vector).
    pub keep: Vec<bool>,
    pub removed: Vec<usize>,
}

/// A removed filter's replacement constant for bias compensation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Compensation {
    pub layer: usize,
    pub filter: usize,
    pub a_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrunePlan {
    pub criterion: Criterion,
    pub scope: Scope,
    pub amount: Amount,
    pub direction: Direction,
    pub layers: Vec<LayerSelection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compensation: Vec<Compensation>,
}

impl PrunePlan {
    pub fn removed_count(&self) -> usize {
        self.layers.iter().map(|l| l.removed.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.removed_count() == 0
    }

    /// `(layer, filter)` pairs in layer-major order.
    pub fn removed(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layers.iter().flat_map(|l| l.removed.iter().map(move |&f| (l.layer, f)))
    }

    /// Checks the plan against the current conv widths.
    pub fn validate(&self, widths: &[usize]) -> Result<()> {
        if self.layers.len() != widths.len() {
            return Err(Error::Plan(format!("plan covers {} conv layers, network has {}", self.layers.len(), widths.len())));
        }
        for (sel, &n) in self.layers.iter().zip(widths) {
            if sel.keep.len() != n {
                return Err(Error::Plan(format!("layer {}: mask of {} for {n} filters", sel.layer, sel.keep.len())));
            }
            let from_mask: Vec<usize> = sel.keep.iter().enumerate().filter(|(_, &k)| !k).map(|(i, _)| i).collect();
            if from_mask != sel.removed {
                return Err(Error::Plan(format!("layer {}: removed list disagrees with keep mask", sel.layer)));
            }
            if sel.removed.len() >= n {
                return Err(Error::EmptiesLayer { layer: sel.layer });
            }
        }
        Ok(())
    }

    /// Attaches the max-`ent_i` activation of every removed filter.
    pub fn with_compensation(mut self, stats: &[Vec<FilterStats>]) -> Self {
        self.compensation = self
            .removed()
            .map(|(layer, filter)| Compensation { layer, filter, a_star: stats[layer][filter].max_ent_activation })
            .collect();
        self
    }
}

/// Picks the filters to remove. Global scope ranks all layers jointly;
/// per-layer scope takes `ceil(fraction * n_l)` (or `count`) from each
/// layer. Ties resolve by `(layer, filter)`.
pub fn rank_and_select(scores: &[FilterScore], widths: &[usize], opts: &SelectOptions) -> Result<PrunePlan> {
    let criterion = scores.first().map(|s| s.criterion).unwrap_or(Criterion::CondEnt);
    let direction = opts.direction.unwrap_or(criterion.default_direction());
    if let Some(s) = scores.iter().find(|s| s.layer >= widths.len() || s.filter >= widths[s.layer]) {
        return Err(Error::Plan(format!("score for layer {} filter {} is out of range", s.layer, s.filter)));
    }
    if let Some(s) = scores.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::Plan(format!("non-finite score for layer {} filter {}", s.layer, s.filter)));
    }
    if let Amount::Fraction(f) = opts.amount {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Config(format!("fraction {f} outside [0, 1]")));
        }
    }
    let mut keep: Vec<Vec<bool>> = widths.iter().map(|&n| vec![true; n]).collect();
    let mut ordered: Vec<&FilterScore> = scores.iter().collect();
    ordered.sort_by(|a, b| prune_order(a, b, direction));

    match opts.scope {
        Scope::Global => {
            let total: usize = widths.iter().sum();
            let r = match opts.amount {
                Amount::Count(r) => r,
                Amount::Fraction(f) => (f * total as f64).ceil() as usize,
            };
            let mut removed = vec![0usize; widths.len()];
            let mut taken = 0;
            for s in ordered {
                if taken == r {
                    break;
                }
                if removed[s.layer] + 1 >= widths[s.layer] {
                    if opts.clamp_min_width {
                        continue;
                    }
                    return Err(Error::EmptiesLayer { layer: s.layer });
                }
                removed[s.layer] += 1;
                keep[s.layer][s.filter] = false;
                taken += 1;
            }
        }
        Scope::PerLayer => {
            for (layer, &n) in widths.iter().enumerate() {
                let mut r = match opts.amount {
                    Amount::Count(r) => r,
                    Amount::Fraction(f) => (f * n as f64).ceil() as usize,
                };
                if r >= n {
                    if !opts.clamp_min_width {
                        return Err(Error::EmptiesLayer { layer });
                    }
                    r = n.saturating_sub(1);
                }
                for s in ordered.iter().filter(|s| s.layer == layer).take(r) {
                    keep[layer][s.filter] = false;
                }
            }
        }
    }

    Ok(PrunePlan {
        criterion,
        scope: opts.scope,
        amount: opts.amount,
        direction,
        layers: keep
            .into_iter()
            .enumerate()
            .map(|(layer, keep)| {
                let removed = keep.iter().enumerate().filter(|(_, &k)| !k).map(|(i, _)| i).collect();
                LayerSelection { layer, keep, removed }
            })
            .collect(),
        compensation: Vec::new(),
    })
}
