//! Two-phase pruning with fine-tuning (2PFPCE), the criteria comparison
//! grid, and the inference benchmark.
//!
//! Phase I removes the globally lowest-`con_ent` filters a few at a time
//! and fine-tunes after each step. Phase II removes `ceil(fraction * n_l)`
//! filters from every layer per step, folds each removed filter's modal
//! activation into the consumer bias, and fine-tunes every few steps. Both
//! phases stop at the first step whose validation accuracy falls below
//! `baseline - threshold` and return the network from before that step.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::criteria::{
    act_ent_from_stats, cond_ent_from_stats, rank_and_select, score_apoz, score_l1, score_taylor, Amount, Criterion,
    Direction, FilterScore, PrunePlan, Scope, SelectOptions,
};
use crate::data::{add_gaussian_noise, Dataset, NoiseSpec};
use crate::entstats::{trace_stats, FilterStats, QuantSpec};
use crate::error::{Error, Result};
use crate::nn::{evaluate, predict, train_updates, Network, Sgd, SgdConfig};
use crate::surgery::{bias_compensate, mark_freeze, remove_filters, surviving};
use crate::trace::{capture, Reduction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub sgd: SgdConfig,
    /// Minibatch updates per fine-tune round.
    pub updates: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig { sgd: SgdConfig::default(), updates: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub phase1_drop_threshold: f64,
    /// Measured against the original baseline, not the Phase I result.
    pub phase2_drop_threshold: f64,
    pub phase1_step: usize,
    pub phase1_max_iterations: Option<usize>,
    pub phase2_fraction: f64,
    /// Fine-tune after every k-th Phase II step; 0 disables it.
    pub phase2_finetune_every: usize,
    pub phase2_max_iterations: Option<usize>,
    pub finetune: FinetuneConfig,
    /// Share of the training set held out to gate pruning steps.
    pub validation_fraction: f64,
    /// Cap on the samples traced per step (`None` = whole fit split).
    pub trace_samples: Option<usize>,
    pub reduction: Reduction,
    pub quant: QuantSpec,
    pub direction: Option<Direction>,
    pub freeze_max_ent: bool,
    pub compensate_bias: bool,
    pub seed: u64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            phase1_drop_threshold: 0.01,
            phase2_drop_threshold: 0.02,
            phase1_step: 1,
            phase1_max_iterations: None,
            phase2_fraction: 1.0 / 16.0,
            phase2_finetune_every: 4,
            phase2_max_iterations: None,
            finetune: FinetuneConfig::default(),
            validation_fraction: 0.1,
            trace_samples: None,
            reduction: Reduction::Mean,
            quant: QuantSpec::default(),
            direction: None,
            freeze_max_ent: true,
            compensate_bias: true,
            seed: 0,
        }
    }
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64, open: bool| {
            let ok = if open { v > 0.0 && v < 1.0 } else { (0.0..=1.0).contains(&v) };
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} is outside its range")))
            }
        };
        frac("phase1_drop_threshold", self.phase1_drop_threshold, false)?;
        frac("phase2_drop_threshold", self.phase2_drop_threshold, false)?;
        frac("phase2_fraction", self.phase2_fraction, true)?;
        frac("validation_fraction", self.validation_fraction, true)?;
        if self.phase1_step == 0 {
            return Err(Error::Config("phase1_step must be at least 1".into()));
        }
        self.finetune.sgd.validate()?;
        self.quant.validate()
    }
}

/// The three datasets a pruning run reads.
#[derive(Debug, Clone)]
pub struct PruneData {
    /// Fine-tuning data.
    pub fit: Dataset,
    /// Gates every step.
    pub val: Dataset,
    /// Traced for entropy scores; a prefix of `fit`.
    pub trace: Dataset,
}

impl PruneData {
    pub fn from_train(train: &Dataset, cfg: &PhaseConfig) -> Self {
        let (fit, val) = train.split(cfg.validation_fraction, cfg.seed);
        let trace = match cfg.trace_samples {
            Some(n) if n < fit.len() => fit.take(n),
            _ => fit.clone(),
        };
        PruneData { fit, val, trace }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneLogEntry {
    pub iteration: usize,
    pub phase: Phase,
    pub removed: usize,
    pub filters_remaining: usize,
    pub flops: u64,
    pub bytes: u64,
    pub accuracy: f64,
    pub finetuned: bool,
    pub wall_time_ms: f64,
}

/// Why a phase ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    MinWidth,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    pub net: Network,
    pub log: Vec<PruneLogEntry>,
    pub accuracy: f64,
    pub stop: StopReason,
}

struct Step {
    candidate: Network,
    removed: usize,
}

fn entropy_stats(net: &Network, data: &PruneData, cfg: &PhaseConfig) -> Result<Vec<Vec<FilterStats>>> {
    let tf = capture(net, &data.trace, cfg.reduction)?;
    trace_stats(&tf, cfg.quant)
}

fn prune_step(net: &Network, data: &PruneData, cfg: &PhaseConfig, opts: SelectOptions, compensate: bool) -> Result<Option<Step>> {
    let stats = entropy_stats(net, data, cfg)?;
    let scores = cond_ent_from_stats(&stats);
    let mut plan = rank_and_select(&scores, &net.conv_widths(), &opts)?;
    if plan.is_empty() {
        return Ok(None);
    }
    let mut candidate = if compensate {
        plan = plan.with_compensation(&stats);
        bias_compensate(net, &plan.compensation)?
    } else {
        net.clone()
    };
    candidate = remove_filters(&candidate, &plan)?;
    if cfg.freeze_max_ent {
        candidate = refreeze(candidate, &stats, &plan)?;
    }
    Ok(Some(Step { candidate, removed: plan.removed_count() }))
}

/// Each pruned layer keeps exactly one frozen filter: its surviving
/// maximum activation-entropy filter.
fn refreeze(net: Network, stats: &[Vec<FilterStats>], plan: &PrunePlan) -> Result<Network> {
    let pruned: Vec<usize> = plan.layers.iter().filter(|l| !l.removed.is_empty()).map(|l| l.layer).collect();
    let act_ent: Vec<Vec<f64>> = stats.iter().map(|l| l.iter().map(|s| s.act_ent).collect()).collect();
    let act_ent = surviving(&act_ent, plan);
    let convs = net.conv_layers();
    let (input_shape, layers, params, mut freeze) = net.into_parts();
    for &l in &pruned {
        freeze.remove(&convs[l]);
    }
    let net = Network::from_parts(&input_shape, layers, params, freeze)?;
    mark_freeze(&net, &act_ent, &pruned)
}

fn finetune(net: &mut Network, data: &PruneData, cfg: &PhaseConfig, seed: u64) -> Result<()> {
    if cfg.finetune.updates == 0 {
        return Ok(());
    }
    let mut sgd = Sgd::new(SgdConfig { seed, ..cfg.finetune.sgd.clone() });
    train_updates(net, &data.fit, &mut sgd, cfg.finetune.updates, seed)?;
    Ok(())
}

fn entry(iteration: usize, phase: Phase, removed: usize, net: &Network, accuracy: f64, finetuned: bool, t: Instant) -> PruneLogEntry {
    PruneLogEntry {
        iteration,
        phase,
        removed,
        filters_remaining: net.total_filters(),
        flops: net.count_flops(),
        bytes: net.param_bytes(),
        accuracy,
        finetuned,
        wall_time_ms: t.elapsed().as_secs_f64() * 1e3,
    }
}

fn step_seed(cfg: &PhaseConfig, phase: Phase, iteration: usize) -> u64 {
    let tag = match phase {
        Phase::One => 1u64,
        Phase::Two => 2,
    };
    cfg.seed ^ (tag << 56) ^ (iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Phase I. `baseline` is the validation accuracy the threshold is
/// measured against.
pub fn phase1_global(net: &Network, data: &PruneData, cfg: &PhaseConfig, baseline: f64) -> Result<PhaseOutcome> {
    cfg.validate()?;
    let floor = baseline - cfg.phase1_drop_threshold;
    let opts = SelectOptions {
        scope: Scope::Global,
        amount: Amount::Count(cfg.phase1_step),
        direction: cfg.direction,
        clamp_min_width: true,
    };
    let mut current = net.clone();
    let mut accuracy = baseline;
    let mut log = Vec::new();
    let mut iteration = 0;
    let stop = loop {
        if cfg.phase1_max_iterations.is_some_and(|m| iteration >= m) {
            break StopReason::MaxIterations;
        }
        let t = Instant::now();
        let Some(Step { mut candidate, removed }) = prune_step(&current, data, cfg, opts, false)? else {
            break StopReason::MinWidth;
        };
        iteration += 1;
        finetune(&mut candidate, data, cfg, step_seed(cfg, Phase::One, iteration))?;
        let acc = evaluate(&candidate, &data.val)?;
        if acc < floor {
            break StopReason::Threshold;
        }
        log.push(entry(iteration, Phase::One, removed, &candidate, acc, cfg.finetune.updates > 0, t));
        current = candidate;
        accuracy = acc;
    };
    Ok(PhaseOutcome { net: current, log, accuracy, stop })
}

/// Phase II. `baseline` is the original network's validation accuracy.
pub fn phase2_layerwise(net: &Network, data: &PruneData, cfg: &PhaseConfig, baseline: f64) -> Result<PhaseOutcome> {
    cfg.validate()?;
    let floor = baseline - cfg.phase2_drop_threshold;
    let opts = SelectOptions {
        scope: Scope::PerLayer,
        amount: Amount::Fraction(cfg.phase2_fraction),
        direction: cfg.direction,
        clamp_min_width: true,
    };
    let mut current = net.clone();
    let mut accuracy = evaluate(net, &data.val)?;
    let mut log = Vec::new();
    let mut iteration = 0;
    let stop = loop {
        if cfg.phase2_max_iterations.is_some_and(|m| iteration >= m) {
            break StopReason::MaxIterations;
        }
        let t = Instant::now();
        let Some(Step { mut candidate, removed }) = prune_step(&current, data, cfg, opts, cfg.compensate_bias)? else {
            break StopReason::MinWidth;
        };
        iteration += 1;
        let tune = cfg.phase2_finetune_every > 0 && iteration % cfg.phase2_finetune_every == 0;
        if tune {
            finetune(&mut candidate, data, cfg, step_seed(cfg, Phase::Two, iteration))?;
        }
        let acc = evaluate(&candidate, &data.val)?;
        if acc < floor {
            break StopReason::Threshold;
        }
        log.push(entry(iteration, Phase::Two, removed, &candidate, acc, tune && cfg.finetune.updates > 0, t));
        current = candidate;
        accuracy = acc;
    };
    Ok(PhaseOutcome { net: current, log, accuracy, stop })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub repeats: usize,
    /// Samples per timed pass.
    pub samples: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { repeats: 10, samples: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub median_ms: f64,
    pub runs_ms: Vec<f64>,
    pub samples: usize,
    pub batch_size: usize,
}

/// Median wall time of `repeats` inference passes over the first
/// `samples` samples of `ds`, after one untimed warm-up pass.
pub fn bench_inference(net: &Network, ds: &Dataset, cfg: BenchConfig) -> Result<BenchResult> {
    if cfg.repeats == 0 {
        return Err(Error::Config("bench repeats must be at least 1".into()));
    }
    let ds = ds.take(cfg.samples.min(ds.len()));
    predict(net, &ds)?;
    let mut runs_ms = Vec::with_capacity(cfg.repeats);
    for _ in 0..cfg.repeats {
        let t = Instant::now();
        std::hint::black_box(predict(net, &ds)?);
        runs_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(BenchResult { median_ms: median(&runs_ms), runs_ms, samples: ds.len(), batch_size: crate::nn::EVAL_CHUNK })
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Size, accuracy and speed of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub filters: usize,
    pub layer_widths: Vec<usize>,
    pub bytes: u64,
    pub flops: u64,
    pub val_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub inference_ms: Option<f64>,
}

fn snapshot(net: &Network, val_accuracy: f64, test: Option<&Dataset>, bench: Option<BenchConfig>) -> Result<Snapshot> {
    let test_accuracy = test.map(|t| evaluate(net, t)).transpose()?;
    let inference_ms = match (test, bench) {
        (Some(t), Some(b)) => Some(bench_inference(net, t, b)?.median_ms),
        _ => None,
    };
    Ok(Snapshot {
        filters: net.total_filters(),
        layer_widths: net.conv_widths(),
        bytes: net.param_bytes(),
        flops: net.count_flops(),
        val_accuracy,
        test_accuracy,
        inference_ms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfpceReport {
    pub baseline: Snapshot,
    pub after_phase1: Snapshot,
    pub pruned: Snapshot,
    pub phase1_stop: StopReason,
    pub phase2_stop: StopReason,
    /// `1 - filters_after / filters_before`.
    pub pruning_ratio: f64,
    pub flops_reduction: f64,
    pub bytes_reduction: f64,
    /// `1 - time_after / time_before`, when benchmarked.
    pub time_reduction: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PfpceOutcome {
    pub net: Network,
    pub log: Vec<PruneLogEntry>,
    pub report: PfpceReport,
}

/// Phase I then Phase II. `test`, when given, is evaluated and benchmarked
/// before and after; it never influences pruning decisions.
pub fn run_2pfpce(
    net: &Network,
    data: &PruneData,
    test: Option<&Dataset>,
    cfg: &PhaseConfig,
    bench: Option<BenchConfig>,
) -> Result<PfpceOutcome> {
    cfg.validate()?;
    let baseline_acc = evaluate(net, &data.val)?;
    let baseline = snapshot(net, baseline_acc, test, bench)?;
    let p1 = phase1_global(net, data, cfg, baseline_acc)?;
    let after_phase1 = snapshot(&p1.net, p1.accuracy, test, None)?;
    let p2 = phase2_layerwise(&p1.net, data, cfg, baseline_acc)?;
    let pruned = snapshot(&p2.net, p2.accuracy, test, bench)?;
    let mut log = p1.log;
    log.extend(p2.log);
    let time_reduction = match (baseline.inference_ms, pruned.inference_ms) {
        (Some(a), Some(b)) => Some(1.0 - b / a),
        _ => None,
    };
    let report = PfpceReport {
        pruning_ratio: 1.0 - pruned.filters as f64 / baseline.filters as f64,
        flops_reduction: baseline.flops as f64 / pruned.flops as f64,
        bytes_reduction: baseline.bytes as f64 / pruned.bytes as f64,
        time_reduction,
        phase1_stop: p1.stop,
        phase2_stop: p2.stop,
        baseline,
        after_phase1,
        pruned,
    };
    Ok(PfpceOutcome { net: p2.net, log, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub finetune: FinetuneConfig,
    pub reduction: Reduction,
    pub quant: QuantSpec,
    pub seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig { finetune: FinetuneConfig::default(), reduction: Reduction::Mean, quant: QuantSpec::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareCell {
    pub criterion: Criterion,
    pub ratio: f64,
    pub filters_remaining: usize,
    pub flops: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareGrid {
    pub baseline_accuracy: f64,
    pub criteria: Vec<Criterion>,
    pub ratios: Vec<f64>,
    /// Criterion-major.
    pub cells: Vec<CompareCell>,
}

impl CompareGrid {
    pub fn cell(&self, criterion: Criterion, ratio: f64) -> Option<&CompareCell> {
        self.cells.iter().find(|c| c.criterion == criterion && c.ratio == ratio)
    }
}

/// Scores `net` under one criterion. `score_data` feeds the trace- and
/// data-driven criteria.
pub fn score(net: &Network, criterion: Criterion, score_data: &Dataset, reduction: Reduction, q: QuantSpec) -> Result<Vec<FilterScore>> {
    match criterion {
        Criterion::CondEnt | Criterion::ActEnt => {
            let stats = trace_stats(&capture(net, score_data, reduction)?, q)?;
            Ok(if criterion == Criterion::CondEnt { cond_ent_from_stats(&stats) } else { act_ent_from_stats(&stats) })
        }
        Criterion::L1 => Ok(score_l1(net)),
        Criterion::Apoz => score_apoz(net, score_data),
        Criterion::Taylor => score_taylor(net, score_data),
    }
}

/// One-shot layer-wise pruning of `ratio` of every layer under each
/// criterion, followed by the same fine-tune budget, scored on `eval`.
pub fn criteria_comparison(
    net: &Network,
    data: &PruneData,
    eval: &Dataset,
    criteria: &[Criterion],
    ratios: &[f64],
    cfg: &CompareConfig,
) -> Result<CompareGrid> {
    cfg.finetune.sgd.validate()?;
    cfg.quant.validate()?;
    let baseline_accuracy = evaluate(net, eval)?;
    let mut cells = Vec::with_capacity(criteria.len() * ratios.len());
    for &criterion in criteria {
        let scores = score(net, criterion, &data.trace, cfg.reduction, cfg.quant)?;
        for &ratio in ratios {
            let opts = SelectOptions {
                scope: Scope::PerLayer,
                amount: Amount::Fraction(ratio),
                direction: None,
                clamp_min_width: true,
            };
            let plan = rank_and_select(&scores, &net.conv_widths(), &opts)?;
            let mut pruned = remove_filters(net, &plan)?;
            if cfg.finetune.updates > 0 {
                let mut sgd = Sgd::new(SgdConfig { seed: cfg.seed, ..cfg.finetune.sgd.clone() });
                train_updates(&mut pruned, &data.fit, &mut sgd, cfg.finetune.updates, cfg.seed)?;
            }
            cells.push(CompareCell {
                criterion,
                ratio,
                filters_remaining: pruned.total_filters(),
                flops: pruned.count_flops(),
                accuracy: evaluate(&pruned, eval)?,
            });
        }
    }
    Ok(CompareGrid { baseline_accuracy, criteria: criteria.to_vec(), ratios: ratios.to_vec(), cells })
}

/// Per-layer entropy aggregates of one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub std: f64,
    pub layer: usize,
    pub filters: usize,
    /// Mean over the layer's filters.
    pub act_ent: f64,
    pub con_ent: f64,
    pub mutual_info: f64,
    pub loss_ent: f64,
    pub accuracy: f64,
}

/// Adds clamped Gaussian noise of each `std` to `ds`, traces `net` on the
/// noisy copy and aggregates entropies per conv layer. Rows are ordered by
/// `std` position, then layer.
pub fn noise_sweep(net: &Network, ds: &Dataset, stds: &[f64], seed: u64, reduction: Reduction, q: QuantSpec) -> Result<Vec<NoiseRow>> {
    let mut rows = Vec::with_capacity(stds.len() * net.conv_layers().len());
    for &std in stds {
        let noisy = add_gaussian_noise(ds, NoiseSpec { std, seed })?;
        let stats = trace_stats(&capture(net, &noisy, reduction)?, q)?;
        let accuracy = evaluate(net, &noisy)?;
        for (layer, filters) in stats.iter().enumerate() {
            let n = filters.len() as f64;
            let mean = |f: fn(&FilterStats) -> f64| filters.iter().map(f).sum::<f64>() / n;
            rows.push(NoiseRow {
                std,
                layer,
                filters: filters.len(),
                act_ent: mean(|s| s.act_ent),
                con_ent: mean(|s| s.con_ent),
                mutual_info: mean(|s| s.mutual_info),
                loss_ent: filters[0].loss_ent,
                accuracy,
            });
        }
    }
    Ok(rows)
}
