//! JSON configuration and the `entprune` subcommands.
//!
//! Every command reads an optional `--config file.json` (unknown keys are
//! rejected), applies flag overrides, and writes its outputs plus a copy of
//! the effective config into the output directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::criteria::{rank_and_select, Amount, Criterion, Direction, PrunePlan, Scope, SelectOptions};
use crate::data::{default_data_dir, load_mnist, synthetic, Dataset, MnistSplit, SyntheticSpec};
use crate::driver::{
    bench_inference, criteria_comparison, noise_sweep, run_2pfpce, score, BenchConfig, BenchResult, CompareConfig,
    CompareGrid, FinetuneConfig, NoiseRow, PfpceOutcome, PhaseConfig, PruneData,
};
use crate::entstats::{trace_stats, FilterStats, QuantSpec};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, evaluate, train_epochs, LayerSpec, Network, SgdConfig, TrainLogEntry};
use crate::presets;
use crate::report::{self, write_csv, write_json, write_text};
use crate::surgery::{bias_compensate, mark_freeze, remove_filters, surviving};
use crate::trace::{self, capture, Reduction, TraceFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// IDX files; `dir` defaults to `$ENTPRUNE_DATA_DIR` or the bundled subset.
    Mnist { dir: Option<PathBuf>, train_samples: Option<usize>, test_samples: Option<usize> },
    /// Gaussian class blobs; the last `test_fraction` of a shuffle is the test set.
    Synthetic { spec: SyntheticSpec, test_fraction: f64 },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Mnist { dir: None, train_samples: None, test_samples: None }
    }
}

impl DatasetSpec {
    /// `(train, test)`.
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSpec::Mnist { dir, train_samples, test_samples } => {
                let dir = dir.clone().unwrap_or_else(default_data_dir);
                let mut train = load_mnist(&dir, MnistSplit::Train)?;
                let mut test = load_mnist(&dir, MnistSplit::Test)?;
                if let Some(n) = train_samples {
                    train = train.take(*n);
                }
                if let Some(n) = test_samples {
                    test = test.take(*n);
                }
                Ok((train, test))
            }
            DatasetSpec::Synthetic { spec, test_fraction } => Ok(synthetic(spec).split(*test_fraction, spec.seed)),
        }
    }

    pub fn sample_shape(&self) -> Vec<usize> {
        match self {
            DatasetSpec::Mnist { .. } => presets::MNIST_SHAPE.to_vec(),
            DatasetSpec::Synthetic { spec, .. } => vec![spec.channels, spec.height, spec.width],
        }
    }
}

/// A named preset or an explicit layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerSpec>>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec { preset: Some("mnist2conv".into()), layers: None }
    }
}

impl ModelSpec {
    pub fn preset(name: &str) -> Self {
        ModelSpec { preset: Some(name.into()), layers: None }
    }

    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        match (&self.preset, &self.layers) {
            (Some(p), None) => presets::by_name(p),
            (None, Some(l)) => Ok(l.clone()),
            _ => Err(Error::Config("model needs exactly one of `preset` and `layers`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub sgd: SgdConfig,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { sgd: SgdConfig { learning_rate: 0.01, ..SgdConfig::default() }, epochs: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub criteria: Vec<Criterion>,
    pub ratios: Vec<f64>,
    pub finetune: FinetuneConfig,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            criteria: vec![Criterion::CondEnt, Criterion::ActEnt, Criterion::L1, Criterion::Apoz],
            ratios: vec![0.25, 0.5],
            finetune: FinetuneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub stds: Vec<f64>,
    pub seed: u64,
    /// Test samples traced per noise level (`None` = all).
    pub samples: Option<usize>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { stds: vec![0.0, 0.05, 0.1, 0.2, 0.4], seed: 7, samples: None }
    }
}

/// Everything a command needs. `quant`, `reduction` and `seed` apply to
/// every command, including the pruning phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub prune: PhaseConfig,
    pub compare: CompareSection,
    pub noise: NoiseSection,
    pub bench: BenchConfig,
    pub quant: QuantSpec,
    pub reduction: Reduction,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dataset: DatasetSpec::default(),
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            prune: PhaseConfig::default(),
            compare: CompareSection::default(),
            noise: NoiseSection::default(),
            bench: BenchConfig::default(),
            quant: QuantSpec::default(),
            reduction: Reduction::Mean,
            seed: 0,
            output_dir: PathBuf::from("runs/latest"),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.layers()?;
        self.train.sgd.validate()?;
        self.phase().validate()?;
        self.compare.finetune.sgd.validate()?;
        self.quant.validate()?;
        if let DatasetSpec::Synthetic { test_fraction, .. } = &self.dataset {
            if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                return Err(Error::Config(format!("test_fraction {test_fraction} outside (0, 1)")));
            }
        }
        if self.compare.ratios.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::Config("compare ratios must lie in [0, 1)".into()));
        }
        if self.noise.stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("noise stds must be finite and non-negative".into()));
        }
        if self.bench.repeats == 0 {
            return Err(Error::Config("bench repeats must be at least 1".into()));
        }
        Ok(())
    }

    /// The pruning config with the shared `quant`, `reduction` and `seed`.
    pub fn phase(&self) -> PhaseConfig {
        PhaseConfig { quant: self.quant, reduction: self.reduction, seed: self.seed, ..self.prune.clone() }
    }

    pub fn compare_config(&self) -> CompareConfig {
        CompareConfig { finetune: self.compare.finetune.clone(), reduction: self.reduction, quant: self.quant, seed: self.seed }
    }

    pub fn build_network(&self) -> Result<Network> {
        Network::new(&self.dataset.sample_shape(), self.model.layers()?, self.seed)
    }

    /// Train data split into the fine-tune, validation and trace sets.
    pub fn prune_data(&self, train: &Dataset) -> PruneData {
        PruneData::from_train(train, &self.phase())
    }
}

fn prepare_output(dir: &Path, cfg: &Config) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(dir.join(report::CONFIG_ECHO), cfg)
}

fn log(msg: impl AsRef<str>) {
    eprintln!("{}", msg.as_ref());
}

/// Trains from scratch (or from `resume`) on the fit split. The
/// validation split is held out so later pruning gates stay unbiased.
pub fn cmd_train(cfg: &Config, resume: Option<&Path>) -> Result<(Network, Vec<TrainLogEntry>)> {
    let (train, test) = cfg.dataset.load()?;
    let data = cfg.prune_data(&train);
    let mut net = match resume {
        Some(p) => checkpoint::load(p)?,
        None => cfg.build_network()?,
    };
    let sgd = SgdConfig { seed: cfg.seed, ..cfg.train.sgd.clone() };
    let log_entries = train_epochs(&mut net, &data.fit, &sgd, cfg.train.epochs)?;
    for e in &log_entries {
        log(format!("epoch {} loss {:.5}", e.epoch, e.mean_loss));
    }
    log(format!("test accuracy {:.4}", evaluate(&net, &test)?));
    prepare_output(&cfg.output_dir, cfg)?;
    checkpoint::save(&net, cfg.output_dir.join(report::CHECKPOINT))?;
    report::write_train_log(cfg.output_dir.join(report::TRAIN_LOG), &log_entries)?;
    Ok((net, log_entries))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

fn pick_split(cfg: &Config, split: SplitArg, samples: Option<usize>) -> Result<Dataset> {
    let (train, test) = cfg.dataset.load()?;
    let ds = match split {
        SplitArg::Train => cfg.prune_data(&train).fit,
        SplitArg::Test => test,
    };
    Ok(match samples {
        Some(n) => ds.take(n),
        None => ds,
    })
}

pub fn cmd_collect(cfg: &Config, model: &Path, split: SplitArg, samples: Option<usize>, out: &Path) -> Result<TraceFile> {
    let net = checkpoint::load(model)?;
    let ds = pick_split(cfg, split, samples)?;
    let tf = capture(&net, &ds, cfg.reduction)?;
    trace::write(&tf, out)?;
    log(format!("{} records, layers {:?}", tf.records.len(), tf.header.layer_sizes));
    Ok(tf)
}

pub fn cmd_stats(trace_path: &Path, q: QuantSpec, out: &Path) -> Result<Vec<FilterStats>> {
    let tf = trace::read(trace_path)?;
    let stats: Vec<FilterStats> = trace_stats(&tf, q)?.into_iter().flatten().collect();
    write_csv(out, &stats)?;
    Ok(stats)
}

/// Inputs for `score`.
#[derive(Debug, Clone)]
pub struct ScoreRequest {
    pub criterion: Criterion,
    pub scope: Scope,
    pub amount: Amount,
    pub direction: Option<Direction>,
    pub clamp: bool,
    pub model: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub samples: Option<usize>,
}

/// Scores filters, writes the scores CSV and returns the plan. Entropy
/// criteria attach bias-compensation constants to the plan.
pub fn cmd_score(cfg: &Config, req: &ScoreRequest, scores_out: &Path, plan_out: Option<&Path>) -> Result<PrunePlan> {
    let entropic = matches!(req.criterion, Criterion::CondEnt | Criterion::ActEnt);
    let (scores, widths, stats) = match (&req.trace, &req.model) {
        (Some(t), _) if entropic => {
            let tf = trace::read(t)?;
            let stats = trace_stats(&tf, cfg.quant)?;
            let scores = if req.criterion == Criterion::CondEnt {
                crate::criteria::cond_ent_from_stats(&stats)
            } else {
                crate::criteria::act_ent_from_stats(&stats)
            };
            (scores, tf.header.layer_sizes.clone(), Some(stats))
        }
        (_, Some(m)) => {
            let net = checkpoint::load(m)?;
            let ds = pick_split(cfg, SplitArg::Train, req.samples)?;
            let stats = if entropic { Some(trace_stats(&capture(&net, &ds, cfg.reduction)?, cfg.quant)?) } else { None };
            (score(&net, req.criterion, &ds, cfg.reduction, cfg.quant)?, net.conv_widths(), stats)
        }
        _ => return Err(Error::Config(format!("criterion {} needs --model (or --trace for entropy criteria)", req.criterion))),
    };
    report::write_scores(scores_out, &scores)?;
    let opts = SelectOptions { scope: req.scope, amount: req.amount, direction: req.direction, clamp_min_width: req.clamp };
    let mut plan = rank_and_select(&scores, &widths, &opts)?;
    if let Some(stats) = &stats {
        plan = plan.with_compensation(stats);
    }
    if let Some(p) = plan_out {
        write_json(p, &plan)?;
    }
    log(format!("{} filters selected", plan.removed_count()));
    Ok(plan)
}

/// Applies a plan. Compensation needs `a_star` for every removed filter;
/// freezing needs a trace of the unpruned model.
pub fn cmd_prune(
    cfg: &Config,
    model: &Path,
    plan_path: &Path,
    compensate: bool,
    freeze_trace: Option<&Path>,
    out: &Path,
) -> Result<Network> {
    let net = checkpoint::load(model)?;
    let plan: PrunePlan = report::read_json(plan_path).map_err(|e| match e {
        Error::Json(j) => Error::Plan(j.to_string()),
        other => other,
    })?;
    plan.validate(&net.conv_widths())?;
    let mut pruned = if compensate {
        for (layer, filter) in plan.removed() {
            if !plan.compensation.iter().any(|c| c.layer == layer && c.filter == filter) {
                return Err(Error::Plan(format!("no a_star for removed filter {layer}:{filter}")));
            }
        }
        bias_compensate(&net, &plan.compensation)?
    } else {
        net.clone()
    };
    pruned = remove_filters(&pruned, &plan)?;
    if let Some(t) = freeze_trace {
        let tf = trace::read(t)?;
        if tf.header.layer_sizes != net.conv_widths() {
            return Err(Error::Plan("freeze trace does not match the model".into()));
        }
        let stats = trace_stats(&tf, cfg.quant)?;
        let act: Vec<Vec<f64>> = stats.iter().map(|l| l.iter().map(|s| s.act_ent).collect()).collect();
        let layers: Vec<usize> = plan.layers.iter().filter(|l| !l.removed.is_empty()).map(|l| l.layer).collect();
        pruned = mark_freeze(&pruned, &surviving(&act, &plan), &layers)?;
    }
    checkpoint::save(&pruned, out)?;
    log(format!(
        "filters {} -> {}, FLOPs {} -> {}",
        net.total_filters(),
        pruned.total_filters(),
        net.count_flops(),
        pruned.count_flops()
    ));
    Ok(pruned)
}

fn load_or_train(cfg: &Config, model: Option<&Path>, data: &PruneData) -> Result<Network> {
    match model {
        Some(p) => checkpoint::load(p),
        None => {
            log("no --model given, training a baseline");
            let mut net = cfg.build_network()?;
            let sgd = SgdConfig { seed: cfg.seed, ..cfg.train.sgd.clone() };
            train_epochs(&mut net, &data.fit, &sgd, cfg.train.epochs)?;
            Ok(net)
        }
    }
}

pub fn cmd_2pfpce(cfg: &Config, model: Option<&Path>) -> Result<PfpceOutcome> {
    let (train, test) = cfg.dataset.load()?;
    let data = cfg.prune_data(&train);
    let net = load_or_train(cfg, model, &data)?;
    let out = run_2pfpce(&net, &data, Some(&test), &cfg.phase(), Some(cfg.bench))?;
    let dir = &cfg.output_dir;
    prepare_output(dir, cfg)?;
    checkpoint::save(&out.net, dir.join(report::CHECKPOINT))?;
    report::write_prune_log(dir.join(report::PRUNE_LOG), &out.log)?;
    write_json(dir.join(report::PFPCE_REPORT), &out.report)?;
    let md = report::pfpce_markdown(&out.report);
    write_text(dir.join(report::PFPCE_MARKDOWN), &md)?;
    log(md);
    Ok(out)
}

pub fn cmd_compare(cfg: &Config, model: Option<&Path>) -> Result<CompareGrid> {
    let (train, test) = cfg.dataset.load()?;
    let data = cfg.prune_data(&train);
    let net = load_or_train(cfg, model, &data)?;
    let grid = criteria_comparison(&net, &data, &test, &cfg.compare.criteria, &cfg.compare.ratios, &cfg.compare_config())?;
    prepare_output(&cfg.output_dir, cfg)?;
    write_json(cfg.output_dir.join(report::COMPARE_JSON), &grid)?;
    let md = report::compare_markdown(&grid);
    write_text(cfg.output_dir.join(report::COMPARE_MARKDOWN), &md)?;
    log(md);
    Ok(grid)
}

pub fn cmd_noise_sweep(cfg: &Config, model: Option<&Path>) -> Result<Vec<NoiseRow>> {
    let (train, test) = cfg.dataset.load()?;
    let data = cfg.prune_data(&train);
    let net = load_or_train(cfg, model, &data)?;
    let ds = match cfg.noise.samples {
        Some(n) => test.take(n),
        None => test,
    };
    let rows = noise_sweep(&net, &ds, &cfg.noise.stds, cfg.noise.seed, cfg.reduction, cfg.quant)?;
    prepare_output(&cfg.output_dir, cfg)?;
    report::write_noise_rows(cfg.output_dir.join(report::NOISE_CSV), &rows)?;
    log(report::noise_markdown(&rows));
    Ok(rows)
}

pub fn cmd_bench(cfg: &Config, model: &Path) -> Result<BenchResult> {
    let net = checkpoint::load(model)?;
    let (_, test) = cfg.dataset.load()?;
    let result = bench_inference(&net, &test, cfg.bench)?;
    prepare_output(&cfg.output_dir, cfg)?;
    write_json(cfg.output_dir.join(report::BENCH_JSON), &result)?;
    log(format!("median {:.3} ms over {} samples", result.median_ms, result.samples));
    Ok(result)
}

pub fn cmd_report(run_dir: &Path) -> Result<report::Summary> {
    let s = report::write_summary(run_dir)?;
    log(format!("{} run(s), {} curve points", s.runs.len(), s.curve.len()));
    Ok(s)
}

#[derive(Debug, Parser)]
#[command(name = "entprune", version, about = "Entropy-guided CNN filter pruning")]
pub struct Cli {
    /// Threads for batch parallelism (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eps_h: Option<f64>,
    #[arg(long)]
    pub reduction: Option<Reduction>,
    /// Model preset (mnist2conv|mini-vgg).
    #[arg(long)]
    pub preset: Option<String>,
}

impl Common {
    pub fn resolve(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.eps_h {
            cfg.quant.eps_h = e;
        }
        if let Some(r) = self.reduction {
            cfg.reduction = r;
        }
        if let Some(p) = &self.preset {
            cfg.model = ModelSpec::preset(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_list<T: FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(|x| x.trim().parse()).collect()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and save a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Capture a per-sample trace.
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value = "trace.jsonl")]
        trace: PathBuf,
    },
    /// Per-filter entropy statistics of a trace.
    Stats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "stats.csv")]
        csv: PathBuf,
    },
    /// Score filters and emit a prune plan.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "cond-ent")]
        criterion: Criterion,
        #[arg(long, default_value = "layer")]
        scope: Scope,
        #[arg(long, default_value = "1/16")]
        amount: Amount,
        #[arg(long)]
        direction: Option<Direction>,
        /// Keep one filter per layer instead of failing.
        #[arg(long)]
        clamp: bool,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value = "scores.csv")]
        csv: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Apply a prune plan to a checkpoint.
    Prune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        compensate_bias: bool,
        /// Trace of the unpruned model used to pick frozen filters.
        #[arg(long = "freeze-max-ent", value_name = "TRACE")]
        freeze_max_ent: Option<PathBuf>,
        #[arg(long, default_value = "pruned.2pfp")]
        output: PathBuf,
    },
    /// Run both pruning phases.
    #[command(name = "2pfpce")]
    Pfpce {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Compare criteria at fixed pruning ratios.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma list or `all`.
        #[arg(long)]
        criteria: Option<String>,
        #[arg(long)]
        ratios: Option<String>,
    },
    /// Layer entropies under input noise.
    NoiseSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        stds: Option<String>,
    },
    /// Median inference time of a checkpoint.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Consolidate a run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

struct F64List(Vec<f64>);

impl FromStr for F64List {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number {x:?}"))))
            .collect::<Result<Vec<_>>>()
            .map(F64List)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--workers: {e}")))?;
    }
    match cli.command {
        Command::Train { common, epochs, resume } => {
            let mut cfg = common.resolve()?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cmd_train(&cfg, resume.as_deref()).map(drop)
        }
        Command::Collect { common, model, split, samples, trace } => {
            cmd_collect(&common.resolve()?, &model, split, samples, &trace).map(drop)
        }
        Command::Stats { common, trace, csv } => cmd_stats(&trace, common.resolve()?.quant, &csv).map(drop),
        Command::Score { common, criterion, scope, amount, direction, clamp, model, trace, samples, csv, plan } => {
            let req = ScoreRequest { criterion, scope, amount, direction, clamp, model, trace, samples };
            cmd_score(&common.resolve()?, &req, &csv, plan.as_deref()).map(drop)
        }
        Command::Prune { common, model, plan, compensate_bias, freeze_max_ent, output } => {
            cmd_prune(&common.resolve()?, &model, &plan, compensate_bias, freeze_max_ent.as_deref(), &output).map(drop)
        }
        Command::Pfpce { common, model } => cmd_2pfpce(&common.resolve()?, model.as_deref()).map(drop),
        Command::Compare { common, model, criteria, ratios } => {
            let mut cfg = common.resolve()?;
            match criteria.as_deref() {
                Some("all") => cfg.compare.criteria = Criterion::ALL.to_vec(),
                Some(list) => cfg.compare.criteria = parse_list(list)?,
                None => {}
            }
            if let Some(r) = ratios {
                cfg.compare.ratios = r.parse::<F64List>()?.0;
            }
            cfg.validate()?;
            cmd_compare(&cfg, model.as_deref()).map(drop)
        }
        Command::NoiseSweep { common, model, stds } => {
            let mut cfg = common.resolve()?;
            if let Some(s) = stds {
                cfg.noise.stds = s.parse::<F64List>()?.0;
            }
            cfg.validate()?;
            cmd_noise_sweep(&cfg, model.as_deref()).map(drop)
        }
        Command::Bench { common, model, repeats, samples } => {
            let mut cfg = common.resolve()?;
            if let Some(r) = repeats {
                cfg.bench.repeats = r;
            }
            if let Some(s) = samples {
                cfg.bench.samples = s;
            }
            cfg.validate()?;
            cmd_bench(&cfg, &model).map(drop)
        }
        Command::Report { run_dir } => cmd_report(&run_dir).map(drop),
    }
}
