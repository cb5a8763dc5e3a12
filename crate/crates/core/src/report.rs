//! Run-directory files: CSV logs, Markdown tables and the consolidated
//! summary written by `entprune report`.
//!
//! CSV floats use the shortest representation that parses back to the
//! same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::criteria::FilterScore;
use crate::driver::{CompareGrid, NoiseRow, PfpceReport, PruneLogEntry};
use crate::error::{Error, Result};
use crate::nn::TrainLogEntry;

pub const CONFIG_ECHO: &str = "config.json";
pub const CHECKPOINT: &str = "model.2pfp";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const PRUNE_LOG: &str = "prune_log.csv";
pub const PFPCE_REPORT: &str = "report.json";
pub const PFPCE_MARKDOWN: &str = "report.md";
pub const COMPARE_JSON: &str = "compare.json";
pub const COMPARE_MARKDOWN: &str = "compare.md";
pub const NOISE_CSV: &str = "noise_sweep.csv";
pub const SCORES_CSV: &str = "scores.csv";
pub const BENCH_JSON: &str = "bench.json";
pub const SUMMARY_MARKDOWN: &str = "summary.md";
pub const CURVE_CSV: &str = "curve.csv";

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One row of the scores CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub layer: usize,
    pub filter: usize,
    pub criterion: String,
    pub score: f64,
    pub rank: usize,
}

impl From<&FilterScore> for ScoreRow {
    fn from(s: &FilterScore) -> Self {
        ScoreRow { layer: s.layer, filter: s.filter, criterion: s.criterion.to_string(), score: s.score, rank: s.prune_rank }
    }
}

pub fn write_scores(path: impl AsRef<Path>, scores: &[FilterScore]) -> Result<()> {
    write_csv(path, &scores.iter().map(ScoreRow::from).collect::<Vec<_>>())
}

pub fn write_train_log(path: impl AsRef<Path>, log: &[TrainLogEntry]) -> Result<()> {
    write_csv(path, log)
}

pub fn write_prune_log(path: impl AsRef<Path>, log: &[PruneLogEntry]) -> Result<()> {
    write_csv(path, log)
}

pub fn read_prune_log(path: impl AsRef<Path>) -> Result<Vec<PruneLogEntry>> {
    read_csv(path)
}

pub fn write_noise_rows(path: impl AsRef<Path>, rows: &[NoiseRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_noise_rows(path: impl AsRef<Path>) -> Result<Vec<NoiseRow>> {
    read_csv(path)
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

pub fn pfpce_markdown(r: &PfpceReport) -> String {
    let mut s = String::from("# 2PFPCE\n\n| | baseline | after phase I | pruned |\n|---|---|---|---|\n");
    let rows: [(&str, Box<dyn Fn(&crate::driver::Snapshot) -> String>); 7] = [
        ("filters", Box::new(|x| x.filters.to_string())),
        ("layer widths", Box::new(|x| format!("{:?}", x.layer_widths))),
        ("bytes", Box::new(|x| x.bytes.to_string())),
        ("FLOPs", Box::new(|x| x.flops.to_string())),
        ("val accuracy", Box::new(|x| pct(x.val_accuracy))),
        ("test accuracy", Box::new(|x| x.test_accuracy.map(pct).unwrap_or_else(|| "-".into()))),
        ("inference ms", Box::new(|x| x.inference_ms.map(|t| format!("{t:.2}")).unwrap_or_else(|| "-".into()))),
    ];
    for (name, f) in rows.iter() {
        let _ = writeln!(s, "| {name} | {} | {} | {} |", f(&r.baseline), f(&r.after_phase1), f(&r.pruned));
    }
    let _ = writeln!(s, "\npruning ratio {}, FLOPs {:.2}x smaller, bytes {:.2}x smaller", pct(r.pruning_ratio), r.flops_reduction, r.bytes_reduction);
    if let Some(t) = r.time_reduction {
        let _ = writeln!(s, "inference time reduced by {}", pct(t));
    }
    let _ = writeln!(s, "phase I stopped on {:?}, phase II on {:?}", r.phase1_stop, r.phase2_stop);
    s
}

/// Criteria as rows, ratios as columns.
pub fn compare_markdown(g: &CompareGrid) -> String {
    let mut s = format!("# Criteria comparison\n\nbaseline accuracy {}\n\n| criterion |", pct(g.baseline_accuracy));
    for r in &g.ratios {
        let _ = write!(s, " ratio {r} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(g.ratios.len()));
    s.push('\n');
    for &c in &g.criteria {
        let _ = write!(s, "| {c} |");
        for &r in &g.ratios {
            let cell = g.cell(c, r).map(|x| pct(x.accuracy)).unwrap_or_else(|| "-".into());
            let _ = write!(s, " {cell} |");
        }
        s.push('\n');
    }
    s
}

pub fn noise_markdown(rows: &[NoiseRow]) -> String {
    let mut s = String::from("| std | layer | act_ent | con_ent | MI | accuracy |\n|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(s, "| {} | {} | {:.4} | {:.4} | {:.4} | {} |", r.std, r.layer, r.act_ent, r.con_ent, r.mutual_info, pct(r.accuracy));
    }
    s
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// A point of the accuracy-vs-pruning-ratio curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub run: String,
    pub source: String,
    pub pruning_ratio: f64,
    pub filters_remaining: usize,
    pub flops: u64,
    pub accuracy: f64,
}

/// What [`consolidate`] found.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub runs: Vec<PathBuf>,
    pub curve: Vec<CurvePoint>,
    pub markdown: String,
}

fn run_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = vec![root.to_path_buf()];
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut subs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    subs.sort();
    dirs.extend(subs);
    let known = [PRUNE_LOG, PFPCE_REPORT, COMPARE_JSON, NOISE_CSV, BENCH_JSON];
    Ok(dirs.into_iter().filter(|d| known.iter().any(|f| d.join(f).is_file())).collect())
}

fn run_name(root: &Path, dir: &Path) -> String {
    match dir.strip_prefix(root) {
        Ok(p) if !p.as_os_str().is_empty() => p.display().to_string(),
        _ => ".".into(),
    }
}

/// Gathers every run under `root` (the directory itself and its direct
/// subdirectories) into one Markdown summary and a ratio-sorted curve.
pub fn consolidate(root: impl AsRef<Path>) -> Result<Summary> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::NoRuns(root.to_path_buf()));
    }
    let runs = run_dirs(root)?;
    if runs.is_empty() {
        return Err(Error::NoRuns(root.to_path_buf()));
    }
    let mut md = String::from("# Summary\n");
    let mut curve = Vec::new();
    for dir in &runs {
        let name = run_name(root, dir);
        let _ = writeln!(md, "\n## Run `{name}`\n");
        let report: Option<PfpceReport> =
            if dir.join(PFPCE_REPORT).is_file() { Some(read_json(dir.join(PFPCE_REPORT))?) } else { None };
        if let Some(r) = &report {
            md.push_str(&pfpce_markdown(r));
            md.push('\n');
        }
        if dir.join(PRUNE_LOG).is_file() {
            let log = read_prune_log(dir.join(PRUNE_LOG))?;
            let before = match (&report, log.first()) {
                (Some(r), _) => r.baseline.filters,
                (None, Some(e)) => e.filters_remaining + e.removed,
                (None, None) => 0,
            };
            let _ = writeln!(md, "prune log: {} steps\n\n| phase | iteration | filters | FLOPs | accuracy |\n|---|---|---|---|---|", log.len());
            for e in &log {
                let _ = writeln!(md, "| {:?} | {} | {} | {} | {} |", e.phase, e.iteration, e.filters_remaining, e.flops, pct(e.accuracy));
                curve.push(CurvePoint {
                    run: name.clone(),
                    source: format!("phase_{:?}", e.phase).to_lowercase(),
                    pruning_ratio: 1.0 - e.filters_remaining as f64 / before as f64,
                    filters_remaining: e.filters_remaining,
                    flops: e.flops,
                    accuracy: e.accuracy,
                });
            }
            md.push('\n');
        }
        if dir.join(COMPARE_JSON).is_file() {
            let g: CompareGrid = read_json(dir.join(COMPARE_JSON))?;
            md.push_str(&compare_markdown(&g));
            md.push('\n');
            for c in &g.cells {
                curve.push(CurvePoint {
                    run: name.clone(),
                    source: c.criterion.to_string(),
                    pruning_ratio: c.ratio,
                    filters_remaining: c.filters_remaining,
                    flops: c.flops,
                    accuracy: c.accuracy,
                });
            }
        }
        if dir.join(NOISE_CSV).is_file() {
            md.push_str("### Noise sweep\n\n");
            md.push_str(&noise_markdown(&read_noise_rows(dir.join(NOISE_CSV))?));
            md.push('\n');
        }
        if dir.join(BENCH_JSON).is_file() {
            let b: serde_json::Value = read_json(dir.join(BENCH_JSON))?;
            let _ = writeln!(md, "### Benchmark\n\n```json\n{}\n```\n", serde_json::to_string_pretty(&b)?);
        }
    }
    curve.sort_by(|a, b| a.pruning_ratio.total_cmp(&b.pruning_ratio).then_with(|| a.run.cmp(&b.run)));
    Ok(Summary { runs, curve, markdown: md })
}

/// [`consolidate`] and write `summary.md` and `curve.csv` into `root`.
pub fn write_summary(root: impl AsRef<Path>) -> Result<Summary> {
    let root = root.as_ref();
    let s = consolidate(root)?;
    write_text(root.join(SUMMARY_MARKDOWN), &s.markdown)?;
    write_csv(root.join(CURVE_CSV), &s.curve)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_of_monotone_and_reversed() {
        let x = [0.0, 0.05, 0.1, 0.2, 0.4];
        assert_eq!(spearman(&x, &[1.0, 2.0, 3.0, 10.0, 11.0]), 1.0);
        assert_eq!(spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]), -1.0);
    }

    #[test]
    fn ties_share_the_average_rank() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
