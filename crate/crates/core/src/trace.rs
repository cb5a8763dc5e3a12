//! Per-sample traces: the unreduced loss of every sample together with one
//! scalar per conv filter (the spatial reduction of its feature map).
//!
//! On disk a trace is line-delimited JSON: a header object on the first
//! line, then one record object per line in `sample_id` order. Floats are
//! written in shortest round-trip form, so reading a trace back yields the
//! identical bits.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Network, EVAL_CHUNK};

pub const TRACE_FORMAT: &str = "entprune-trace";
pub const TRACE_VERSION: u32 = 1;

/// How a `[H, W]` feature map collapses to one scalar per filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Mean,
    Max,
}

impl Reduction {
    pub fn reduce(self, plane: &[f64]) -> f64 {
        match self {
            Reduction::Mean => plane.iter().sum::<f64>() / plane.len() as f64,
            Reduction::Max => plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Reduction::Mean),
            "max" => Ok(Reduction::Max),
            other => Err(Error::Config(format!("unknown reduction {other:?} (mean|max)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub model_hash: String,
    /// Filters per conv layer.
    pub layer_sizes: Vec<usize>,
    pub dataset: String,
    pub reduction: Reduction,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub sample_id: usize,
    /// Cross-entropy in nats.
    pub loss: f64,
    /// `activations[layer][filter]`.
    pub activations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl TraceFile {
    pub fn validate(&self) -> Result<()> {
        if self.records.len() != self.header.samples {
            return Err(Error::LengthMismatch(format!(
                "header declares {} records, found {}",
                self.header.samples,
                self.records.len()
            )));
        }
        for r in &self.records {
            check_record(&self.header, r)?;
        }
        Ok(())
    }

    /// Column of one filter's activations across all records.
    pub fn filter_column(&self, layer: usize, filter: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.activations[layer][filter]).collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

fn check_record(header: &TraceHeader, r: &TraceRecord) -> Result<()> {
    let expected_layers = header.layer_sizes.len();
    if r.activations.len() != expected_layers {
        return Err(Error::TraceRecord {
            sample_id: r.sample_id,
            layer: r.activations.len().min(expected_layers),
            expected: header.layer_sizes.get(r.activations.len()).copied().unwrap_or(0),
            found: 0,
        });
    }
    for (layer, (acts, &want)) in r.activations.iter().zip(&header.layer_sizes).enumerate() {
        if acts.len() != want {
            return Err(Error::TraceRecord { sample_id: r.sample_id, layer, expected: want, found: acts.len() });
        }
    }
    if !(r.loss >= 0.0 && r.loss.is_finite()) {
        return Err(Error::NonFiniteLoss { sample: r.sample_id });
    }
    Ok(())
}

/// Reduces every conv feature map of every sample. Chunks may run in
/// parallel; records come back in sample order.
pub fn capture(net: &Network, ds: &Dataset, reduction: Reduction) -> Result<TraceFile> {
    let widths = net.conv_widths();
    let indices: Vec<usize> = (0..ds.len()).collect();
    let parts: Vec<Result<Vec<TraceRecord>>> = indices
        .par_chunks(EVAL_CHUNK)
        .map(|idx| {
            let (x, y) = ds.batch(idx);
            let (pass, losses) = net.forward_with_loss(&x, &y)?;
            let mut out = Vec::with_capacity(idx.len());
            for (s, &sample_id) in idx.iter().enumerate() {
                let activations = pass
                    .conv_activations
                    .iter()
                    .map(|fmap| {
                        let c = fmap.shape()[1];
                        let plane = fmap.row_len() / c;
                        fmap.row(s).chunks_exact(plane).map(|p| reduction.reduce(p)).collect()
                    })
                    .collect();
                out.push(TraceRecord { sample_id, loss: losses[s], activations });
            }
            Ok(out)
        })
        .collect();
    let mut records = Vec::with_capacity(ds.len());
    for p in parts {
        records.extend(p?);
    }
    Ok(TraceFile {
        header: TraceHeader {
            format: TRACE_FORMAT.into(),
            version: TRACE_VERSION,
            model_hash: checkpoint::model_hash(net),
            layer_sizes: widths,
            dataset: ds.name.clone(),
            reduction,
            samples: records.len(),
        },
        records,
    })
}

pub fn write(tf: &TraceFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    serde_json::to_writer(&mut w, &tf.header)?;
    w.write_all(b"\n").map_err(io)?;
    for r in &tf.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read(path: impl AsRef<Path>) -> Result<TraceFile> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Truncated("empty trace file".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: TraceHeader = serde_json::from_str(&first).map_err(|e| Error::Header(e.to_string()))?;
    if header.format != TRACE_FORMAT {
        return Err(Error::BadMagic { expected: TRACE_FORMAT.into(), found: header.format });
    }
    if header.version != TRACE_VERSION {
        return Err(Error::UnsupportedVersion(header.version));
    }
    let mut records = Vec::with_capacity(header.samples);
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let r: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Truncated(format!("record line {}: {e}", n + 2)))?;
        check_record(&header, &r)?;
        records.push(r);
    }
    let tf = TraceFile { header, records };
    if tf.records.len() != tf.header.samples {
        return Err(Error::Truncated(format!(
            "header declares {} records, file holds {}",
            tf.header.samples,
            tf.records.len()
        )));
    }
    Ok(tf)
}
