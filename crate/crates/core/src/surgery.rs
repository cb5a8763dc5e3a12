//! Structural filter removal.
//!
//! Removing filter `f` of a conv layer drops its kernel and bias entry,
//! and the matching input slice of the consumer: input channel `f` of the
//! next conv, or the `H*W` columns of channel `f` in a dense layer that
//! reads the flattened map. Activations and pooling in between are
//! channel-wise and need no change.

use std::collections::{BTreeMap, BTreeSet};

use crate::criteria::{Compensation, PrunePlan};
use crate::entstats::{trace_stats, QuantSpec};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network};
use crate::tensor::Tensor;
use crate::trace::TraceFile;

/// The layer that reads a conv layer's channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consumer {
    Conv { layer: usize },
    /// Dense layer behind a flatten; each channel owns `plane` columns.
    Dense { layer: usize, plane: usize },
}

/// Finds the consumer of conv layer `layer` (a layer-list index).
pub fn consumer_of(net: &Network, layer: usize) -> Result<Consumer> {
    let layers = net.layers();
    for j in layer + 1..layers.len() {
        match &layers[j] {
            LayerSpec::Activation { .. } | LayerSpec::MaxPool2d { .. } => continue,
            LayerSpec::Conv2d { .. } => return Ok(Consumer::Conv { layer: j }),
            LayerSpec::Flatten => {
                let s = net.layer_input_shape(j);
                return match layers.get(j + 1) {
                    Some(LayerSpec::Dense { .. }) => Ok(Consumer::Dense { layer: j + 1, plane: s[1] * s[2] }),
                    _ => Err(Error::Topology(format!("flatten after conv layer {layer} does not feed a dense layer"))),
                };
            }
            other => {
                return Err(Error::Topology(format!("conv layer {layer} feeds unsupported layer {j} ({other:?})")));
            }
        }
    }
    Err(Error::Topology(format!("conv layer {layer} has no consumer")))
}

/// Folds a removed filter's constant output `a_star` into the consumer's
/// bias, so the consumer still sees `a_star` where the channel used to be.
/// Exact when the consumer conv has no padding (or reads a dense input).
pub fn bias_compensate(net: &Network, removed: &[Compensation]) -> Result<Network> {
    let convs = net.conv_layers();
    let widths = net.conv_widths();
    let mut out = net.clone();
    for c in removed {
        if c.layer >= convs.len() || c.filter >= widths[c.layer] {
            return Err(Error::Plan(format!("compensation for missing filter {}:{}", c.layer, c.filter)));
        }
        if !c.a_star.is_finite() {
            return Err(Error::Plan(format!("non-finite a_star for filter {}:{}", c.layer, c.filter)));
        }
        match consumer_of(net, convs[c.layer])? {
            Consumer::Conv { layer } => {
                let p = out.layer_params_mut(layer).unwrap();
                let ws = p.weight.shape().to_vec();
                let (cin, kk) = (ws[1], ws[2] * ws[3]);
                for k in 0..ws[0] {
                    let start = (k * cin + c.filter) * kk;
                    let s: f64 = p.weight.data()[start..start + kk].iter().sum();
                    p.bias.data_mut()[k] += c.a_star * s;
                }
            }
            Consumer::Dense { layer, plane } => {
                let p = out.layer_params_mut(layer).unwrap();
                let inf = p.weight.shape()[1];
                for k in 0..p.bias.len() {
                    let start = k * inf + c.filter * plane;
                    let s: f64 = p.weight.data()[start..start + plane].iter().sum();
                    p.bias.data_mut()[k] += c.a_star * s;
                }
            }
        }
    }
    Ok(out)
}

fn kept(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect()
}

/// Keeps rows `rows` (axis 0) and, within each row, the `block`-sized
/// slices listed in `cols` (axis 1 grouped by `block`).
fn select(t: &Tensor, rows: &[usize], cols: &[usize], block: usize, new_shape: &[usize]) -> Tensor {
    let row_len = t.row_len();
    let mut data = Vec::with_capacity(rows.len() * cols.len() * block);
    for &r in rows {
        let row = &t.data()[r * row_len..(r + 1) * row_len];
        for &c in cols {
            data.extend_from_slice(&row[c * block..(c + 1) * block]);
        }
    }
    Tensor::from_vec(new_shape, data)
}

/// Removes every filter marked in `plan` and rewires consumers. Freeze
/// sets are remapped to the surviving indices.
pub fn remove_filters(net: &Network, plan: &PrunePlan) -> Result<Network> {
    let widths = net.conv_widths();
    plan.validate(&widths)?;
    let convs = net.conv_layers();

    // Per layer-list index: kept output channels, kept input blocks.
    let mut out_keep: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut in_keep: BTreeMap<usize, (Vec<usize>, usize)> = BTreeMap::new();
    for sel in &plan.layers {
        if sel.removed.is_empty() {
            continue;
        }
        let li = convs[sel.layer];
        let keep = kept(&sel.keep);
        match consumer_of(net, li)? {
            Consumer::Conv { layer } => in_keep.insert(layer, (keep.clone(), {
                let s = net.layer_params(layer).unwrap().weight.shape().to_vec();
                s[2] * s[3]
            })),
            Consumer::Dense { layer, plane } => in_keep.insert(layer, (keep.clone(), plane)),
        };
        out_keep.insert(li, keep);
    }

    let (input_shape, mut layers, mut params, freeze) = net.clone().into_parts();
    for (li, (layer, slot)) in layers.iter_mut().zip(params.iter_mut()).enumerate() {
        let (Some(p), true) = (slot.as_mut(), out_keep.contains_key(&li) || in_keep.contains_key(&li)) else {
            continue;
        };
        let ws = p.weight.shape().to_vec();
        let rows: Vec<usize> = out_keep.get(&li).cloned().unwrap_or_else(|| (0..ws[0]).collect());
        let (cols, block) = match in_keep.get(&li) {
            Some((c, b)) => (c.clone(), *b),
            None => ((0..ws[1]).collect(), p.weight.row_len() / ws[1]),
        };
        match layer {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                *in_channels = cols.len();
                *out_channels = rows.len();
                p.weight = select(&p.weight, &rows, &cols, block, &[rows.len(), cols.len(), *kernel, *kernel]);
            }
            LayerSpec::Dense { in_features, out_features } => {
                *in_features = cols.len() * block;
                p.weight = select(&p.weight, &rows, &cols, block, &[*out_features, *in_features]);
            }
            _ => unreachable!("parameters on a non-parametric layer"),
        }
        p.bias = Tensor::from_vec(&[rows.len()], rows.iter().map(|&r| p.bias.data()[r]).collect());
    }

    let freeze = freeze
        .into_iter()
        .map(|(li, set)| {
            let set = match out_keep.get(&li) {
                Some(keep) => keep.iter().enumerate().filter(|(_, old)| set.contains(old)).map(|(new, _)| new).collect(),
                None => set,
            };
            (li, set)
        })
        .collect();
    Network::from_parts(&input_shape, layers, params, freeze)
}

/// Freezes, in each listed conv layer (ordinal), the filter with the
/// largest activation entropy; ties go to the lowest index.
pub fn mark_freeze(net: &Network, act_ent: &[Vec<f64>], layers: &[usize]) -> Result<Network> {
    let convs = net.conv_layers();
    let widths = net.conv_widths();
    let mut out = net.clone();
    for &l in layers {
        let ents = act_ent.get(l).ok_or_else(|| Error::Plan(format!("no entropies for conv layer {l}")))?;
        if ents.len() != widths[l] {
            return Err(Error::Plan(format!("{} entropies for {} filters in conv layer {l}", ents.len(), widths[l])));
        }
        let best = ents
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, &e)| match acc {
                Some((_, b)) if e <= b => acc,
                _ => Some((i, e)),
            })
            .map(|(i, _)| i)
            .ok_or(Error::EmptiesLayer { layer: l })?;
        out.freeze_filter(convs[l], best)?;
    }
    Ok(out)
}

/// [`mark_freeze`] with entropies taken from a trace of `net`.
pub fn mark_freeze_from_trace(net: &Network, tf: &TraceFile, q: QuantSpec, layers: &[usize]) -> Result<Network> {
    let stats = trace_stats(tf, q)?;
    let ents: Vec<Vec<f64>> = stats.iter().map(|l| l.iter().map(|s| s.act_ent).collect()).collect();
    mark_freeze(net, &ents, layers)
}

/// Frozen filters as `(conv ordinal, filter)` sets.
pub fn frozen_by_ordinal(net: &Network) -> BTreeMap<usize, BTreeSet<usize>> {
    net.conv_layers()
        .iter()
        .enumerate()
        .filter_map(|(o, &li)| net.frozen(li).map(|s| (o, s.clone())))
        .collect()
}

/// Keeps only the entries of `values[layer]` that survive `plan`.
pub fn surviving<T: Clone>(values: &[Vec<T>], plan: &PrunePlan) -> Vec<Vec<T>> {
    values
        .iter()
        .zip(&plan.layers)
        .map(|(row, sel)| row.iter().zip(&sel.keep).filter(|(_, &k)| k).map(|(v, _)| v.clone()).collect())
        .collect()
}
