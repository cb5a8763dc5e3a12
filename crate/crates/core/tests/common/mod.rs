//! Test-only oracles shared by the integration tests.
#![allow(dead_code)]

use entprune::entstats::QuantSpec;

/// Entropies recomputed from raw (activation, loss) pairs by linear scans,
/// without histograms. Terms are summed in ascending order, the summation
/// convention of the library.
pub struct DirectEntropies {
    pub act_ent: f64,
    pub con_ent: f64,
    pub loss_ent: f64,
    pub mutual_info: f64,
}

fn term(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

fn ascending_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

fn bin(x: f64, q: QuantSpec) -> i32 {
    let v = (x * q.eps_h).floor();
    v.clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

fn distinct(v: &[i32]) -> Vec<i32> {
    let mut out: Vec<i32> = Vec::new();
    for &x in v {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

pub fn direct_entropies(pairs: &[(f64, f64)], q: QuantSpec) -> DirectEntropies {
    let a: Vec<i32> = pairs.iter().map(|p| bin(p.0, q)).collect();
    let l: Vec<i32> = pairs.iter().map(|p| bin(p.1, q)).collect();
    let n = pairs.len() as f64;
    let mut act_terms = Vec::new();
    let mut cond_terms = Vec::new();
    for i in distinct(&a) {
        let ci = a.iter().filter(|&&x| x == i).count() as f64;
        if i != 0 {
            act_terms.push(term(ci / n));
        }
        let inner: Vec<f64> = distinct(&l)
            .into_iter()
            .map(|j| a.iter().zip(&l).filter(|&(&x, &y)| x == i && y == j).count() as f64)
            .filter(|&c| c > 0.0)
            .map(|c| term(c / ci))
            .collect();
        cond_terms.push((ci / n) * ascending_sum(inner));
    }
    let loss_terms = distinct(&l).into_iter().map(|j| term(l.iter().filter(|&&y| y == j).count() as f64 / n)).collect();
    let con_ent = ascending_sum(cond_terms);
    let loss_ent = ascending_sum(loss_terms);
    DirectEntropies { act_ent: ascending_sum(act_terms), con_ent, loss_ent, mutual_info: loss_ent - con_ent }
}

/// `I(A; L) = sum p(a,l) log2(p(a,l) / (p(a) p(l)))`, a formula that
/// shares no intermediate with the histogram path.
pub fn mutual_information_joint(pairs: &[(i32, i32)]) -> f64 {
    let n = pairs.len() as f64;
    let mut seen: Vec<(i32, i32)> = Vec::new();
    let mut mi = 0.0;
    for &(i, j) in pairs {
        if seen.contains(&(i, j)) {
            continue;
        }
        seen.push((i, j));
        let pij = pairs.iter().filter(|&&p| p == (i, j)).count() as f64 / n;
        let pi = pairs.iter().filter(|p| p.0 == i).count() as f64 / n;
        let pj = pairs.iter().filter(|p| p.1 == j).count() as f64 / n;
        mi += pij * (pij / (pi * pj)).log2();
    }
    mi
}

use std::collections::BTreeMap;

use entprune::data::Dataset;
use entprune::nn::{LayerParams, LayerSpec, Network};
use entprune::Tensor;

/// A network from explicit `(weight, bias)` values, one entry per
/// parametric layer in order.
pub fn net_with(input: &[usize], layers: Vec<LayerSpec>, values: Vec<(Vec<f64>, Vec<f64>)>) -> Network {
    let mut values = values.into_iter();
    let params = layers
        .iter()
        .map(|l| {
            l.weight_shape().map(|ws| {
                let (w, b) = values.next().expect("missing parameter values");
                LayerParams { weight: Tensor::from_vec(&ws, w), bias: Tensor::from_vec(&[b.len()], b) }
            })
        })
        .collect();
    Network::from_parts(input, layers, params, BTreeMap::new()).unwrap()
}

pub fn dataset(shape: &[usize], pixels: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Dataset {
    let n = pixels.len();
    let mut full = vec![n];
    full.extend_from_slice(shape);
    Dataset::new("fixture", Tensor::from_vec(&full, pixels.concat()), labels, classes).unwrap()
}

/// Deterministic pseudo-random values in `[-1, 1)`.
pub fn wave(n: usize, seed: u64) -> Vec<f64> {
    (0..n).map(|i| (((i as u64 + 1) * 2654435761 + seed * 97) % 2000) as f64 / 1000.0 - 1.0).collect()
}
