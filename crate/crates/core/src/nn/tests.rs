use std::collections::{BTreeMap, BTreeSet};

use super::*;
use crate::data::{synthetic, Dataset, SyntheticSpec};
use crate::error::Error;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn randomize_biases(net: &mut Network, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for li in 0..net.layers().len() {
        if let Some(p) = net.layer_params_mut(li) {
            p.bias.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
        }
    }
}

/// Two conv layers with every layer kind represented.
fn toy_net(act: Activation, seed: u64) -> Network {
    let layers = vec![
        LayerSpec::Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 1, padding: 1 },
        LayerSpec::Activation { function: act },
        LayerSpec::pool(2),
        LayerSpec::Conv2d { in_channels: 3, out_channels: 4, kernel: 2, stride: 1, padding: 0 },
        LayerSpec::Activation { function: act },
        LayerSpec::Flatten,
        LayerSpec::dense(4 * 2 * 2, 5),
        LayerSpec::SoftmaxCrossEntropy,
    ];
    let mut net = Network::new(&[2, 6, 6], layers, seed).unwrap();
    randomize_biases(&mut net, seed + 100);
    net
}

// ---------------------------------------------------------------------------
// Naive reference forward pass, independent of the im2col/GEMM path.
// ---------------------------------------------------------------------------

fn naive_logits(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut shape = net.input_shape().to_vec();
    let mut cur = x.to_vec();
    for (li, layer) in net.layers().iter().enumerate() {
        match *layer {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                let p = net.layer_params(li).unwrap();
                let (h, w) = (shape[1] as isize, shape[2] as isize);
                let ho = ((h + 2 * padding as isize - kernel as isize) / stride as isize + 1) as usize;
                let wo = ((w + 2 * padding as isize - kernel as isize) / stride as isize + 1) as usize;
                let mut out = vec![0.0; out_channels * ho * wo];
                for co in 0..out_channels {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut acc = p.bias.data()[co];
                            for ci in 0..in_channels {
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let iy = (oy * stride + ky) as isize - padding as isize;
                                        let ix = (ox * stride + kx) as isize - padding as isize;
                                        if iy < 0 || ix < 0 || iy >= h || ix >= w {
                                            continue;
                                        }
                                        let wv = p.weight.data()[((co * in_channels + ci) * kernel + ky) * kernel + kx];
                                        acc += wv * cur[(ci * h as usize + iy as usize) * w as usize + ix as usize];
                                    }
                                }
                            }
                            out[(co * ho + oy) * wo + ox] = acc;
                        }
                    }
                }
                cur = out;
                shape = vec![out_channels, ho, wo];
            }
            LayerSpec::MaxPool2d { window, stride } => {
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let (ho, wo) = ((h - window) / stride + 1, (w - window) / stride + 1);
                let mut out = vec![f64::NEG_INFINITY; c * ho * wo];
                for ch in 0..c {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            for dy in 0..window {
                                for dx in 0..window {
                                    let v = cur[(ch * h + oy * stride + dy) * w + ox * stride + dx];
                                    let o = &mut out[(ch * ho + oy) * wo + ox];
                                    *o = o.max(v);
                                }
                            }
                        }
                    }
                }
                cur = out;
                shape = vec![c, ho, wo];
            }
            LayerSpec::Activation { function: Activation::Tanh } => cur.iter_mut().for_each(|v| *v = v.tanh()),
            LayerSpec::Activation { function: Activation::Relu } => {
                cur.iter_mut().for_each(|v| *v = if *v > 0.0 { *v } else { 0.0 })
            }
            LayerSpec::Flatten => shape = vec![cur.len()],
            LayerSpec::Dense { in_features, out_features } => {
                let p = net.layer_params(li).unwrap();
                cur = (0..out_features)
                    .map(|o| {
                        p.bias.data()[o]
                            + (0..in_features).map(|i| p.weight.data()[o * in_features + i] * cur[i]).sum::<f64>()
                    })
                    .collect();
                shape = vec![out_features];
            }
            LayerSpec::SoftmaxCrossEntropy => {}
        }
    }
    cur
}

#[test]
fn forward_matches_naive_convolution() {
    for (seed, act) in [(1, Activation::Tanh), (2, Activation::Relu), (3, Activation::Tanh)] {
        let net = toy_net(act, seed);
        let x = random_input(&[4, 2, 6, 6], seed + 7);
        let logits = net.forward(&x).unwrap().logits;
        for s in 0..4 {
            let want = naive_logits(&net, x.row(s));
            for (a, b) in logits.row(s).iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "seed {seed}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn strided_convolution_matches_naive() {
    let layers = vec![
        LayerSpec::Conv2d { in_channels: 1, out_channels: 2, kernel: 3, stride: 2, padding: 1 },
        LayerSpec::relu(),
        LayerSpec::Flatten,
        LayerSpec::dense(2 * 4 * 4, 3),
        LayerSpec::SoftmaxCrossEntropy,
    ];
    let mut net = Network::new(&[1, 7, 7], layers, 4).unwrap();
    randomize_biases(&mut net, 5);
    let x = random_input(&[2, 1, 7, 7], 6);
    let logits = net.logits(&x).unwrap();
    for s in 0..2 {
        let want = naive_logits(&net, x.row(s));
        assert!(logits.row(s).iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}

#[test]
fn identity_kernel_passes_non_negative_input() {
    let layers = vec![
        LayerSpec::conv(1, 1, 1, 0),
        LayerSpec::relu(),
        LayerSpec::Flatten,
        LayerSpec::dense(9, 2),
        LayerSpec::SoftmaxCrossEntropy,
    ];
    let mut net = Network::new(&[1, 3, 3], layers, 0).unwrap();
    let p = net.layer_params_mut(0).unwrap();
    p.weight.data_mut()[0] = 1.0;
    p.bias.data_mut()[0] = 0.0;
    let x = Tensor::from_vec(&[1, 1, 3, 3], (0..9).map(|v| v as f64 * 0.25).collect());
    let out = net.forward(&x).unwrap();
    assert_eq!(out.conv_activations[0].data(), x.data());
}

#[test]
fn zero_weights_give_zero_activations() {
    let mut net = toy_net(Activation::Relu, 3);
    for li in 0..net.layers().len() {
        if let Some(p) = net.layer_params_mut(li) {
            p.weight.data_mut().fill(0.0);
            p.bias.data_mut().fill(0.0);
        }
    }
    let out = net.forward(&random_input(&[3, 2, 6, 6], 1)).unwrap();
    assert!(out.conv_activations.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    assert_eq!(out.conv_activations.len(), 2);
    assert_eq!(out.conv_activations[0].shape(), &[3, 3, 6, 6]);
}

#[test]
fn batch_shape_mismatch_names_layer_zero() {
    let net = toy_net(Activation::Tanh, 1);
    let err = net.forward(&Tensor::zeros(&[1, 1, 6, 6])).unwrap_err();
    assert!(matches!(err, Error::Shape { layer: 0, .. }), "{err}");
}

#[test]
fn incompatible_layers_are_rejected_with_index() {
    let layers = vec![LayerSpec::conv(1, 4, 3, 0), LayerSpec::conv(3, 2, 3, 0), LayerSpec::Flatten, LayerSpec::SoftmaxCrossEntropy];
    let err = Network::new(&[1, 8, 8], layers, 0).unwrap_err();
    assert!(matches!(err, Error::Shape { layer: 1, .. }), "{err}");
}

#[test]
fn uniform_logits_cost_ln_ten() {
    let layers = vec![LayerSpec::Flatten, LayerSpec::dense(4, 10), LayerSpec::SoftmaxCrossEntropy];
    let mut net = Network::new(&[1, 2, 2], layers, 0).unwrap();
    net.layer_params_mut(1).unwrap().weight.data_mut().fill(0.0);
    let g = net.loss_and_grads(&random_input(&[3, 1, 2, 2], 2), &[0, 4, 9]).unwrap();
    for &l in g.per_sample_loss.data() {
        assert!((l - 10f64.ln()).abs() < 1e-12);
        assert!((l - 2.302585).abs() < 1e-6);
    }
}

#[test]
fn confident_logits_cost_nearly_nothing() {
    let layers = vec![LayerSpec::Flatten, LayerSpec::dense(1, 3), LayerSpec::SoftmaxCrossEntropy];
    let mut net = Network::new(&[1, 1, 1], layers, 0).unwrap();
    let p = net.layer_params_mut(1).unwrap();
    p.weight.data_mut().copy_from_slice(&[0.0, 0.0, 0.0]);
    let mut prev = f64::INFINITY;
    for margin in [1.0, 10.0, 50.0, 500.0] {
        net.layer_params_mut(1).unwrap().bias.data_mut().copy_from_slice(&[0.0, margin, 0.0]);
        let l = net.loss_and_grads(&Tensor::zeros(&[1, 1, 1, 1]), &[1]).unwrap().per_sample_loss.data()[0];
        assert!(l < prev && l >= 0.0);
        prev = l;
    }
    assert!(prev < 1e-12);
}

#[test]
fn out_of_range_label_is_rejected() {
    let net = toy_net(Activation::Tanh, 1);
    let err = net.loss_and_grads(&random_input(&[2, 2, 6, 6], 1), &[0, 5]).unwrap_err();
    assert!(matches!(err, Error::Label { sample: 1, label: 5, classes: 5 }));
}

fn mean_loss(net: &Network, x: &Tensor, y: &[usize]) -> f64 {
    let g = net.loss_and_grads(x, y).unwrap();
    g.per_sample_loss.data().iter().sum::<f64>() / y.len() as f64
}

/// Central differences on every parameter of every layer.
pub(crate) fn max_gradient_error(net: &Network, x: &Tensor, y: &[usize]) -> f64 {
    let h = 1e-6;
    let analytic = net.loss_and_grads(x, y).unwrap().params;
    let mut worst: f64 = 0.0;
    for li in 0..net.layers().len() {
        let Some(ga) = &analytic[li] else { continue };
        for which in 0..2 {
            let n = if which == 0 { ga.weight.len() } else { ga.bias.len() };
            for k in 0..n {
                let mut plus = net.clone();
                let mut minus = net.clone();
                {
                    let p = plus.layer_params_mut(li).unwrap();
                    let t = if which == 0 { &mut p.weight } else { &mut p.bias };
                    t.data_mut()[k] += h;
                }
                {
                    let p = minus.layer_params_mut(li).unwrap();
                    let t = if which == 0 { &mut p.weight } else { &mut p.bias };
                    t.data_mut()[k] -= h;
                }
                let fd = (mean_loss(&plus, x, y) - mean_loss(&minus, x, y)) / (2.0 * h);
                let an = if which == 0 { ga.weight.data()[k] } else { ga.bias.data()[k] };
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-5);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    for (seed, act) in [(11, Activation::Tanh), (12, Activation::Relu)] {
        let net = toy_net(act, seed);
        let x = random_input(&[3, 2, 6, 6], seed);
        let err = max_gradient_error(&net, &x, &[0, 3, 4]);
        assert!(err < 1e-4, "{act:?}: relative error {err}");
    }
}

#[test]
fn activation_grads_are_per_sample() {
    let net = toy_net(Activation::Tanh, 5);
    let x = random_input(&[3, 2, 6, 6], 9);
    let y = [1, 2, 0];
    let full = net.loss_and_grads(&x, &y).unwrap();
    let single = net.loss_and_grads(&x.select_rows(&[1]), &[2]).unwrap();
    for (a, b) in full.activation_grads.iter().zip(&single.activation_grads) {
        assert!(a.row(1).iter().zip(b.row(0)).all(|(p, q)| (p - q).abs() < 1e-14));
    }
}

#[test]
fn activation_grads_match_finite_differences() {
    // Scaling the consumer's input-channel weights by (1 + e) is the same
    // as scaling that feature map, so dL/de = sum(z * dL/dz).
    let net = toy_net(Activation::Tanh, 21);
    let x = random_input(&[2, 2, 6, 6], 3);
    let y = [1, 4];
    let g = net.loss_and_grads(&x, &y).unwrap();
    let c = 1;
    let predicted: f64 = g.conv_activations[1]
        .data()
        .chunks_exact(4)
        .enumerate()
        .filter(|(i, _)| i % 4 == c)
        .flat_map(|(i, z)| z.iter().zip(&g.activation_grads[1].data()[i * 4..i * 4 + 4]).map(|(a, b)| a * b))
        .sum();
    let h = 1e-6;
    let scaled = |e: f64| {
        let mut n = net.clone();
        let p = n.layer_params_mut(6).unwrap();
        for o in 0..5 {
            for k in 0..4 {
                p.weight.data_mut()[o * 16 + c * 4 + k] *= 1.0 + e;
            }
        }
        n.loss_and_grads(&x, &y).unwrap().per_sample_loss.data().iter().sum::<f64>()
    };
    let fd = (scaled(h) - scaled(-h)) / (2.0 * h);
    assert!((fd - predicted).abs() / predicted.abs().max(1e-6) < 1e-5, "{fd} vs {predicted}");
}

fn grads_like(net: &Network, value: f64) -> Vec<Option<LayerParams>> {
    net.params()
        .iter()
        .map(|p| {
            p.as_ref().map(|p| LayerParams {
                weight: Tensor::full(p.weight.shape(), value),
                bias: Tensor::full(p.bias.shape(), value),
            })
        })
        .collect()
}

#[test]
fn plain_sgd_step_is_exact() {
    let mut net = toy_net(Activation::Tanh, 1);
    let before = net.clone();
    let cfg = SgdConfig { learning_rate: 0.05, momentum: 0.0, weight_decay: 0.0, batch_size: 4, seed: 0 };
    let g = grads_like(&net, 0.3);
    Sgd::new(cfg).step(&mut net, &g).unwrap();
    for (a, b) in net.params().iter().zip(before.params()).flat_map(|(a, b)| a.iter().zip(b)) {
        for (x, y) in a.weight.data().iter().zip(b.weight.data()) {
            assert_eq!(*x, y - 0.05 * 0.3);
        }
    }
}

#[test]
fn momentum_second_update_is_one_point_nine() {
    let mut net = toy_net(Activation::Tanh, 1);
    let cfg = SgdConfig { learning_rate: 0.01, momentum: 0.9, weight_decay: 0.0, batch_size: 4, seed: 0 };
    let g = grads_like(&net, 0.5);
    let mut sgd = Sgd::new(cfg);
    sgd.step(&mut net, &g).unwrap();
    let mid = net.clone();
    sgd.step(&mut net, &g).unwrap();
    let w0 = mid.layer_params(0).unwrap().weight.data()[0];
    let w1 = net.layer_params(0).unwrap().weight.data()[0];
    assert!(((w0 - w1) - 0.01 * 1.9 * 0.5).abs() < 1e-15);
}

#[test]
fn freezing_every_filter_freezes_the_conv_layers() {
    let mut net = toy_net(Activation::Relu, 1);
    for li in net.conv_layers() {
        for f in 0..net.layers()[li].bias_len().unwrap() {
            net.freeze_filter(li, f).unwrap();
        }
    }
    let before = net.clone();
    let cfg = SgdConfig { learning_rate: 0.1, momentum: 0.9, weight_decay: 1e-3, batch_size: 4, seed: 0 };
    let mut sgd = Sgd::new(cfg);
    for _ in 0..3 {
        sgd.step(&mut net, &grads_like(&before, 1.0)).unwrap();
    }
    for li in net.conv_layers() {
        assert_eq!(net.layer_params(li), before.layer_params(li));
    }
    assert_ne!(net.layer_params(6), before.layer_params(6));
}

#[test]
fn freeze_index_must_exist() {
    let mut net = toy_net(Activation::Relu, 1);
    assert!(net.freeze_filter(0, 3).is_err());
    assert!(net.freeze_filter(6, 0).is_err());
    let (shape, layers, params, _) = net.clone().into_parts();
    let bad: BTreeMap<usize, BTreeSet<usize>> = [(3, [4].into())].into();
    assert!(Network::from_parts(&shape, layers, params, bad).is_err());
}

#[test]
fn flops_follow_the_conv_formula() {
    let layers = vec![LayerSpec::conv(1, 8, 3, 0), LayerSpec::relu(), LayerSpec::Flatten, LayerSpec::dense(8 * 26 * 26, 10), LayerSpec::SoftmaxCrossEntropy];
    let net = Network::new(&[1, 28, 28], layers, 0).unwrap();
    assert_eq!(net.count_flops(), 97_344 + 2 * 8 * 26 * 26 * 10);
    let dense = Network::new(&[1, 10, 10], vec![LayerSpec::Flatten, LayerSpec::dense(100, 10), LayerSpec::SoftmaxCrossEntropy], 0).unwrap();
    assert_eq!(dense.count_flops(), 2_000);
    let half = Network::new(&[1, 28, 28], vec![LayerSpec::conv(1, 4, 3, 0), LayerSpec::Flatten, LayerSpec::dense(4 * 26 * 26, 10), LayerSpec::SoftmaxCrossEntropy], 0).unwrap();
    assert_eq!(half.count_flops() - 2 * 4 * 26 * 26 * 10, 97_344 / 2);
}

#[test]
fn bytes_count_conv_weights_and_biases() {
    let layers = vec![LayerSpec::conv(1, 8, 3, 0), LayerSpec::Flatten, LayerSpec::dense(8, 2), LayerSpec::SoftmaxCrossEntropy];
    assert_eq!(Network::new(&[1, 3, 3], layers, 0).unwrap().param_bytes(), 320);
    let dense = Network::new(&[1, 2, 2], vec![LayerSpec::Flatten, LayerSpec::dense(4, 2), LayerSpec::SoftmaxCrossEntropy], 0).unwrap();
    assert_eq!(dense.param_bytes(), 0);
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let mut net = toy_net(Activation::Tanh, 8);
    net.freeze_filter(3, 2).unwrap();
    let bytes = checkpoint::to_bytes(&net);
    let back = checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, net);
    assert_eq!(checkpoint::to_bytes(&back), bytes);
    assert!(back.frozen(3).unwrap().contains(&2));
}

#[test]
fn checkpoint_corruptions_map_to_distinct_errors() {
    let net = toy_net(Activation::Tanh, 8);
    let bytes = checkpoint::to_bytes(&net);

    let mut magic = bytes.clone();
    magic[0] = b'X';
    let e = checkpoint::from_bytes(&magic).unwrap_err();
    assert!(matches!(e, Error::BadMagic { .. }) && e.to_string().contains("bad magic"));

    let mut version = bytes.clone();
    version[4] = 9;
    assert!(matches!(checkpoint::from_bytes(&version), Err(Error::UnsupportedVersion(9))));

    let e = checkpoint::from_bytes(&bytes[..bytes.len() - 8]).unwrap_err();
    assert!(matches!(e, Error::LengthMismatch(_)) && e.to_string().contains("length mismatch"));

    assert!(matches!(checkpoint::from_bytes(&bytes[..20]), Err(Error::Truncated(_))));
    assert!(matches!(checkpoint::from_bytes(&bytes[..2]), Err(Error::Truncated(_))));

    let mut header = bytes.clone();
    header[12] = b'#';
    assert!(matches!(checkpoint::from_bytes(&header), Err(Error::Header(_))));
}

fn balanced(n_per_class: usize) -> Dataset {
    let n = n_per_class * 10;
    Dataset::new("balanced", random_input(&[n, 1, 2, 2], 4), (0..n).map(|i| i % 10).collect(), 10).unwrap()
}

#[test]
fn constant_logits_pick_the_lowest_class() {
    let layers = vec![LayerSpec::Flatten, LayerSpec::dense(4, 10), LayerSpec::SoftmaxCrossEntropy];
    let mut net = Network::new(&[1, 2, 2], layers, 0).unwrap();
    net.layer_params_mut(1).unwrap().weight.data_mut().fill(0.0);
    assert_eq!(evaluate(&net, &balanced(7)).unwrap(), 0.1);
    assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
}

#[test]
fn predictions_as_labels_score_one() {
    let net = toy_net(Activation::Tanh, 2);
    let x = random_input(&[300, 2, 6, 6], 8);
    let ds0 = Dataset::new("x", x, vec![0; 300], 5).unwrap();
    let pred = predict(&net, &ds0).unwrap();
    let ds = Dataset::new("x", ds0.images.clone(), pred, 5).unwrap();
    assert_eq!(evaluate(&net, &ds).unwrap(), 1.0);
}

#[test]
fn training_is_bit_reproducible_and_learns() {
    let ds = synthetic(&SyntheticSpec { samples: 200, classes: 4, height: 8, width: 8, ..Default::default() });
    let layers = vec![
        LayerSpec::conv(1, 4, 3, 1),
        LayerSpec::relu(),
        LayerSpec::pool(2),
        LayerSpec::Flatten,
        LayerSpec::dense(4 * 4 * 4, 4),
        LayerSpec::SoftmaxCrossEntropy,
    ];
    let cfg = SgdConfig { learning_rate: 0.05, momentum: 0.9, weight_decay: 1e-4, batch_size: 16, seed: 3 };
    let run = || {
        let mut net = Network::new(&[1, 8, 8], layers.clone(), 1).unwrap();
        let log = train_epochs(&mut net, &ds, &cfg, 5).unwrap();
        (checkpoint::to_bytes(&net), log, net)
    };
    let (a, log, net) = run();
    let (b, _, _) = run();
    assert_eq!(a, b);
    assert!(log.last().unwrap().mean_loss < log[0].mean_loss);
    assert!(evaluate(&net, &ds).unwrap() > 0.9);
}
