//! Inference time of the small VGG preset against copies with fewer
//! filters per layer. Weights are random; only the shapes matter here.

use entprune::data::{synthetic, SyntheticSpec};
use entprune::driver::{bench_inference, BenchConfig};
use entprune::nn::{LayerSpec, Network};
use entprune::presets;

fn scaled(keep: f64) -> Vec<LayerSpec> {
    let mut prev = 1;
    presets::mini_vgg()
        .into_iter()
        .map(|l| match l {
            LayerSpec::Conv2d { out_channels, kernel, stride, padding, .. } => {
                let out = ((out_channels as f64 * keep).round() as usize).max(1);
                let spec = LayerSpec::Conv2d { in_channels: prev, out_channels: out, kernel, stride, padding };
                prev = out;
                spec
            }
            LayerSpec::Dense { out_features, .. } => LayerSpec::Dense { in_features: prev * 9, out_features },
            other => other,
        })
        .collect()
}

fn main() -> entprune::Result<()> {
    let spec = SyntheticSpec { samples: 512, classes: 10, channels: 1, height: 28, width: 28, ..SyntheticSpec::default() };
    let images = synthetic(&spec);
    let cfg = BenchConfig { repeats: 5, samples: 512 };
    println!("keep   filters      FLOPs  median ms");
    let mut base = None;
    for keep in [1.0, 0.75, 0.5, 0.25] {
        let net = Network::new(&presets::MNIST_SHAPE, scaled(keep), 0)?;
        let r = bench_inference(&net, &images, cfg)?;
        let b = *base.get_or_insert(r.median_ms);
        println!(
            "{keep:>4} {:>9} {:>10} {:>10.1}  ({:.0}% of full)",
            net.total_filters(),
            net.count_flops(),
            r.median_ms,
            100.0 * r.median_ms / b
        );
    }
    Ok(())
}
