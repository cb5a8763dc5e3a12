//! Both pruning phases on synthetic data (default) or on MNIST with the
//! small VGG preset (`-- mnist`, several minutes).

use entprune::data::{default_data_dir, load_mnist, synthetic, MnistSplit, SyntheticSpec};
use entprune::driver::{run_2pfpce, BenchConfig, FinetuneConfig, PhaseConfig, PruneData};
use entprune::entstats::QuantSpec;
use entprune::nn::{train_epochs, LayerSpec, Network, SgdConfig};
use entprune::presets;
use entprune::report::pfpce_markdown;

fn main() -> entprune::Result<()> {
    let mnist = std::env::args().any(|a| a == "mnist");
    let finetune = FinetuneConfig {
        sgd: SgdConfig { learning_rate: 0.01, ..SgdConfig::default() },
        updates: if mnist { 100 } else { 30 },
    };
    let (train, test, layers, shape, epochs) = if mnist {
        let dir = default_data_dir();
        let (tr, te) = (load_mnist(&dir, MnistSplit::Train)?, load_mnist(&dir, MnistSplit::Test)?);
        (tr, te, presets::mini_vgg(), presets::MNIST_SHAPE.to_vec(), 8)
    } else {
        let spec = SyntheticSpec { samples: 1200, classes: 4, spread: 0.6, ..SyntheticSpec::default() };
        let (tr, te) = synthetic(&spec).split(0.25, 0);
        let layers = vec![
            LayerSpec::conv(1, 12, 3, 1),
            LayerSpec::tanh(),
            LayerSpec::pool(2),
            LayerSpec::conv(12, 16, 3, 1),
            LayerSpec::tanh(),
            LayerSpec::pool(2),
            LayerSpec::Flatten,
            LayerSpec::dense(144, 4),
            LayerSpec::SoftmaxCrossEntropy,
        ];
        (tr, te, layers, vec![1, 12, 12], 4)
    };
    let cfg = PhaseConfig {
        trace_samples: Some(1000),
        phase1_max_iterations: Some(if mnist { 16 } else { 8 }),
        phase2_fraction: 1.0 / 32.0,
        phase2_finetune_every: 1,
        finetune,
        quant: QuantSpec { eps_h: if mnist { 1e4 } else { 1000.0 } },
        ..PhaseConfig::default()
    };
    let data = PruneData::from_train(&train, &cfg);
    let mut net = Network::new(&shape, layers, 1)?;
    let sgd = SgdConfig { learning_rate: 0.01, momentum: 0.9, weight_decay: 1e-4, batch_size: 32, seed: 1 };
    train_epochs(&mut net, &data.fit, &sgd, epochs)?;

    let out = run_2pfpce(&net, &data, Some(&test), &cfg, Some(BenchConfig { repeats: 5, samples: 512 }))?;
    for e in &out.log {
        println!(
            "{:?} step {:>2}: -{:<2} filters -> {:>3} left, val acc {:.4}",
            e.phase, e.iteration, e.removed, e.filters_remaining, e.accuracy
        );
    }
    println!("\n{}", pfpce_markdown(&out.report));
    Ok(())
}
