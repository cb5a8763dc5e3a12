//! One-shot per-layer pruning under each criterion at two ratios, each
//! followed by the same fine-tuning budget.

use entprune::criteria::Criterion;
use entprune::data::{synthetic, SyntheticSpec};
use entprune::driver::{criteria_comparison, CompareConfig, FinetuneConfig, PhaseConfig, PruneData};
use entprune::entstats::QuantSpec;
use entprune::nn::{train_epochs, LayerSpec, Network, SgdConfig};
use entprune::report::compare_markdown;

fn main() -> entprune::Result<()> {
    let spec = SyntheticSpec { samples: 1200, classes: 4, spread: 0.6, ..SyntheticSpec::default() };
    let (train, test) = synthetic(&spec).split(0.25, 0);
    let layers = vec![
        LayerSpec::conv(1, 12, 3, 1),
        LayerSpec::relu(),
        LayerSpec::pool(2),
        LayerSpec::conv(12, 16, 3, 1),
        LayerSpec::relu(),
        LayerSpec::pool(2),
        LayerSpec::Flatten,
        LayerSpec::dense(144, 4),
        LayerSpec::SoftmaxCrossEntropy,
    ];
    let data = PruneData::from_train(&train, &PhaseConfig { trace_samples: Some(600), ..PhaseConfig::default() });
    let mut net = Network::new(&[1, 12, 12], layers, 2)?;
    train_epochs(&mut net, &data.fit, &SgdConfig { learning_rate: 0.05, ..SgdConfig::default() }, 4)?;

    let cfg = CompareConfig {
        finetune: FinetuneConfig { sgd: SgdConfig { learning_rate: 0.01, ..SgdConfig::default() }, updates: 20 },
        quant: QuantSpec { eps_h: 1000.0 },
        ..CompareConfig::default()
    };
    let grid = criteria_comparison(&net, &data, &test, &Criterion::ALL, &[0.25, 0.5, 0.75], &cfg)?;
    println!("{}", compare_markdown(&grid));
    Ok(())
}
