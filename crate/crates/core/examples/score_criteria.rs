//! Scores every filter of a small trained net under all five criteria and
//! shows how their rankings agree.

use entprune::criteria::{Criterion, FilterScore};
use entprune::data::{synthetic, SyntheticSpec};
use entprune::driver::score;
use entprune::entstats::QuantSpec;
use entprune::nn::{train_epochs, LayerSpec, Network, SgdConfig};
use entprune::report::spearman;
use entprune::trace::Reduction;

fn main() -> entprune::Result<()> {
    let spec = SyntheticSpec { samples: 600, classes: 4, spread: 0.6, ..SyntheticSpec::default() };
    let (train, _) = synthetic(&spec).split(0.25, 0);
    let layers = vec![
        LayerSpec::conv(1, 6, 3, 1),
        LayerSpec::relu(),
        LayerSpec::pool(2),
        LayerSpec::conv(6, 8, 3, 1),
        LayerSpec::relu(),
        LayerSpec::pool(2),
        LayerSpec::Flatten,
        LayerSpec::dense(72, 4),
        LayerSpec::SoftmaxCrossEntropy,
    ];
    let mut net = Network::new(&[1, 12, 12], layers, 3)?;
    train_epochs(&mut net, &train, &SgdConfig { learning_rate: 0.05, ..SgdConfig::default() }, 4)?;

    let q = QuantSpec { eps_h: 1000.0 };
    let all: Vec<(Criterion, Vec<FilterScore>)> = Criterion::ALL
        .iter()
        .map(|&c| score(&net, c, &train, Reduction::Mean, q).map(|s| (c, s)))
        .collect::<entprune::Result<_>>()?;

    println!("prune order within each layer (first = pruned first)");
    for (c, scores) in &all {
        let mut order: Vec<&FilterScore> = scores.iter().collect();
        order.sort_by_key(|s| (s.layer, s.prune_rank));
        let text: Vec<String> = order.iter().map(|s| format!("{}:{}", s.layer, s.filter)).collect();
        println!("{:>9} ({:?}) {}", c.name(), c.default_direction(), text.join(" "));
    }

    println!("\nSpearman correlation of raw scores");
    print!("{:>9}", "");
    for (c, _) in &all {
        print!("{:>9}", c.name());
    }
    println!();
    for (a, sa) in &all {
        print!("{:>9}", a.name());
        for (_, sb) in &all {
            let x: Vec<f64> = sa.iter().map(|s| s.score).collect();
            let y: Vec<f64> = sb.iter().map(|s| s.score).collect();
            print!("{:>9.2}", spearman(&x, &y));
        }
        println!();
    }
    Ok(())
}
