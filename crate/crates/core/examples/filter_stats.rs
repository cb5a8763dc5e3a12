//! Captures a trace from a small net trained on synthetic blobs and prints
//! per-filter entropy statistics.

use entprune::data::{synthetic, SyntheticSpec};
use entprune::entstats::{trace_stats, QuantSpec};
use entprune::nn::{evaluate, train_epochs, LayerSpec, Network, SgdConfig};
use entprune::trace::{capture, Reduction};

fn main() -> entprune::Result<()> {
    let spec = SyntheticSpec { samples: 600, classes: 4, spread: 0.6, ..SyntheticSpec::default() };
    let (train, test) = synthetic(&spec).split(0.25, 0);
    let layers = vec![
        LayerSpec::conv(1, 6, 3, 1),
        LayerSpec::tanh(),
        LayerSpec::pool(2),
        LayerSpec::conv(6, 8, 3, 1),
        LayerSpec::relu(),
        LayerSpec::pool(2),
        LayerSpec::Flatten,
        LayerSpec::dense(8 * 3 * 3, 4),
        LayerSpec::SoftmaxCrossEntropy,
    ];
    let mut net = Network::new(&[1, 12, 12], layers, 0)?;
    let sgd = SgdConfig { learning_rate: 0.05, ..SgdConfig::default() };
    train_epochs(&mut net, &train, &sgd, 4)?;
    println!("test accuracy {:.3}", evaluate(&net, &test)?);

    let tf = capture(&net, &train, Reduction::Mean)?;
    let stats = trace_stats(&tf, QuantSpec { eps_h: 1000.0 })?;
    println!("layer filter  act_ent  con_ent       MI  zeros  a_star");
    for s in stats.iter().flatten() {
        println!(
            "{:>5} {:>6} {:>8.3} {:>8.3} {:>8.3} {:>6} {:>7.3}",
            s.layer, s.filter, s.act_ent, s.con_ent, s.mutual_info, s.zero_count, s.max_ent_activation
        );
    }
    Ok(())
}
