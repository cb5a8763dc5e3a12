//! One pruning step by hand: score, select, fold removed filters into the
//! consumer biases, cut them out, and freeze the most informative survivor.

use entprune::criteria::{cond_ent_from_stats, rank_and_select, Amount, Scope, SelectOptions};
use entprune::data::{synthetic, SyntheticSpec};
use entprune::entstats::{trace_stats, QuantSpec};
use entprune::nn::{evaluate, train_epochs, LayerSpec, Network, SgdConfig};
use entprune::surgery::{bias_compensate, mark_freeze, remove_filters, surviving};
use entprune::trace::{capture, Reduction};

fn main() -> entprune::Result<()> {
    let spec = SyntheticSpec { samples: 800, classes: 4, spread: 0.6, ..SyntheticSpec::default() };
    let (train, test) = synthetic(&spec).split(0.25, 0);
    let layers = vec![
        LayerSpec::conv(1, 8, 3, 1),
        LayerSpec::tanh(),
        LayerSpec::pool(2),
        LayerSpec::conv(8, 12, 3, 1),
        LayerSpec::tanh(),
        LayerSpec::pool(2),
        LayerSpec::Flatten,
        LayerSpec::dense(108, 4),
        LayerSpec::SoftmaxCrossEntropy,
    ];
    let mut net = Network::new(&[1, 12, 12], layers, 5)?;
    train_epochs(&mut net, &train, &SgdConfig { learning_rate: 0.05, ..SgdConfig::default() }, 4)?;

    let q = QuantSpec { eps_h: 1000.0 };
    let stats = trace_stats(&capture(&net, &train, Reduction::Mean)?, q)?;
    let opts = SelectOptions {
        scope: Scope::PerLayer,
        amount: Amount::Fraction(0.25),
        direction: None,
        clamp_min_width: false,
    };
    let plan = rank_and_select(&cond_ent_from_stats(&stats), &net.conv_widths(), &opts)?.with_compensation(&stats);
    for c in &plan.compensation {
        println!("remove layer {} filter {}, a_star {:.3}", c.layer, c.filter, c.a_star);
    }

    let plain = remove_filters(&net, &plan)?;
    let compensated = remove_filters(&bias_compensate(&net, &plan.compensation)?, &plan)?;
    let act: Vec<Vec<f64>> = stats.iter().map(|l| l.iter().map(|s| s.act_ent).collect()).collect();
    let frozen = mark_freeze(&compensated, &surviving(&act, &plan), &[0, 1])?;

    println!("\n                widths   FLOPs  bytes  test acc");
    for (name, n) in [("original", &net), ("pruned", &plain), ("compensated", &compensated)] {
        println!(
            "{name:>11} {:>10} {:>7} {:>6} {:>9.4}",
            format!("{:?}", n.conv_widths()),
            n.count_flops(),
            n.param_bytes(),
            evaluate(n, &test)?
        );
    }
    println!("\nfrozen filters per conv layer: {:?}", frozen.freeze_sets());
    Ok(())
}
