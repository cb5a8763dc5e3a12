//! The streaming histogram behind every entropy score: feed quantized
//! (activation, loss) pairs, merge shards, read entropies in bits.

use entprune::entstats::{EntropyAccumulator, QuantSpec};

fn main() -> entprune::Result<()> {
    let q = QuantSpec { eps_h: 10.0 };
    // A filter whose activation predicts the loss, and one that ignores it.
    let losses = [0.05, 0.07, 0.9, 1.2, 0.04, 2.3, 0.06, 1.1];
    let informative: Vec<f64> = losses.iter().map(|l| if *l > 0.5 { 0.8 } else { 0.1 }).collect();
    let constant = vec![0.3; losses.len()];

    for (name, acts) in [("informative", &informative), ("constant", &constant)] {
        let mut acc = EntropyAccumulator::new();
        for (a, l) in acts.iter().zip(&losses) {
            acc.observe(*a, *l, q);
        }
        let ce = acc.conditional_entropy()?;
        println!(
            "{name:>11}: act_ent {:.3}  con_ent {:.3}  loss_ent {:.3}  MI {:.3}  modal bin {}",
            acc.activation_entropy()?,
            ce.con_ent,
            acc.loss_entropy()?,
            acc.mutual_information()?,
            ce.max_bin
        );
    }

    // Shards merge exactly, so traces can be accumulated in parallel.
    let mut left = EntropyAccumulator::new();
    let mut right = EntropyAccumulator::new();
    for (k, (a, l)) in informative.iter().zip(&losses).enumerate() {
        let shard = if k % 2 == 0 { &mut left } else { &mut right };
        shard.observe(*a, *l, q);
    }
    let merged = left.merge(&right);
    println!("merged shards: {} samples, con_ent {:.3}", merged.c_total(), merged.conditional_entropy()?.con_ent);
    Ok(())
}
