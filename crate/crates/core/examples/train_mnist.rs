//! Trains the two-conv MNIST preset and saves a checkpoint.
//!
//! cargo run --release --example train_mnist -- [epochs] [out.2pfp]

use entprune::data::{default_data_dir, load_mnist, MnistSplit};
use entprune::nn::{checkpoint, evaluate, train_epochs, Network, SgdConfig};
use entprune::presets;

fn main() -> entprune::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(3, |s| s.parse().expect("epochs"));
    let out = args.next().unwrap_or_else(|| "mnist2conv.2pfp".into());

    let dir = default_data_dir();
    let train = load_mnist(&dir, MnistSplit::Train)?;
    let test = load_mnist(&dir, MnistSplit::Test)?;
    println!("{} train / {} test samples", train.len(), test.len());

    let mut net = Network::new(&presets::MNIST_SHAPE, presets::mnist2conv(), 1)?;
    println!("conv widths {:?}, {} FLOPs, {} conv bytes", net.conv_widths(), net.count_flops(), net.param_bytes());
    let sgd = SgdConfig { learning_rate: 0.02, momentum: 0.9, weight_decay: 1e-4, batch_size: 32, seed: 1 };
    for e in train_epochs(&mut net, &train, &sgd, epochs)? {
        println!("epoch {} mean loss {:.4}", e.epoch, e.mean_loss);
    }
    println!("test accuracy {:.4}", evaluate(&net, &test)?);
    checkpoint::save(&net, &out)?;
    println!("saved {out}");
    Ok(())
}
