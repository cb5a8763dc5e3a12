//! Layer entropies of the two-conv MNIST preset as Gaussian noise is added
//! to the test images.

use entprune::data::{default_data_dir, load_mnist, MnistSplit};
use entprune::driver::noise_sweep;
use entprune::entstats::QuantSpec;
use entprune::nn::{evaluate, train_epochs, Network, SgdConfig};
use entprune::presets;
use entprune::report::{noise_markdown, spearman};
use entprune::trace::Reduction;

fn main() -> entprune::Result<()> {
    let dir = default_data_dir();
    let train = load_mnist(&dir, MnistSplit::Train)?;
    let test = load_mnist(&dir, MnistSplit::Test)?;
    let mut net = Network::new(&presets::MNIST_SHAPE, presets::mnist2conv(), 1)?;
    let sgd = SgdConfig { learning_rate: 0.02, momentum: 0.9, weight_decay: 1e-4, batch_size: 32, seed: 1 };
    train_epochs(&mut net, &train, &sgd, 2)?;
    println!("clean test accuracy {:.4}", evaluate(&net, &test)?);

    let stds = [0.0, 0.05, 0.1, 0.2, 0.4];
    let rows = noise_sweep(&net, &test, &stds, 7, Reduction::Mean, QuantSpec::default())?;
    println!("{}", noise_markdown(&rows));
    // Spatial means average the pixel noise away; spatial maxima do not.
    let max_rows = noise_sweep(&net, &test, &stds, 7, Reduction::Max, QuantSpec::default())?;
    for layer in 0..net.conv_widths().len() {
        let rho = |rows: &[entprune::driver::NoiseRow]| {
            let h: Vec<f64> = rows.iter().filter(|r| r.layer == layer).map(|r| r.act_ent).collect();
            spearman(&stds, &h)
        };
        println!("conv {layer}: Spearman(act_ent, std) = {:.3} (mean), {:.3} (max)", rho(&rows), rho(&max_rows));
    }
    Ok(())
}
