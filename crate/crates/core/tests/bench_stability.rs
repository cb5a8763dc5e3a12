use entprune::data::{synthetic, SyntheticSpec};
use entprune::driver::{bench_inference, BenchConfig};
use entprune::nn::Network;
use entprune::presets;

/// Two back-to-back invocations should agree within 20%. On a shared VM the
/// hypervisor can steal CPU for seconds at a time, so a pair that straddles
/// such a stall is retried, up to three pairs in total.
#[test]
fn median_is_stable_across_invocations() {
    let spec = SyntheticSpec { samples: 64, classes: 10, height: 28, width: 28, ..SyntheticSpec::default() };
    let ds = synthetic(&spec);
    let net = Network::new(&presets::MNIST_SHAPE, presets::mini_vgg(), 0).unwrap();
    let cfg = BenchConfig { repeats: 30, samples: 64 };
    let mut pairs = Vec::new();
    for _ in 0..3 {
        let a = bench_inference(&net, &ds, cfg).unwrap();
        let b = bench_inference(&net, &ds, cfg).unwrap();
        assert_eq!(a.runs_ms.len(), 30);
        assert_eq!(a.samples, 64);
        let rel = (a.median_ms - b.median_ms).abs() / a.median_ms.min(b.median_ms);
        pairs.push((a.median_ms, b.median_ms));
        if rel < 0.2 {
            return;
        }
    }
    panic!("no pair of medians within 20%: {pairs:?}");
}
