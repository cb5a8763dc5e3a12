//! Writes a checkpoint and a trace, reads them back, and shows how damaged
//! files are reported.

use entprune::data::{synthetic, SyntheticSpec};
use entprune::nn::{checkpoint, Network};
use entprune::presets;
use entprune::trace::{self, Reduction};

fn main() -> entprune::Result<()> {
    let dir = std::env::temp_dir().join("entprune-formats-example");
    std::fs::create_dir_all(&dir).expect("temp dir is writable");

    let net = Network::new(&presets::MNIST_SHAPE, presets::mnist2conv(), 0)?;
    let ck = dir.join("model.2pfp");
    checkpoint::save(&net, &ck)?;
    assert_eq!(checkpoint::load(&ck)?, net);
    println!("checkpoint {} ({} bytes), hash {}", ck.display(), checkpoint::to_bytes(&net).len(), checkpoint::model_hash(&net));

    let spec = SyntheticSpec { samples: 20, classes: 10, height: 28, width: 28, ..SyntheticSpec::default() };
    let tf = trace::capture(&net, &synthetic(&spec), Reduction::Mean)?;
    let tp = dir.join("trace.jsonl");
    trace::write(&tf, &tp)?;
    assert_eq!(trace::read(&tp)?, tf);
    println!("trace {} with {} records, layer sizes {:?}", tp.display(), tf.records.len(), tf.header.layer_sizes);

    let bytes = checkpoint::to_bytes(&net);
    let cases: [(&str, Vec<u8>); 3] = [
        ("wrong magic", [b"XXXX".as_slice(), &bytes[4..]].concat()),
        ("cut header", bytes[..20].to_vec()),
        ("missing weights", bytes[..bytes.len() - 8].to_vec()),
    ];
    for (name, b) in cases {
        let err = checkpoint::from_bytes(&b).unwrap_err();
        println!("{name:>16}: {err} (exit code {})", err.exit_code());
    }
    Ok(())
}
