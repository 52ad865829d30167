//! Save a trained DFA model with its feedback matrix, load it back and check
//! that it predicts the same.
//!
//!     cargo run --release --example checkpoint

use cimtrain::analog::Backend;
use cimtrain::checkpoint;
use cimtrain::dataio::load_bundled_mnist5k;
use cimtrain::math::Rng;
use cimtrain::network::{forward, predict, xavier_init, Activation, Topology};
use cimtrain::trainers::{train, FeedbackBank, HyperParams, TrainerKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (train_set, test_set) = load_bundled_mnist5k()?;
    let (train_set, test_set) = (train_set.head(1000), test_set.head(200));
    let topo = Topology::uniform(784, 32, 2, 10, Activation::Tanh)?;
    let mut mlp = xavier_init(&topo, &mut Rng::new(3));
    let bank = FeedbackBank::new(&topo, 3);
    let hp = HyperParams { epochs: 3, ..HyperParams::default() };
    train(&mut mlp, &bank, TrainerKind::Dfa, &train_set, &test_set, &hp, &mut Backend::digital(), None)?;

    let path = std::env::temp_dir().join("cimtrain-example.ckpt");
    checkpoint::save(&path, &mlp, Some(&bank))?;
    let (loaded, loaded_bank) = checkpoint::load(&path)?;
    assert_eq!(loaded_bank.map(|b| b.digest()), Some(bank.digest()));

    let x = test_set.images();
    let a = predict(&forward(&mlp, x, &mut Backend::digital())?);
    let b = predict(&forward(&loaded, x, &mut Backend::digital())?);
    println!("{} bytes at {}; predictions identical: {}", std::fs::metadata(&path)?.len(), path.display(), a == b);
    Ok(())
}
