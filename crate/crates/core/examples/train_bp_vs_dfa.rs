//! BP and DFA side by side on the bundled MNIST subset, digital backend.
//!
//!     cargo run --release --example train_bp_vs_dfa

use cimtrain::analog::Backend;
use cimtrain::dataio::load_bundled_mnist5k;
use cimtrain::math::{streams, Rng};
use cimtrain::network::{xavier_init, Activation, Topology};
use cimtrain::trainers::{train, FeedbackBank, HyperParams, TrainerKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (train_set, test_set) = load_bundled_mnist5k()?;
    let (train_set, test_set) = (train_set.head(2000), test_set.head(500));
    let topo = Topology::uniform(784, 64, 3, 10, Activation::Tanh)?;
    let hp = HyperParams { learning_rate: 0.05, epochs: 8, ..HyperParams::default() };

    for kind in [TrainerKind::Bp, TrainerKind::Dfa] {
        // Same seed, so both rules start from identical weights.
        let mut mlp = xavier_init(&topo, &mut Rng::derive(hp.seed, streams::INIT));
        let bank = FeedbackBank::new(&topo, hp.seed);
        let mut backend = Backend::digital();
        let history = train(&mut mlp, &bank, kind, &train_set, &test_set, &hp, &mut backend, None)?;
        let acc: Vec<String> = history.test_accuracies().iter().map(|a| format!("{a:.3}")).collect();
        println!("{:>3}: {}", kind.name(), acc.join(" "));
    }
    Ok(())
}
