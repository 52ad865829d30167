//! Dataset sources: the bundled MNIST subset, IDX files on disk and
//! synthetic Gaussian blobs.
//!
//!     cargo run --example datasets

use cimtrain::dataio::{load_bundled_mnist5k, load_idx, synthetic, write_idx, Split, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (train, test) = load_bundled_mnist5k()?;
    println!("bundled: {} train / {} test, {} features", train.len(), test.len(), train.features());
    println!("train class counts {:?}", train.class_counts());

    // Round trip through IDX (gzip).
    let dir = std::env::temp_dir();
    let (imgs, labels) = (dir.join("cimtrain-ex-images.gz"), dir.join("cimtrain-ex-labels.gz"));
    write_idx(&test.head(100), &imgs, &labels, true)?;
    let back = load_idx(&imgs, &labels, Split::Test)?;
    println!("IDX round trip: {} images, labels equal: {}", back.len(), back.labels() == &test.labels()[..100]);

    let spec = SyntheticSpec { classes: 4, features: 16, samples_per_class: 25, std: 0.1, seed: 9 };
    let blobs = synthetic(&spec, Split::Train)?;
    println!("synthetic: {} samples, {} features, counts {:?}", blobs.len(), blobs.features(), blobs.class_counts());
    Ok(())
}
