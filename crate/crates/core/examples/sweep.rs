//! A small seeded sweep through the experiment API, written to a temporary
//! directory.
//!
//!     cargo run --release --example sweep

use cimtrain::experiment::{preset, sweep, tail_mean, SweepOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = preset("fig3")?;
    cfg.train.epochs = 3;
    cfg.data.train_samples = Some(500);
    cfg.data.test_samples = Some(200);
    cfg.seeds = vec![0, 1];
    cfg.validate()?;

    let dir = std::env::temp_dir().join("cimtrain-sweep-example");
    let out = sweep(&cfg, &SweepOptions { workers: 2, out: Some(dir.clone()), progress: false })?;
    for r in &out.runs {
        let labels: Vec<String> = r.labels.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{} {}: final {:.3}", r.id, labels.join(" "), tail_mean(&r.test_accuracies(), 1));
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}
