//! One weight matrix on a simulated crossbar: read error against the exact
//! product as ADC resolution, wire resistance and device variation change.
//!
//!     cargo run --release --example analog_crossbar

use cimtrain::analog::{program_weights, CrossbarConfig};
use cimtrain::math::{Mat, Rng};

fn rel_error(cfg: &CrossbarConfig, w: &Mat, x: &Mat) -> Result<f64, Box<dyn std::error::Error>> {
    let arr = program_weights(w, cfg, &mut Rng::new(7))?;
    let got = arr.matvec(x)?;
    let want = w.matmul(x)?;
    let norm = |m: &Mat| m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(norm(&got.sub(&want)?) / norm(&want))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = Rng::new(1);
    let w = Mat::from_fn(64, 256, |_, _| rng.uniform_in(-0.2, 0.2));
    let x = Mat::from_fn(256, 16, |_, _| rng.uniform());

    println!("ADC bits -> relative read error");
    for bits in 1..=8 {
        let cfg = CrossbarConfig { adc_bits: bits, ..CrossbarConfig::default() };
        println!("  {bits}: {:.4}", rel_error(&cfg, &w, &x)?);
    }

    println!("subarray size at wire_r = 1e-3 (8-bit ADC)");
    for n in [32, 64, 128, 256] {
        let cfg = CrossbarConfig {
            subarray_rows: n,
            subarray_cols: n,
            adc_bits: 8,
            wire_r: 1e-3,
            ..CrossbarConfig::default()
        };
        println!("  {n:>3}: {:.4}", rel_error(&cfg, &w, &x)?);
    }

    println!("device-to-device sigma (8-bit ADC)");
    for sigma in [0.0, 0.01, 0.05] {
        let cfg = CrossbarConfig { adc_bits: 8, d2d_sigma: sigma, ..CrossbarConfig::default() };
        println!("  {sigma:.2}: {:.4}", rel_error(&cfg, &w, &x)?);
    }
    Ok(())
}
