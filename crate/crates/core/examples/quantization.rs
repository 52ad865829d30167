//! The fake-quantizer grids used for weights, activations, errors and
//! gradients.
//!
//!     cargo run --example quantization

use cimtrain::math::{quantize, Mat, Quantizer, Rng, RoundMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = Mat::from_rows(&[[-1.3, -0.6, -0.1, 0.0, 0.2, 0.45, 0.9, 2.0]]);
    println!("input        {:?}", x.as_slice());
    for bits in [1, 2, 3, 5] {
        let q = quantize(&x, &Quantizer::nearest(bits, 1.0), None)?;
        println!("{bits}-bit ±1.0  {:?}", q.as_slice());
    }
    let q = quantize(&x, &Quantizer::max_abs(3, RoundMode::Nearest), None)?;
    println!("3-bit maxabs {:?}", q.as_slice());

    // Stochastic rounding is unbiased: the mean lands on the input.
    let one = Mat::filled(1, 10000, 0.3);
    let q = quantize(&one, &Quantizer::stochastic(2, 1.0), Some(&mut Rng::new(0)))?;
    println!("2-bit stochastic mean of 0.3 over 10000 draws: {:.4}", q.sum() / 10000.0);
    Ok(())
}
