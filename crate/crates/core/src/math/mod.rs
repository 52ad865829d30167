//! Dense linear algebra, seeded randomness and fake-quantization.

mod mat;
mod quant;
mod rng;

pub use mat::{outer, Mat};
pub use quant::{quantize, QuantRange, Quantizer, RoundMode};
pub use rng::{streams, Rng};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MathError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    Shape { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("data length {len} does not match {rows}x{cols}")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("invalid quantizer: {0}")]
    Quantizer(String),
}

impl MathError {
    pub(crate) fn shape(op: &'static str, a: &Mat, b: &Mat) -> Self {
        MathError::Shape { op, left: a.shape(), right: b.shape() }
    }
}
