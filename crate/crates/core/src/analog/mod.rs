//! Resistive-crossbar compute backend.
//!
//! Weights are stored as differential conductance pairs split over
//! fixed-size subarrays. A read applies the input as row voltages, senses the
//! column currents of every subarray through an ADC and accumulates the
//! digitized partial sums. Programming noise, static device variation and
//! IR drop act on the conductances.

mod backend;
mod config;
mod crossbar;

pub use backend::{Backend, EventKind, EventSink, EventTally, HwEvent, TallyEntry};
pub use config::{AdcRange, CrossbarConfig};
pub use crossbar::{
    adc_quantize, adc_read, ir_drop_attenuation, ir_drop_factor, program_weights, CrossbarArray, ProgramStats,
};

use thiserror::Error;

use crate::math::MathError;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid crossbar config: {0}")]
    Config(String),
    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    Shape { what: &'static str, expected: (usize, usize), got: (usize, usize) },
    #[error("{0}: non-finite weights")]
    NonFinite(&'static str),
    #[error("layer {0} has no programmed array (call Backend::load first)")]
    NotLoaded(usize),
    #[error(transparent)]
    Math(#[from] MathError),
}
