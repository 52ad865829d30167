//! Area, energy and latency of on-chip training.
//!
//! A [`Floorplan`] places every weight matrix on whole tiles of subarrays and
//! adds the training periphery: a second, rotated ADC bank per array for BP's
//! transposed reads, one weight gradient unit (WGU) for BP or one per layer for
//! DFA, and DFA's shared feedback array. [`CostReport`] combines the floorplan
//! with [`UnitCosts`] and closed-form per-epoch event counts.

mod estimate;
mod floorplan;
mod units;

pub use estimate::{
    backward_batch_latency, batch_profile, estimate_area, estimate_energy, estimate_latency, feedback_cell_area,
    AreaBreakdown, CostReport, EnergyBreakdown, EpochCounts, FloorplanSummary, LatencyBreakdown, LayerCounts, Shares,
};
pub use floorplan::{
    adcs_per_subarray, build_floorplan, subarrays_per_tile, FeedbackPlan, Floorplan, LayerPlan, DEFAULT_TILE_DIM,
};
pub use units::{AreaCosts, EnergyCosts, LatencyCosts, TrafficWidths, UnitCosts, PROFILE_VERSION};

use thiserror::Error;

use crate::analog::BackendError;

#[derive(Debug, Error)]
pub enum HwCostError {
    #[error("cost profile: {0}")]
    Profile(String),
    #[error("invalid floorplan: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}
