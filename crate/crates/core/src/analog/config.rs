use serde::{Deserialize, Serialize};

use super::BackendError;

/// How the ADC reference range is chosen for each conversion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdcRange {
    /// `[0, subarray_rows * g_max * v_max]`: the largest current a column can
    /// carry.
    FullScale,
    /// `[0, I_peak]` where `I_peak` is the largest column current seen by this
    /// subarray read (one shared reference for all columns and both
    /// conductance polarities).
    PerRead,
    /// No conversion error. Used to isolate the other nonidealities.
    Bypass,
}

/// Crossbar geometry and nonideality parameters.
///
/// Conductances are in normalized units (`g_max = 1` by default) and read
/// voltages lie in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossbarConfig {
    pub subarray_rows: usize,
    pub subarray_cols: usize,
    pub adc_bits: u32,
    pub adc_range: AdcRange,
    /// Columns sharing one ADC through a multiplexer.
    pub adc_col_mux: usize,
    pub g_min: f64,
    pub g_max: f64,
    /// Programmable levels per conductance are `2^weight_bits`.
    pub weight_bits: u32,
    /// Weight magnitude mapped onto the full conductance swing.
    pub w_range: f64,
    /// Relative std of the static per-device scale factor.
    pub d2d_sigma: f64,
    /// Relative std of the error on every programming pulse.
    pub c2c_sigma: f64,
    /// Per-cell wire resistance as a fraction of `1 / g_max`.
    pub wire_r: f64,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        CrossbarConfig {
            subarray_rows: 128,
            subarray_cols: 128,
            adc_bits: 5,
            adc_range: AdcRange::PerRead,
            adc_col_mux: 8,
            g_min: 0.1,
            g_max: 1.0,
            weight_bits: 8,
            w_range: 1.0,
            d2d_sigma: 0.0,
            c2c_sigma: 0.0,
            wire_r: 0.0,
        }
    }
}

impl CrossbarConfig {
    /// All nonidealities off and 16-bit conversion everywhere.
    pub fn ideal() -> Self {
        CrossbarConfig { adc_bits: 16, weight_bits: 16, ..CrossbarConfig::default() }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |msg: String| Err(BackendError::Config(msg));
        if self.subarray_rows == 0 || self.subarray_cols == 0 {
            return bad("subarray dimensions must be at least 1".into());
        }
        if self.adc_bits == 0 || self.adc_bits > 32 {
            return bad(format!("adc_bits must be in 1..=32, got {}", self.adc_bits));
        }
        if self.weight_bits == 0 || self.weight_bits > 31 {
            return bad(format!("weight_bits must be in 1..=31, got {}", self.weight_bits));
        }
        if self.adc_col_mux == 0 {
            return bad("adc_col_mux must be at least 1".into());
        }
        if !(self.g_min > 0.0 && self.g_min < self.g_max && self.g_max.is_finite()) {
            return bad(format!("need 0 < g_min < g_max, got {} and {}", self.g_min, self.g_max));
        }
        if !(self.w_range > 0.0 && self.w_range.is_finite()) {
            return bad(format!("w_range must be positive, got {}", self.w_range));
        }
        for (name, v) in [("d2d_sigma", self.d2d_sigma), ("c2c_sigma", self.c2c_sigma), ("wire_r", self.wire_r)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    /// Conductance per unit weight.
    pub fn scale(&self) -> f64 {
        (self.g_max - self.g_min) / self.w_range
    }

    /// Largest programmable level index.
    pub fn max_level(&self) -> u32 {
        ((1u64 << self.weight_bits) - 1) as u32
    }

    pub fn level_conductance(&self, level: u32) -> f64 {
        self.g_min + level as f64 * (self.g_max - self.g_min) / self.max_level() as f64
    }

    /// `subarray_rows * g_max * v_max` with `v_max = 1`.
    pub fn full_scale_current(&self) -> f64 {
        self.subarray_rows as f64 * self.g_max
    }

    /// Subarray grid covering a `rows × cols` array.
    pub fn subarray_grid(&self, rows: usize, cols: usize) -> (usize, usize) {
        (rows.div_ceil(self.subarray_rows), cols.div_ceil(self.subarray_cols))
    }

    pub fn subarray_count(&self, rows: usize, cols: usize) -> usize {
        let (r, c) = self.subarray_grid(rows, cols);
        r * c
    }
}
