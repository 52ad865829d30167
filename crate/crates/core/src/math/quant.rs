use serde::{Deserialize, Serialize};

use super::{Mat, MathError, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundMode {
    Nearest,
    Stochastic,
}

/// Where the symmetric clipping bound `r` comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantRange {
    /// Fixed bound; values outside `[-r, r]` are clipped.
    Fixed(f64),
    /// Bound taken per call as the largest magnitude in the input.
    MaxAbs,
}

/// Uniform symmetric fake-quantizer.
///
/// For `bits >= 2` the grid is `k * step` with `step = 2r / (2^bits - 1)` and
/// `|k| <= 2^(bits-1) - 1`, so zero is a level. The one-bit grid is `{-r, +r}`.
/// Nearest rounding breaks ties toward the even code `k`; for one bit a tie
/// (x = 0) goes to `-r` (code 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    pub bits: u32,
    pub range: QuantRange,
    pub mode: RoundMode,
}

impl Quantizer {
    pub fn nearest(bits: u32, range: f64) -> Self {
        Quantizer { bits, range: QuantRange::Fixed(range), mode: RoundMode::Nearest }
    }

    pub fn stochastic(bits: u32, range: f64) -> Self {
        Quantizer { bits, range: QuantRange::Fixed(range), mode: RoundMode::Stochastic }
    }

    pub fn max_abs(bits: u32, mode: RoundMode) -> Self {
        Quantizer { bits, range: QuantRange::MaxAbs, mode }
    }

    pub fn validate(&self) -> Result<(), MathError> {
        if self.bits == 0 || self.bits > 52 {
            return Err(MathError::Quantizer(format!("bits must be in 1..=52, got {}", self.bits)));
        }
        if let QuantRange::Fixed(r) = self.range {
            if !(r.is_finite() && r > 0.0) {
                return Err(MathError::Quantizer(format!("range must be positive, got {r}")));
            }
        }
        Ok(())
    }

    /// Grid spacing for bound `r`.
    pub fn step_for(&self, r: f64) -> f64 {
        if self.bits == 1 {
            2.0 * r
        } else {
            2.0 * r / ((1u64 << self.bits) - 1) as f64
        }
    }

    /// Largest code magnitude `K` (`bits >= 2`).
    fn max_code(&self) -> f64 {
        ((1u64 << (self.bits - 1)) - 1) as f64
    }

    fn snap(&self, x: f64, r: f64, rng: &mut Option<&mut Rng>) -> f64 {
        if self.bits == 1 {
            let c = x.clamp(-r, r);
            let up = match self.mode {
                RoundMode::Nearest => c > 0.0,
                RoundMode::Stochastic => {
                    let p = (c + r) / (2.0 * r);
                    rng.as_deref_mut().expect("checked").uniform() < p
                }
            };
            return if up { r } else { -r };
        }
        let step = self.step_for(r);
        let kmax = self.max_code();
        let t = (x / step).clamp(-kmax, kmax);
        let k = match self.mode {
            RoundMode::Nearest => t.round_ties_even(),
            RoundMode::Stochastic => {
                let lo = t.floor();
                let u = rng.as_deref_mut().expect("checked").uniform();
                if u < t - lo {
                    lo + 1.0
                } else {
                    lo
                }
            }
        };
        k * step
    }

    /// Applies the quantizer to a single value with an explicit bound.
    pub fn apply_scalar(&self, x: f64, r: f64) -> f64 {
        debug_assert_eq!(self.mode, RoundMode::Nearest);
        self.snap(x, r, &mut None)
    }
}

/// Snaps every entry of `x` onto the quantizer grid.
///
/// `rng` is required in stochastic mode and ignored otherwise.
pub fn quantize(x: &Mat, q: &Quantizer, rng: Option<&mut Rng>) -> Result<Mat, MathError> {
    q.validate()?;
    if q.mode == RoundMode::Stochastic && rng.is_none() {
        return Err(MathError::Quantizer("stochastic rounding needs an rng".into()));
    }
    let r = match q.range {
        QuantRange::Fixed(r) => r,
        QuantRange::MaxAbs => {
            let m = x.max_abs();
            if m == 0.0 {
                return Ok(x.clone());
            }
            m
        }
    };
    let mut rng = rng;
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        *v = q.snap(*v, r, &mut rng);
    }
    Ok(out)
}
