use crate::math::{Mat, Rng};

use super::{AdcRange, BackendError, CrossbarConfig};

/// Uniform conversion of a non-negative current onto `2^bits` levels spanning
/// `[0, full_scale]` (both ends included). Currents above full scale clip.
pub fn adc_quantize(current: f64, full_scale: f64, bits: u32) -> f64 {
    if full_scale <= 0.0 {
        return 0.0;
    }
    let top = ((1u64 << bits) - 1) as f64;
    let step = full_scale / top;
    (current / step).clamp(0.0, top).round_ties_even() * step
}

/// ADC conversion against the fixed full-scale reference of `cfg`.
pub fn adc_read(current: f64, cfg: &CrossbarConfig) -> f64 {
    adc_quantize(current, cfg.full_scale_current(), cfg.adc_bits)
}

/// First-order series-resistance attenuation of the cell at global position
/// `(row, col)` given its conductance.
pub fn ir_drop_factor(row: usize, col: usize, conductance: f64, cfg: &CrossbarConfig) -> f64 {
    let dist = (row % cfg.subarray_rows + col % cfg.subarray_cols) as f64;
    1.0 / (1.0 + cfg.wire_r * dist * conductance / cfg.g_max)
}

/// Attenuation of the positive-polarity device at `(row, col)` of `arr`.
pub fn ir_drop_attenuation(row: usize, col: usize, cfg: &CrossbarConfig, arr: &CrossbarArray) -> f64 {
    let idx = row * arr.cols + col;
    ir_drop_factor(row, col, arr.g_pos[idx] * arr.s_pos[idx], cfg)
}

/// Outcome of one programming pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ProgramStats {
    /// Devices that received a programming pulse.
    pub cells_written: usize,
    /// Weights beyond `±w_range` that were clipped.
    pub clipped: usize,
}

/// Differential-pair conductance array holding `Wᵀ`: row `i` is driven by
/// input `i`, column `j` collects the current of output `j`.
#[derive(Clone, Debug)]
pub struct CrossbarArray {
    rows: usize,
    cols: usize,
    cfg: CrossbarConfig,
    g_pos: Vec<f64>,
    g_neg: Vec<f64>,
    level_pos: Vec<u32>,
    level_neg: Vec<u32>,
    s_pos: Vec<f64>,
    s_neg: Vec<f64>,
    eff_pos: Vec<f64>,
    eff_neg: Vec<f64>,
    programmed: bool,
    clipped_total: u64,
}

/// Programs a fresh array for weight matrix `w` (`d_out × d_in`). Device-to-
/// device factors are drawn first from `rng`, then the programming noise.
pub fn program_weights(w: &Mat, cfg: &CrossbarConfig, rng: &mut Rng) -> Result<CrossbarArray, BackendError> {
    let mut arr = CrossbarArray::new(w.cols(), w.rows(), cfg, rng)?;
    arr.program(w, rng)?;
    Ok(arr)
}

impl CrossbarArray {
    /// Unprogrammed array of `rows × cols` cells (all at `g_min`) with its
    /// static device factors drawn from `device_rng`.
    pub fn new(rows: usize, cols: usize, cfg: &CrossbarConfig, device_rng: &mut Rng) -> Result<Self, BackendError> {
        cfg.validate()?;
        let n = rows * cols;
        let mut draw = || {
            if cfg.d2d_sigma > 0.0 {
                (1.0 + cfg.d2d_sigma * device_rng.normal()).max(0.0)
            } else {
                1.0
            }
        };
        let mut s_pos = Vec::with_capacity(n);
        let mut s_neg = Vec::with_capacity(n);
        for _ in 0..n {
            s_pos.push(draw());
            s_neg.push(draw());
        }
        let mut arr = CrossbarArray {
            rows,
            cols,
            cfg: cfg.clone(),
            g_pos: vec![cfg.g_min; n],
            g_neg: vec![cfg.g_min; n],
            level_pos: vec![0; n],
            level_neg: vec![0; n],
            s_pos,
            s_neg,
            eff_pos: vec![0.0; n],
            eff_neg: vec![0.0; n],
            programmed: false,
            clipped_total: 0,
        };
        for idx in 0..n {
            arr.refresh(idx);
        }
        Ok(arr)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn config(&self) -> &CrossbarConfig {
        &self.cfg
    }

    pub fn conductances(&self, row: usize, col: usize) -> (f64, f64) {
        let idx = row * self.cols + col;
        (self.g_pos[idx], self.g_neg[idx])
    }

    /// Static device factors `(s⁺, s⁻)` of a cell.
    pub fn device_factors(&self, row: usize, col: usize) -> (f64, f64) {
        let idx = row * self.cols + col;
        (self.s_pos[idx], self.s_neg[idx])
    }

    pub fn clipped_total(&self) -> u64 {
        self.clipped_total
    }

    fn refresh(&mut self, idx: usize) {
        let (i, j) = (idx / self.cols, idx % self.cols);
        let gp = self.g_pos[idx] * self.s_pos[idx];
        let gn = self.g_neg[idx] * self.s_neg[idx];
        self.eff_pos[idx] = gp * ir_drop_factor(i, j, gp, &self.cfg);
        self.eff_neg[idx] = gn * ir_drop_factor(i, j, gn, &self.cfg);
    }

    fn pulse(cfg: &CrossbarConfig, level: u32, rng: &mut Rng) -> f64 {
        let target = cfg.level_conductance(level);
        let g = if cfg.c2c_sigma > 0.0 { target * (1.0 + cfg.c2c_sigma * rng.normal()) } else { target };
        g.clamp(cfg.g_min, cfg.g_max)
    }

    /// Programs weights `w` (`d_out × d_in`, i.e. the transpose of this array).
    ///
    /// Only devices whose target level changed receive a pulse, and every
    /// pulse lands at `target · (1 + ε)`, `ε ~ N(0, c2c_sigma)`.
    pub fn program(&mut self, w: &Mat, rng: &mut Rng) -> Result<ProgramStats, BackendError> {
        if w.shape() != (self.cols, self.rows) {
            return Err(BackendError::Shape { what: "program", expected: (self.cols, self.rows), got: w.shape() });
        }
        if !w.is_finite() {
            return Err(BackendError::NonFinite("program"));
        }
        let cfg = self.cfg.clone();
        let cfg = &cfg;
        let top = cfg.max_level();
        let per_level = top as f64 / cfg.w_range;
        let mut stats = ProgramStats::default();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = w[(j, i)];
                let mag = v.abs();
                if mag > cfg.w_range {
                    stats.clipped += 1;
                }
                let level = ((mag * per_level).round_ties_even().min(top as f64)) as u32;
                let (lp, ln) = if v >= 0.0 { (level, 0) } else { (0, level) };
                let idx = i * self.cols + j;
                let mut touched = false;
                if !self.programmed || lp != self.level_pos[idx] {
                    self.g_pos[idx] = Self::pulse(cfg, lp, rng);
                    self.level_pos[idx] = lp;
                    stats.cells_written += 1;
                    touched = true;
                }
                if !self.programmed || ln != self.level_neg[idx] {
                    self.g_neg[idx] = Self::pulse(cfg, ln, rng);
                    self.level_neg[idx] = ln;
                    stats.cells_written += 1;
                    touched = true;
                }
                if touched {
                    self.refresh(idx);
                }
            }
        }
        self.programmed = true;
        self.clipped_total += stats.clipped as u64;
        Ok(stats)
    }

    /// Weights implied by the stored conductance pairs, `(g⁺ − g⁻) / k`,
    /// as a `d_out × d_in` matrix. Device factors and IR drop are read-time
    /// effects and are not included.
    pub fn readback(&self) -> Mat {
        let k = self.cfg.scale();
        Mat::from_fn(self.cols, self.rows, |j, i| {
            let idx = i * self.cols + j;
            (self.g_pos[idx] - self.g_neg[idx]) / k
        })
    }

    /// Weights the network holds after programming `w`: the stored device
    /// state plus the sub-level remainder of `w` that no level step has
    /// absorbed yet. Programming errors therefore stay in the weights and
    /// accumulate over successive writes. Clipped entries keep no remainder.
    pub fn realized(&self, w: &Mat) -> Mat {
        let per_level = self.cfg.max_level() as f64 / self.cfg.w_range;
        let mut out = self.readback();
        for (o, &v) in out.as_mut_slice().iter_mut().zip(w.as_slice()) {
            if v.abs() <= self.cfg.w_range {
                let snapped = (v.abs() * per_level).round_ties_even() / per_level;
                *o += v - snapped.copysign(v);
            }
        }
        out
    }

    /// `W x` for a batch of column vectors `x` (`rows × batch`).
    pub fn matvec(&self, x: &Mat) -> Result<Mat, BackendError> {
        if x.rows() != self.rows {
            return Err(BackendError::Shape { what: "matvec", expected: (self.rows, x.cols()), got: x.shape() });
        }
        Ok(self.read(x, false))
    }

    /// `Wᵀ x` through the transposed readout (`x` is `cols × batch`).
    pub fn matvec_transposed(&self, x: &Mat) -> Result<Mat, BackendError> {
        if x.rows() != self.cols {
            return Err(BackendError::Shape {
                what: "matvec_transposed",
                expected: (self.cols, x.cols()),
                got: x.shape(),
            });
        }
        Ok(self.read(x, true))
    }

    /// Shared read path. In forward mode inputs drive rows and columns are
    /// sensed; in transposed mode the roles swap. Each input vector is
    /// normalized to `max |x| = 1`, split into its positive and negative parts
    /// (two read phases), and every subarray's sensed currents are converted
    /// separately before digital partial-sum accumulation.
    fn read(&self, x: &Mat, transposed: bool) -> Mat {
        let cfg = &self.cfg;
        let batch = x.cols();
        let (n_in, n_out) = if transposed { (self.cols, self.rows) } else { (self.rows, self.cols) };
        let (blk_in, blk_out) =
            if transposed { (cfg.subarray_cols, cfg.subarray_rows) } else { (cfg.subarray_rows, cfg.subarray_cols) };

        let mut scale = vec![0.0f64; batch];
        for i in 0..n_in {
            for (s, &v) in scale.iter_mut().zip(x.row(i)) {
                *s = s.max(v.abs());
            }
        }
        let mut v_pos = Mat::zeros(n_in, batch);
        let mut v_neg = Mat::zeros(n_in, batch);
        let mut has_neg = false;
        for i in 0..n_in {
            let src = x.row(i);
            for b in 0..batch {
                if scale[b] == 0.0 {
                    continue;
                }
                let v = src[b] / scale[b];
                if v >= 0.0 {
                    v_pos[(i, b)] = v;
                } else {
                    v_neg[(i, b)] = -v;
                    has_neg = true;
                }
            }
        }

        let full_scale = cfg.full_scale_current();
        let mut acc = Mat::zeros(n_out, batch);
        let mut i_pos = Mat::zeros(blk_out, batch);
        let mut i_neg = Mat::zeros(blk_out, batch);
        let mut peak = vec![0.0f64; batch];

        for in_start in (0..n_in).step_by(blk_in) {
            let in_end = (in_start + blk_in).min(n_in);
            for out_start in (0..n_out).step_by(blk_out) {
                let out_end = (out_start + blk_out).min(n_out);
                let width = out_end - out_start;
                let phases: &[(&Mat, f64)] = if has_neg { &[(&v_pos, 1.0), (&v_neg, -1.0)] } else { &[(&v_pos, 1.0)] };
                for &(volts, sign) in phases {
                    i_pos.as_mut_slice()[..width * batch].fill(0.0);
                    i_neg.as_mut_slice()[..width * batch].fill(0.0);
                    // Both loop orders accumulate each current in ascending
                    // input index; they differ only in memory access pattern.
                    if transposed {
                        for o in out_start..out_end {
                            let local = o - out_start;
                            let p_row = i_pos.row_mut(local);
                            let n_row = i_neg.row_mut(local);
                            for r in in_start..in_end {
                                let idx = o * self.cols + r;
                                accumulate(p_row, n_row, self.eff_pos[idx], self.eff_neg[idx], volts.row(r));
                            }
                        }
                    } else {
                        for r in in_start..in_end {
                            let vin = volts.row(r);
                            for o in out_start..out_end {
                                let idx = r * self.cols + o;
                                let local = o - out_start;
                                accumulate(
                                    i_pos.row_mut(local),
                                    i_neg.row_mut(local),
                                    self.eff_pos[idx],
                                    self.eff_neg[idx],
                                    vin,
                                );
                            }
                        }
                    }
                    let reference: &[f64] = match cfg.adc_range {
                        AdcRange::PerRead => {
                            peak.fill(0.0);
                            for local in 0..width {
                                for b in 0..batch {
                                    peak[b] = peak[b].max(i_pos[(local, b)]).max(i_neg[(local, b)]);
                                }
                            }
                            &peak
                        }
                        _ => &[],
                    };
                    for local in 0..width {
                        let out = acc.row_mut(out_start + local);
                        for b in 0..batch {
                            let (p, n) = (i_pos[(local, b)], i_neg[(local, b)]);
                            let diff = match cfg.adc_range {
                                AdcRange::Bypass => p - n,
                                AdcRange::FullScale => {
                                    adc_quantize(p, full_scale, cfg.adc_bits)
                                        - adc_quantize(n, full_scale, cfg.adc_bits)
                                }
                                AdcRange::PerRead => {
                                    adc_quantize(p, reference[b], cfg.adc_bits)
                                        - adc_quantize(n, reference[b], cfg.adc_bits)
                                }
                            };
                            out[b] += sign * diff;
                        }
                    }
                }
            }
        }

        let k = cfg.scale();
        for o in 0..n_out {
            for (v, &s) in acc.row_mut(o).iter_mut().zip(&scale) {
                *v *= s / k;
            }
        }
        acc
    }
}

#[inline]
fn accumulate(p_row: &mut [f64], n_row: &mut [f64], gp: f64, gn: f64, volts: &[f64]) {
    for ((p, n), &v) in p_row.iter_mut().zip(n_row.iter_mut()).zip(volts) {
        *p += gp * v;
        *n += gn * v;
    }
}
