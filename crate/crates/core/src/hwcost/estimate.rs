use serde::Serialize;

use crate::analog::{EventKind, EventTally};
use crate::trainers::TrainerKind;

use super::{Floorplan, UnitCosts};

/// Events one layer sees during one training epoch.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LayerCounts {
    pub forward_vectors: u64,
    pub transposed_vectors: u64,
    pub gradient_events: u64,
    pub gradient_macs: u64,
    pub program_events: u64,
    pub cells_written: u64,
    pub offchip_bits: u64,
    pub onchip_bits: u64,
}

/// Closed-form per-epoch event counts. Batches are `samples / batch_size`
/// full batches plus one short batch for the remainder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EpochCounts {
    pub samples: u64,
    pub batch_size: u64,
    pub batches: u64,
    pub layers: Vec<LayerCounts>,
    pub feedback_vectors: u64,
    pub feedback_onchip_bits: u64,
}

/// `(batch size, how many such batches)` for one epoch.
pub fn batch_profile(samples: u64, batch_size: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(2);
    if batch_size == 0 {
        return out;
    }
    if samples / batch_size > 0 {
        out.push((batch_size, samples / batch_size));
    }
    if samples % batch_size > 0 {
        out.push((samples % batch_size, 1));
    }
    out
}

/// Off-chip bits moved for one layer and one batch: activations and errors
/// stored and reloaded, gradients written out and read back for the update.
/// The formula is the same for both learning rules.
fn offchip_bits(rows: u64, cols: u64, b: u64, uc: &UnitCosts) -> u64 {
    let t = &uc.traffic;
    2 * b * rows * t.activation as u64 + 2 * b * cols * t.error as u64 + 2 * rows * cols * t.gradient as u64
}

impl EpochCounts {
    pub fn closed_form(fp: &Floorplan, uc: &UnitCosts, samples: u64, batch_size: u64) -> Self {
        let profile = batch_profile(samples, batch_size);
        let batches: u64 = profile.iter().map(|&(_, k)| k).sum();
        let n = fp.depth();
        let (act, err) = (uc.traffic.activation as u64, uc.traffic.error as u64);
        let layers = fp
            .layers
            .iter()
            .map(|l| {
                let (r, c) = (l.rows as u64, l.cols as u64);
                let transposed = fp.kind == TrainerKind::Bp && l.layer >= 2;
                let mut lc = LayerCounts {
                    forward_vectors: samples,
                    transposed_vectors: if transposed { samples } else { 0 },
                    gradient_events: batches,
                    gradient_macs: r * c * samples,
                    program_events: batches,
                    cells_written: r * c * batches,
                    ..LayerCounts::default()
                };
                for &(b, k) in &profile {
                    lc.offchip_bits += k * offchip_bits(r, c, b, uc);
                }
                lc.onchip_bits = samples * (r + c) * act + lc.transposed_vectors * (r + c) * err;
                lc
            })
            .collect();
        let (feedback_vectors, feedback_onchip_bits) = match &fp.feedback {
            Some(f) if n > 1 => (samples, samples * (f.rows + f.cols) as u64 * err),
            _ => (0, 0),
        };
        EpochCounts { samples, batch_size, batches, layers, feedback_vectors, feedback_onchip_bits }
    }

    pub fn offchip_bits(&self) -> u64 {
        self.layers.iter().map(|l| l.offchip_bits).sum()
    }

    pub fn onchip_bits(&self) -> u64 {
        self.layers.iter().map(|l| l.onchip_bits).sum::<u64>() + self.feedback_onchip_bits
    }

    /// Differences between these counts (times `epochs`) and what a live
    /// backend recorded. Empty when they agree.
    pub fn compare_tally(&self, tally: &EventTally, epochs: u64) -> Vec<String> {
        let mut diffs = Vec::new();
        let mut check = |what: String, expected: u64, got: u64| {
            if expected != got {
                diffs.push(format!("{what}: expected {expected}, recorded {got}"));
            }
        };
        for (k, l) in self.layers.iter().enumerate() {
            let i = k + 1;
            let g = |kind| tally.get(kind, i);
            check(format!("layer {i} forward reads"), epochs * l.forward_vectors, g(EventKind::ForwardRead).events);
            check(
                format!("layer {i} transposed reads"),
                epochs * l.transposed_vectors,
                g(EventKind::TransposedRead).events,
            );
            check(
                format!("layer {i} gradient events"),
                epochs * l.gradient_events,
                g(EventKind::GradientCompute).events,
            );
            check(format!("layer {i} gradient MACs"), epochs * l.gradient_macs, g(EventKind::GradientCompute).cell_ops);
            check(format!("layer {i} program events"), epochs * l.program_events, g(EventKind::ProgramWrite).events);
            check(format!("layer {i} cells written"), epochs * l.cells_written, g(EventKind::ProgramWrite).cell_ops);
        }
        check("feedback reads".into(), epochs * self.feedback_vectors, tally.get(EventKind::FeedbackRead, 0).events);
        diffs
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AreaBreakdown {
    pub cim_cells: f64,
    pub adc: f64,
    pub ic: f64,
    pub accumulation: f64,
    pub wgu: f64,
    pub buffer: f64,
    pub other: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub forward_reads: f64,
    pub backward_reads: f64,
    pub gradient_compute: f64,
    pub writes: f64,
    pub onchip_buffer: f64,
    pub offchip_buffer: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LatencyBreakdown {
    pub forward: f64,
    pub error_transport: f64,
    pub gradient_compute: f64,
    pub write: f64,
    pub buffering: f64,
    pub total: f64,
}

impl AreaBreakdown {
    fn seal(mut self) -> Self {
        self.total = self.cim_cells + self.adc + self.ic + self.accumulation + self.wgu + self.buffer + self.other;
        self
    }

    pub fn categories(&self) -> [(&'static str, f64); 7] {
        [
            ("cim_cells", self.cim_cells),
            ("adc", self.adc),
            ("ic", self.ic),
            ("accumulation", self.accumulation),
            ("wgu", self.wgu),
            ("buffer", self.buffer),
            ("other", self.other),
        ]
    }
}

impl EnergyBreakdown {
    fn seal(mut self) -> Self {
        self.total = self.forward_reads
            + self.backward_reads
            + self.gradient_compute
            + self.writes
            + self.onchip_buffer
            + self.offchip_buffer;
        self
    }

    pub fn categories(&self) -> [(&'static str, f64); 6] {
        [
            ("forward_reads", self.forward_reads),
            ("backward_reads", self.backward_reads),
            ("gradient_compute", self.gradient_compute),
            ("writes", self.writes),
            ("onchip_buffer", self.onchip_buffer),
            ("offchip_buffer", self.offchip_buffer),
        ]
    }
}

impl LatencyBreakdown {
    fn seal(mut self) -> Self {
        self.total = self.forward + self.error_transport + self.gradient_compute + self.write + self.buffering;
        self
    }

    pub fn categories(&self) -> [(&'static str, f64); 5] {
        [
            ("forward", self.forward),
            ("error_transport", self.error_transport),
            ("gradient_compute", self.gradient_compute),
            ("write", self.write),
            ("buffering", self.buffering),
        ]
    }

    fn add(&mut self, o: &LatencyBreakdown, times: f64) {
        self.forward += o.forward * times;
        self.error_transport += o.error_transport * times;
        self.gradient_compute += o.gradient_compute * times;
        self.write += o.write * times;
        self.buffering += o.buffering * times;
    }
}

/// Cells plus per-tile periphery of every allocated tile, ADC banks, WGUs and
/// the chip-level blocks. The feedback array adds cells only.
pub fn estimate_area(fp: &Floorplan, uc: &UnitCosts) -> AreaBreakdown {
    let a = &uc.area;
    let tiles = fp.tiles() as f64;
    let feedback_cells = fp.feedback.as_ref().map_or(0, |f| f.provisioned_cells);
    AreaBreakdown {
        cim_cells: (fp.provisioned_cells() + feedback_cells) as f64 * a.cell,
        adc: fp.adc_count() as f64 * uc.adc_area(fp.adc_bits),
        ic: tiles * a.ic_per_tile,
        accumulation: tiles * a.accumulation_per_tile,
        wgu: fp.wgu_count as f64 * fp.wgu_capacity as f64 * a.wgu_per_entry,
        buffer: tiles * a.buffer_per_tile,
        other: a.global,
        total: 0.0,
    }
    .seal()
}

/// Area of the feedback array's cells alone.
pub fn feedback_cell_area(fp: &Floorplan, uc: &UnitCosts) -> f64 {
    fp.feedback.as_ref().map_or(0.0, |f| f.provisioned_cells as f64 * uc.area.cell)
}

pub fn estimate_energy(fp: &Floorplan, uc: &UnitCosts, counts: &EpochCounts, epochs: u64) -> EnergyBreakdown {
    let e = &uc.energy;
    let adc = uc.adc_energy(fp.adc_bits);
    let mut out = EnergyBreakdown::default();
    for (l, c) in fp.layers.iter().zip(&counts.layers) {
        let cells = (l.rows * l.cols) as f64;
        let fwd_conv = (l.cols * l.subarray_grid.0) as f64;
        let bwd_conv = (l.rows * l.subarray_grid.1) as f64;
        out.forward_reads += c.forward_vectors as f64 * (cells * e.cell_read + fwd_conv * adc);
        out.backward_reads += c.transposed_vectors as f64 * (cells * e.cell_read + bwd_conv * adc);
        out.gradient_compute += c.gradient_macs as f64 * e.wgu_mac;
        out.writes += c.cells_written as f64 * e.write_per_cell;
    }
    if let Some(f) = &fp.feedback {
        let cells = (f.rows * f.cols) as f64;
        let conv = (f.cols * f.subarray_grid.0) as f64;
        out.backward_reads += counts.feedback_vectors as f64 * (cells * e.cell_read + conv * adc);
    }
    out.onchip_buffer = counts.onchip_bits() as f64 * e.onchip_buffer_bit;
    out.offchip_buffer = counts.offchip_bits() as f64 * uc.offchip_energy_bit();
    let k = epochs as f64;
    for v in [
        &mut out.forward_reads,
        &mut out.backward_reads,
        &mut out.gradient_compute,
        &mut out.writes,
        &mut out.onchip_buffer,
        &mut out.offchip_buffer,
    ] {
        *v *= k;
    }
    out.seal()
}

/// One layer's backward work for one batch, split by category. `update_buffering`
/// is the gradient traffic part of `buffering`.
struct LayerBackward {
    transport: f64,
    grad: f64,
    write: f64,
    buffering: f64,
    update_buffering: f64,
}

impl LayerBackward {
    fn path(&self) -> f64 {
        self.transport + self.grad + self.write + self.buffering
    }
}

fn layer_backward(fp: &Floorplan, uc: &UnitCosts, i: usize, b: f64) -> LayerBackward {
    let l = &fp.layers[i - 1];
    let lat = &uc.latency;
    let t = &uc.traffic;
    let (r, c) = (l.rows as f64, l.cols as f64);
    let read = fp.read_steps() as f64 * lat.read_cycle;
    let transposed = fp.kind == TrainerKind::Bp && i >= 2;
    let error_bits = 2.0 * b * c * t.error as f64;
    let update_bits = b * r * t.activation as f64 + 2.0 * r * c * t.gradient as f64;
    let onchip = if transposed { b * (r + c) * t.error as f64 * lat.onchip_buffer_bit } else { 0.0 };
    let update_buffering = update_bits * lat.offchip_buffer_bit;
    LayerBackward {
        transport: if transposed { b * read } else { 0.0 },
        grad: r * c * b * lat.wgu_mac,
        write: fp.write_rows(i) as f64 * lat.write_row,
        buffering: error_bits * lat.offchip_buffer_bit + update_buffering + onchip,
        update_buffering,
    }
}

/// Latency of one batch plus the update-path part (gradient compute, write
/// and gradient buffering) on the critical path.
fn batch_latency(fp: &Floorplan, uc: &UnitCosts, b: u64) -> (LatencyBreakdown, f64) {
    let lat = &uc.latency;
    let act = uc.traffic.activation as f64;
    let b = b as f64;
    let read = fp.read_steps() as f64 * lat.read_cycle;
    let mut out = LatencyBreakdown::default();
    for l in &fp.layers {
        let (r, c) = (l.rows as f64, l.cols as f64);
        out.forward += b * read;
        out.buffering += b * r * act * lat.offchip_buffer_bit + b * (r + c) * act * lat.onchip_buffer_bit;
    }
    let per_layer: Vec<LayerBackward> = (1..=fp.depth()).map(|i| layer_backward(fp, uc, i, b)).collect();
    let update;
    match fp.kind {
        TrainerKind::Bp => {
            for p in &per_layer {
                out.error_transport += p.transport;
                out.gradient_compute += p.grad;
                out.write += p.write;
                out.buffering += p.buffering;
            }
            update = per_layer.iter().map(|p| p.grad + p.write + p.update_buffering).sum();
        }
        TrainerKind::Dfa => {
            // one broadcast through the feedback array, then every layer
            // updates in parallel against its own memory block
            if let Some(f) = &fp.feedback {
                out.error_transport += b * read;
                out.buffering += b * (f.rows + f.cols) as f64 * uc.traffic.error as f64 * lat.onchip_buffer_bit;
            }
            let mut k = 0;
            for (j, p) in per_layer.iter().enumerate() {
                if p.path() > per_layer[k].path() {
                    k = j;
                }
            }
            let p = &per_layer[k];
            out.gradient_compute += p.grad;
            out.write += p.write;
            out.buffering += p.buffering;
            update = p.grad + p.write + p.update_buffering;
        }
    }
    (out, update)
}

/// Training latency for `epochs` epochs and the update-path part of it.
pub fn estimate_latency(fp: &Floorplan, uc: &UnitCosts, counts: &EpochCounts, epochs: u64) -> (LatencyBreakdown, f64) {
    let mut out = LatencyBreakdown::default();
    let mut update = 0.0;
    for (b, k) in batch_profile(counts.samples, counts.batch_size) {
        let (lb, u) = batch_latency(fp, uc, b);
        let times = (k * epochs) as f64;
        out.add(&lb, times);
        update += u * times;
    }
    (out.seal(), update)
}

/// Backward-phase latency of one full batch: everything except the forward
/// pass and its activation buffering.
pub fn backward_batch_latency(fp: &Floorplan, uc: &UnitCosts, batch_size: u64) -> f64 {
    let b = batch_size as f64;
    let per_layer: Vec<f64> = (1..=fp.depth()).map(|i| layer_backward(fp, uc, i, b).path()).collect();
    match fp.kind {
        TrainerKind::Bp => per_layer.iter().sum(),
        TrainerKind::Dfa => {
            let broadcast = fp.feedback.as_ref().map_or(0.0, |f| {
                b * fp.read_steps() as f64 * uc.latency.read_cycle
                    + b * (f.rows + f.cols) as f64 * uc.traffic.error as f64 * uc.latency.onchip_buffer_bit
            });
            broadcast + per_layer.iter().cloned().fold(0.0, f64::max)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Shares {
    pub offchip_energy: f64,
    pub buffering_latency: f64,
    /// Gradient compute, weight writes and gradient buffering over total latency.
    pub update_latency: f64,
    pub feedback_cell_area: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FloorplanSummary {
    pub tiles: usize,
    pub adc_count: usize,
    pub wgu_count: usize,
    pub mapped_cells: u64,
    pub provisioned_cells: u64,
    pub feedback_cells: u64,
    pub utilization: f64,
}

/// Area, energy and latency of training one network for some epochs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub trainer: TrainerKind,
    pub profile: String,
    pub layer_dims: Vec<usize>,
    pub epochs: u64,
    pub samples_per_epoch: u64,
    pub batch_size: u64,
    pub floorplan: FloorplanSummary,
    pub area_um2: AreaBreakdown,
    #[serde(rename = "energy_pJ")]
    pub energy_pj: EnergyBreakdown,
    pub latency_ns: LatencyBreakdown,
    pub backward_latency_per_batch_ns: f64,
    pub feedback_cell_area_um2: f64,
    pub offchip_bits_per_epoch: u64,
    pub onchip_bits_per_epoch: u64,
    pub shares: Shares,
}

fn share(part: f64, total: f64) -> f64 {
    if total > 0.0 {
        part / total
    } else {
        0.0
    }
}

impl CostReport {
    pub fn new(fp: &Floorplan, uc: &UnitCosts, samples: u64, batch_size: u64, epochs: u64) -> Self {
        let counts = EpochCounts::closed_form(fp, uc, samples, batch_size);
        let area = estimate_area(fp, uc);
        let energy = estimate_energy(fp, uc, &counts, epochs);
        let (latency, update) = estimate_latency(fp, uc, &counts, epochs);
        let fb_area = feedback_cell_area(fp, uc);
        CostReport {
            trainer: fp.kind,
            profile: uc.name.clone(),
            layer_dims: fp.layer_dims.clone(),
            epochs,
            samples_per_epoch: samples,
            batch_size,
            floorplan: FloorplanSummary {
                tiles: fp.tiles(),
                adc_count: fp.adc_count(),
                wgu_count: fp.wgu_count,
                mapped_cells: fp.mapped_cells(),
                provisioned_cells: fp.provisioned_cells(),
                feedback_cells: fp.feedback.as_ref().map_or(0, |f| f.mapped_cells),
                utilization: fp.utilization(),
            },
            shares: Shares {
                offchip_energy: share(energy.offchip_buffer, energy.total),
                buffering_latency: share(latency.buffering, latency.total),
                update_latency: share(update, latency.total),
                feedback_cell_area: share(fb_area, area.total),
            },
            backward_latency_per_batch_ns: backward_batch_latency(fp, uc, batch_size),
            feedback_cell_area_um2: fb_area,
            offchip_bits_per_epoch: counts.offchip_bits(),
            onchip_bits_per_epoch: counts.onchip_bits(),
            area_um2: area,
            energy_pj: energy,
            latency_ns: latency,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// `section,category,value` rows, one per category and total.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("section,category,value\n");
        let mut push = |section: &str, rows: &[(&str, f64)], total: f64| {
            for (k, v) in rows {
                s += &format!("{section},{k},{v}\n");
            }
            s += &format!("{section},total,{total}\n");
        };
        push("area_um2", &self.area_um2.categories(), self.area_um2.total);
        push("energy_pJ", &self.energy_pj.categories(), self.energy_pj.total);
        push("latency_ns", &self.latency_ns.categories(), self.latency_ns.total);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::CrossbarConfig;
    use crate::hwcost::{build_floorplan, DEFAULT_TILE_DIM};
    use crate::network::{Activation, Topology};

    fn plan(width: usize, depth: usize, kind: TrainerKind) -> Floorplan {
        let t = Topology::uniform(784, width, depth, 10, Activation::Relu).unwrap();
        build_floorplan(&t, kind, &CrossbarConfig::default(), DEFAULT_TILE_DIM).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn batch_profile_keeps_short_batch() {
        assert_eq!(batch_profile(1000, 128), vec![(128, 7), (104, 1)]);
        assert_eq!(batch_profile(256, 128), vec![(128, 2)]);
        assert_eq!(batch_profile(5, 128), vec![(5, 1)]);
        assert!(batch_profile(0, 128).is_empty());
    }

    #[test]
    fn categories_sum_to_totals() {
        for kind in [TrainerKind::Bp, TrainerKind::Dfa] {
            let r = CostReport::new(&plan(300, 4, kind), &UnitCosts::default(), 1000, 128, 3);
            let a: f64 = r.area_um2.categories().iter().map(|c| c.1).sum();
            let e: f64 = r.energy_pj.categories().iter().map(|c| c.1).sum();
            let l: f64 = r.latency_ns.categories().iter().map(|c| c.1).sum();
            assert!(close(a, r.area_um2.total) && close(e, r.energy_pj.total) && close(l, r.latency_ns.total));
            for (_, v) in r.area_um2.categories().iter().chain(r.energy_pj.categories().iter()) {
                assert!(*v >= 0.0);
            }
        }
    }

    #[test]
    fn zero_epochs_cost_no_energy_or_time() {
        let r = CostReport::new(&plan(64, 3, TrainerKind::Dfa), &UnitCosts::default(), 1000, 128, 0);
        assert_eq!(r.energy_pj.total, 0.0);
        assert_eq!(r.latency_ns.total, 0.0);
        assert!(r.area_um2.total > 0.0);
    }

    #[test]
    fn single_layer_costs_match() {
        let uc = UnitCosts::default();
        let bp = CostReport::new(&plan(1, 1, TrainerKind::Bp), &uc, 500, 64, 2);
        let dfa = CostReport::new(&plan(1, 1, TrainerKind::Dfa), &uc, 500, 64, 2);
        assert_eq!(bp.energy_pj, dfa.energy_pj);
        assert_eq!(bp.latency_ns, dfa.latency_ns);
    }

    #[test]
    fn offchip_traffic_is_rule_independent() {
        let uc = UnitCosts::default();
        for (w, d) in [(8, 1), (64, 3), (1024, 5), (1025, 7)] {
            let bp = EpochCounts::closed_form(&plan(w, d, TrainerKind::Bp), &uc, 4000, 128);
            let dfa = EpochCounts::closed_form(&plan(w, d, TrainerKind::Dfa), &uc, 4000, 128);
            assert_eq!(bp.offchip_bits(), dfa.offchip_bits());
        }
    }

    #[test]
    fn doubling_depth_doubles_cell_area() {
        // square layers only, so every layer occupies the same tiles
        let uc = UnitCosts::default();
        let cfg = CrossbarConfig::default();
        let a = build_floorplan(&Topology::new(vec![256; 4], Activation::Relu).unwrap(), TrainerKind::Bp, &cfg, 1024)
            .unwrap();
        let b = build_floorplan(&Topology::new(vec![256; 7], Activation::Relu).unwrap(), TrainerKind::Bp, &cfg, 1024)
            .unwrap();
        assert_eq!(estimate_area(&b, &uc).cim_cells, 2.0 * estimate_area(&a, &uc).cim_cells);
    }

    #[test]
    fn report_json_uses_fixed_keys() {
        let r = CostReport::new(&plan(32, 2, TrainerKind::Bp), &UnitCosts::default(), 100, 10, 1);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for k in ["area_um2", "energy_pJ", "latency_ns", "shares", "floorplan"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(r.to_csv().lines().count(), 1 + 8 + 7 + 6);
    }
}
