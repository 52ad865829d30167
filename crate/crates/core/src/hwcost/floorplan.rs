use serde::Serialize;

use crate::analog::CrossbarConfig;
use crate::network::Topology;
use crate::trainers::TrainerKind;

use super::HwCostError;

/// Tile side length in cells.
pub const DEFAULT_TILE_DIM: usize = 1024;

/// Placement of one weight matrix. The array stores `W_iᵀ`: `rows = d_{i-1}`
/// inputs, `cols = d_i` outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerPlan {
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    pub subarray_grid: (usize, usize),
    pub tile_grid: (usize, usize),
    pub tiles: usize,
    /// Subarrays present in the allocated tiles, used or not.
    pub provisioned_subarrays: usize,
    pub adc_count: usize,
    pub transposable: bool,
    pub mapped_cells: u64,
    pub provisioned_cells: u64,
}

/// The shared DFA feedback array, stored as `Bᵀ` (`classes × max_hidden`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FeedbackPlan {
    pub rows: usize,
    pub cols: usize,
    pub subarray_grid: (usize, usize),
    pub mapped_cells: u64,
    pub provisioned_cells: u64,
    /// `Σ_{i<N} d_i · C`: cells the per-layer matrices would need unshared.
    pub logical_cells: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Floorplan {
    pub kind: TrainerKind,
    pub layer_dims: Vec<usize>,
    pub subarray_rows: usize,
    pub subarray_cols: usize,
    pub adc_bits: u32,
    pub adc_col_mux: usize,
    pub tile_dim: usize,
    pub layers: Vec<LayerPlan>,
    pub feedback: Option<FeedbackPlan>,
    pub wgu_count: usize,
    /// Gradient entries one WGU holds: the largest layer's `d_i · d_{i-1}`.
    pub wgu_capacity: u64,
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// ADCs serving one subarray in one read direction.
pub fn adcs_per_subarray(cfg: &CrossbarConfig) -> usize {
    ceil_div(cfg.subarray_cols, cfg.adc_col_mux)
}

pub fn subarrays_per_tile(cfg: &CrossbarConfig, tile_dim: usize) -> usize {
    ceil_div(tile_dim, cfg.subarray_rows) * ceil_div(tile_dim, cfg.subarray_cols)
}

/// Maps every layer onto whole tiles. BP arrays are transposable and carry a
/// second, rotated ADC bank; DFA gets one WGU per layer plus the feedback
/// array, which is read through the existing ADC banks.
pub fn build_floorplan(
    topology: &Topology,
    kind: TrainerKind,
    cfg: &CrossbarConfig,
    tile_dim: usize,
) -> Result<Floorplan, HwCostError> {
    cfg.validate()?;
    if tile_dim == 0 {
        return Err(HwCostError::Config("tile_dim must be at least 1".into()));
    }
    let transposable = kind == TrainerKind::Bp;
    let per_tile = subarrays_per_tile(cfg, tile_dim);
    let adc_per_sub = adcs_per_subarray(cfg) * if transposable { 2 } else { 1 };
    let dims = &topology.layer_dims;
    let layers: Vec<LayerPlan> = (1..dims.len())
        .map(|i| {
            let (rows, cols) = (dims[i - 1], dims[i]);
            let tile_grid = (ceil_div(rows, tile_dim), ceil_div(cols, tile_dim));
            let tiles = tile_grid.0 * tile_grid.1;
            LayerPlan {
                layer: i,
                rows,
                cols,
                subarray_grid: cfg.subarray_grid(rows, cols),
                tile_grid,
                tiles,
                provisioned_subarrays: tiles * per_tile,
                adc_count: tiles * per_tile * adc_per_sub,
                transposable,
                mapped_cells: (rows * cols) as u64,
                provisioned_cells: (tiles * tile_dim * tile_dim) as u64,
            }
        })
        .collect();
    let n = layers.len();
    let feedback = (kind == TrainerKind::Dfa && n > 1).then(|| {
        let (rows, cols) = (topology.classes(), topology.max_hidden());
        let grid = cfg.subarray_grid(rows, cols);
        FeedbackPlan {
            rows,
            cols,
            subarray_grid: grid,
            mapped_cells: (rows * cols) as u64,
            provisioned_cells: (grid.0 * grid.1 * cfg.subarray_rows * cfg.subarray_cols) as u64,
            logical_cells: dims[1..n].iter().map(|&d| (d * rows) as u64).sum(),
        }
    });
    Ok(Floorplan {
        kind,
        layer_dims: dims.clone(),
        subarray_rows: cfg.subarray_rows,
        subarray_cols: cfg.subarray_cols,
        adc_bits: cfg.adc_bits,
        adc_col_mux: cfg.adc_col_mux,
        tile_dim,
        wgu_count: if kind == TrainerKind::Dfa { n } else { 1 },
        wgu_capacity: layers.iter().map(|l| l.mapped_cells).max().unwrap_or(0),
        layers,
        feedback,
    })
}

impl Floorplan {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn classes(&self) -> usize {
        *self.layer_dims.last().expect("non-empty topology")
    }

    pub fn tiles(&self) -> usize {
        self.layers.iter().map(|l| l.tiles).sum()
    }

    pub fn adc_count(&self) -> usize {
        self.layers.iter().map(|l| l.adc_count).sum()
    }

    pub fn mapped_cells(&self) -> u64 {
        self.layers.iter().map(|l| l.mapped_cells).sum()
    }

    pub fn provisioned_cells(&self) -> u64 {
        self.layers.iter().map(|l| l.provisioned_cells).sum()
    }

    /// Mapped over provisioned weight cells (feedback array excluded).
    pub fn utilization(&self) -> f64 {
        self.mapped_cells() as f64 / self.provisioned_cells() as f64
    }

    /// Column-mux steps for one read through a full ADC bank.
    pub fn read_steps(&self) -> usize {
        self.adc_col_mux.min(self.subarray_cols)
    }

    /// Rows written sequentially when re-programming a layer; subarrays
    /// write in parallel.
    pub fn write_rows(&self, layer: usize) -> usize {
        self.layers[layer - 1].rows.min(self.subarray_rows)
    }

    /// One line per layer, for `describe`.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} floorplan: {} layers, {} tiles ({}×{} cells each), {} ADCs ({}-bit), {} WGUs, utilization {:.1}%\n",
            self.kind,
            self.depth(),
            self.tiles(),
            self.tile_dim,
            self.tile_dim,
            self.adc_count(),
            self.adc_bits,
            self.wgu_count,
            100.0 * self.utilization()
        );
        for l in &self.layers {
            s += &format!(
                "  layer {}: {}×{} cells, subarrays {}×{}, tiles {}×{}, {} ADCs{}\n",
                l.layer,
                l.rows,
                l.cols,
                l.subarray_grid.0,
                l.subarray_grid.1,
                l.tile_grid.0,
                l.tile_grid.1,
                l.adc_count,
                if l.transposable { ", transposable" } else { "" }
            );
        }
        if let Some(fb) = &self.feedback {
            s += &format!(
                "  feedback: {}×{} cells shared by {} layers (unshared would be {})\n",
                fb.rows,
                fb.cols,
                self.depth() - 1,
                fb.logical_cells
            );
        }
        s
    }
}
