use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analog::CrossbarConfig;
use crate::dataio::{SyntheticSpec, DATA_ROOT_ENV};
use crate::hwcost::{UnitCosts, DEFAULT_TILE_DIM};
use crate::network::{Activation, Topology};
use crate::trainers::{HyperParams, Precision, TrainerKind};

use super::ExperimentError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub input: usize,
    pub width: usize,
    /// Number of weight layers.
    pub depth: usize,
    pub classes: usize,
    pub activation: Activation,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig { input: 784, width: 1024, depth: 5, classes: 10, activation: Activation::Relu }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub requantize_errors: bool,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let hp = HyperParams::default();
        TrainConfig {
            learning_rate: hp.learning_rate,
            batch_size: hp.batch_size,
            epochs: hp.epochs,
            requantize_errors: hp.requantize_errors,
            precision: hp.precision,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Digital,
    Analog,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// The 5000-image MNIST subset shipped with the crate.
    Mnist5k,
    /// IDX files (`train-images-idx3-ubyte[.gz]`, …) under `root`, or under
    /// `$CIMTRAIN_DATA` when `root` is unset.
    Idx,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub root: Option<PathBuf>,
    /// Use only the first `n` training samples.
    pub train_samples: Option<usize>,
    pub test_samples: Option<usize>,
    pub synthetic: SyntheticSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Mnist5k,
            root: None,
            train_samples: None,
            test_samples: None,
            synthetic: SyntheticSpec { classes: 10, features: 784, samples_per_class: 100, std: 0.1, seed: 0 },
        }
    }
}

impl DataConfig {
    /// Directory the `idx` source reads from.
    pub fn idx_root(&self) -> Option<PathBuf> {
        self.root.clone().or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// `"default"` or a path to a profile file.
    pub profile: String,
    pub tile_dim: usize,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig { profile: "default".into(), tile_dim: DEFAULT_TILE_DIM }
    }
}

/// One sweep dimension: a dotted config path and the values it takes.
/// `also` lists further paths set to the same value at every point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub also: Vec<String>,
    pub values: Vec<toml::Value>,
}

/// Everything one experiment needs: network, rule, training, hardware,
/// costs, data, sweep grid and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub trainer: TrainerKind,
    pub seeds: Vec<u64>,
    pub backend: BackendKind,
    /// Write `model.ckpt` next to the history.
    pub checkpoint: bool,
    pub topology: TopologyConfig,
    pub train: TrainConfig,
    pub crossbar: CrossbarConfig,
    pub costs: CostConfig,
    pub data: DataConfig,
    pub sweep: Vec<SweepAxis>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "default".into(),
            trainer: TrainerKind::Dfa,
            seeds: vec![0],
            backend: BackendKind::Digital,
            checkpoint: false,
            topology: TopologyConfig::default(),
            train: TrainConfig::default(),
            crossbar: CrossbarConfig::default(),
            costs: CostConfig::default(),
            data: DataConfig::default(),
            sweep: Vec::new(),
        }
    }
}

fn field(path: &str, msg: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Config(format!("{path}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the `config` entry of a run manifest when the
    /// file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::io(path, source))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| ExperimentError::Parse(format!("{}: {e}", path.display())))?;
            let inner = v.get("config").cloned().unwrap_or(v);
            serde_json::from_value(inner).map_err(|e| ExperimentError::Parse(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| ExperimentError::Parse(format!("{}: {e}", path.display())))?
        };
        let cfg: ExperimentConfig = cfg;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes to JSON");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn topology(&self) -> Result<Topology, ExperimentError> {
        let t = &self.topology;
        Topology::uniform(t.input, t.width, t.depth, t.classes, t.activation).map_err(|e| field("topology", e))
    }

    pub fn hyperparams(&self, seed: u64) -> HyperParams {
        let t = &self.train;
        HyperParams {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed,
            precision: t.precision,
            requantize_errors: t.requantize_errors,
        }
    }

    pub fn unit_costs(&self) -> Result<UnitCosts, ExperimentError> {
        UnitCosts::resolve(&self.costs.profile).map_err(|e| field("costs.profile", e))
    }

    /// Checks every field before any work starts. Messages name the field.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(field("seeds", "at least one seed is required"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(field("seeds", "seeds must be distinct"));
        }
        let t = &self.topology;
        for (name, v) in [
            ("topology.input", t.input),
            ("topology.width", t.width),
            ("topology.depth", t.depth),
            ("topology.classes", t.classes),
        ] {
            if v == 0 {
                return Err(field(name, "must be at least 1"));
            }
        }
        self.hyperparams(0).validate().map_err(|e| field("train", e))?;
        self.crossbar.validate().map_err(|e| field("crossbar", e))?;
        if self.costs.tile_dim == 0 {
            return Err(field("costs.tile_dim", "must be at least 1"));
        }
        if self.costs.profile != "default" && !Path::new(&self.costs.profile).exists() {
            return Err(field("costs.profile", format!("no profile named or at {:?}", self.costs.profile)));
        }
        match self.data.source {
            DataSource::Synthetic => {
                let s = &self.data.synthetic;
                s.validate().map_err(|e| field("data.synthetic", e))?;
                if s.features != t.input || s.classes != t.classes {
                    return Err(field(
                        "data.synthetic",
                        format!(
                            "{} features / {} classes do not match the topology ({} / {})",
                            s.features, s.classes, t.input, t.classes
                        ),
                    ));
                }
            }
            DataSource::Idx if self.data.idx_root().is_none() => {
                return Err(field("data.root", format!("unset, and ${DATA_ROOT_ENV} is not set either")));
            }
            _ => {
                if t.input != 784 {
                    return Err(field("topology.input", "MNIST-family data has 784 features"));
                }
            }
        }
        for (k, n) in [("data.train_samples", self.data.train_samples), ("data.test_samples", self.data.test_samples)] {
            if n == Some(0) {
                return Err(field(k, "must be at least 1"));
            }
        }
        for (i, axis) in self.sweep.iter().enumerate() {
            if axis.values.is_empty() {
                return Err(field(&format!("sweep[{i}].values"), "must not be empty"));
            }
            for p in std::iter::once(&axis.param).chain(&axis.also) {
                if p.starts_with("sweep") || p == "seeds" {
                    return Err(field(&format!("sweep[{i}].param"), format!("{p:?} cannot be swept")));
                }
                for v in &axis.values {
                    self.with_param(p, v).map_err(|e| match e {
                        ExperimentError::Config(m) => field(&format!("sweep[{i}]"), m),
                        other => other,
                    })?;
                }
            }
        }
        Ok(())
    }

    /// Copy with the dotted `path` set to `value`. The path must name an
    /// existing field and the result must still validate (sweep excluded).
    pub fn with_param(&self, path: &str, value: &toml::Value) -> Result<Self, ExperimentError> {
        let mut root = toml::Value::try_from(self).expect("config serializes");
        let mut node = &mut root;
        let parts: Vec<&str> = path.split('.').collect();
        for (k, part) in parts.iter().enumerate() {
            let table =
                node.as_table_mut().ok_or_else(|| ExperimentError::Config(format!("unknown parameter {path:?}")))?;
            if k + 1 == parts.len() {
                // unset optional fields are absent; unknown names are caught
                // by deserialization below
                table.insert(part.to_string(), value.clone());
                break;
            }
            node =
                table.get_mut(*part).ok_or_else(|| ExperimentError::Config(format!("unknown parameter {path:?}")))?;
        }
        let mut cfg: ExperimentConfig = root
            .try_into()
            .map_err(|e| ExperimentError::Config(format!("unknown parameter or bad value {path} = {value}: {e}")))?;
        let sweep = std::mem::take(&mut cfg.sweep);
        cfg.validate().map_err(|e| ExperimentError::Config(format!("{path} = {value}: {e}")))?;
        cfg.sweep = sweep;
        Ok(cfg)
    }

    /// Cartesian product of the sweep axes, first axis slowest. Each point
    /// carries its `(param, value)` labels and the resolved config (with an
    /// empty sweep). No axes gives one point.
    pub fn grid(&self) -> Result<Vec<GridPoint>, ExperimentError> {
        let mut base = self.clone();
        base.sweep.clear();
        let mut points = vec![GridPoint { labels: Vec::new(), config: base }];
        for axis in &self.sweep {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for p in &points {
                for v in &axis.values {
                    let mut cfg = p.config.with_param(&axis.param, v)?;
                    for extra in &axis.also {
                        cfg = cfg.with_param(extra, v)?;
                    }
                    let mut labels = p.labels.clone();
                    labels.push((axis.param.clone(), value_label(v)));
                    next.push(GridPoint { labels, config: cfg });
                }
            }
            points = next;
        }
        Ok(points)
    }
}

/// Plain text form of a sweep value for tables and labels.
pub fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub labels: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn unknown_fields_and_params_are_named() {
        let err = ExperimentConfig::from_toml("[train]\nlearning_rat = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("learning_rat"), "{err}");
        let cfg = ExperimentConfig {
            sweep: vec![SweepAxis {
                param: "crossbar.adc_bitz".into(),
                also: vec![],
                values: vec![toml::Value::Integer(3)],
            }],
            ..ExperimentConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("crossbar.adc_bitz"), "{err}");
    }

    #[test]
    fn bad_values_name_the_field() {
        let err = ExperimentConfig::from_toml("seeds = []\n").unwrap_err().to_string();
        assert!(err.starts_with("seeds"), "{err}");
        let err = ExperimentConfig::from_toml("[train]\nbatch_size = 0\n").unwrap_err().to_string();
        assert!(err.contains("train") && err.contains("batch_size"), "{err}");
        let text = "[[sweep]]\nparam = \"crossbar.adc_bits\"\nvalues = [0]\n";
        let err = ExperimentConfig::from_toml(text).unwrap_err().to_string();
        assert!(err.contains("sweep[0]") && err.contains("adc_bits"), "{err}");
    }

    #[test]
    fn grid_is_cartesian_and_linked() {
        let text = r#"
            [[sweep]]
            param = "trainer"
            values = ["bp", "dfa"]
            [[sweep]]
            param = "crossbar.subarray_rows"
            also = ["crossbar.subarray_cols"]
            values = [64, 256]
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let grid = cfg.grid().unwrap();
        assert_eq!(grid.len(), 4);
        assert_eq!(grid[1].config.trainer, TrainerKind::Bp);
        assert_eq!(grid[1].config.crossbar.subarray_cols, 256);
        assert_eq!(
            grid[2].labels,
            vec![("trainer".into(), "dfa".into()), ("crossbar.subarray_rows".into(), "64".into())]
        );
        assert!(grid.iter().all(|p| p.config.sweep.is_empty()));
    }
}
