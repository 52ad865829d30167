use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analog::{Backend, EventTally};
use crate::checkpoint;
use crate::dataio::{load_bundled_mnist5k, load_mnist_dir, synthetic, Dataset, Split};
use crate::hwcost::{build_floorplan, CostReport, Floorplan};
use crate::math::{streams, Rng};
use crate::network::{xavier_init, Mlp};
use crate::trainers::{train, EpochRecord, FeedbackBank, History, TrainerKind};

use super::config::{BackendKind, DataConfig, DataSource, ExperimentConfig, GridPoint};
use super::ExperimentError;

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, contents).map_err(|e| ExperimentError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Train and test sets for a data config, truncated to the requested sizes.
pub fn load_data(cfg: &DataConfig) -> Result<(Dataset, Dataset), ExperimentError> {
    let (train, test) = match cfg.source {
        DataSource::Mnist5k => load_bundled_mnist5k()?,
        DataSource::Idx => {
            let root = cfg
                .idx_root()
                .ok_or_else(|| ExperimentError::Config("data.root: no dataset directory configured".into()))?;
            load_mnist_dir(&root)?
        }
        DataSource::Synthetic => (synthetic(&cfg.synthetic, Split::Train)?, synthetic(&cfg.synthetic, Split::Test)?),
    };
    let cut = |ds: Dataset, n: Option<usize>| match n {
        Some(n) if n < ds.len() => ds.head(n),
        _ => ds,
    };
    Ok((cut(train, cfg.train_samples), cut(test, cfg.test_samples)))
}

/// SHA-256 over both splits' pixels (f64 little-endian) and labels.
pub fn dataset_digest(train: &Dataset, test: &Dataset) -> String {
    let mut h = Sha256::new();
    for ds in [train, test] {
        h.update((ds.features() as u64).to_le_bytes());
        h.update((ds.len() as u64).to_le_bytes());
        for v in ds.images().as_slice() {
            h.update(v.to_le_bytes());
        }
        for &l in ds.labels() {
            h.update((l as u64).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Training-set size a config implies without loading anything.
fn nominal_train_samples(cfg: &ExperimentConfig) -> u64 {
    let full = match cfg.data.source {
        DataSource::Mnist5k => 4000,
        DataSource::Idx => 60000,
        DataSource::Synthetic => cfg.data.synthetic.classes * cfg.data.synthetic.samples_per_class,
    };
    cfg.data.train_samples.map_or(full, |n| n.min(full)) as u64
}

fn floorplan(cfg: &ExperimentConfig) -> Result<Floorplan, ExperimentError> {
    Ok(build_floorplan(&cfg.topology()?, cfg.trainer, &cfg.crossbar, cfg.costs.tile_dim)?)
}

/// Mean of the last `n` values (all of them if fewer).
pub fn tail_mean(xs: &[f64], n: usize) -> f64 {
    let t = &xs[xs.len().saturating_sub(n)..];
    if t.is_empty() {
        return f64::NAN;
    }
    t.iter().sum::<f64>() / t.len() as f64
}

/// Population standard deviation of the last `n` values.
pub fn tail_std(xs: &[f64], n: usize) -> f64 {
    let t = &xs[xs.len().saturating_sub(n)..];
    let m = tail_mean(xs, n);
    (t.iter().map(|x| (x - m).powi(2)).sum::<f64>() / t.len() as f64).sqrt()
}

/// `history.csv`: one row per epoch. `modeled_seconds` is the cumulative
/// training time of the modeled chip, not host time.
pub fn history_csv(records: &[EpochRecord], epoch_latency_ns: f64) -> String {
    let mut s = String::from("epoch,train_loss,train_accuracy,test_loss,test_accuracy,modeled_seconds\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.train_accuracy,
            r.test_loss,
            r.test_accuracy,
            epoch_latency_ns * r.epoch as f64 * 1e-9
        );
    }
    s
}

/// Result of one training run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub id: String,
    pub labels: Vec<(String, String)>,
    pub trainer: TrainerKind,
    pub seed: u64,
    pub history: History,
    pub cost: CostReport,
    pub tally: EventTally,
    pub mlp: Mlp,
    pub feedback_digest: String,
    pub host_seconds: f64,
}

impl RunOutput {
    pub fn test_accuracies(&self) -> Vec<f64> {
        self.history.test_accuracies()
    }

    pub fn diverged(&self) -> bool {
        self.history.diverged_at.is_some()
    }
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    run_id: String,
    seed: u64,
    labels: Vec<(String, String)>,
    config_digest: String,
    dataset: DatasetEntry,
    feedback_digest: String,
    epochs_run: usize,
    diverged_at: Option<usize>,
    artifacts: BTreeMap<String, String>,
    config: ExperimentConfig,
}

#[derive(Serialize, Deserialize)]
struct DatasetEntry {
    source: DataSource,
    train_samples: usize,
    test_samples: usize,
    digest: String,
}

/// Trains one grid point with one seed. Writes the run's artifacts into
/// `out` when given.
pub fn run_point(
    point: &GridPoint,
    seed: u64,
    data: &(Dataset, Dataset),
    data_digest: &str,
    id: &str,
    out: Option<&Path>,
) -> Result<RunOutput, ExperimentError> {
    let start = Instant::now();
    let mut cfg = point.config.clone();
    cfg.seeds = vec![seed];
    let (train_set, test_set) = data;
    let topo = cfg.topology()?;
    if train_set.features() != topo.input() || train_set.classes() > topo.classes() {
        return Err(ExperimentError::Config(format!(
            "topology: data has {} features and {} classes, network expects {} and {}",
            train_set.features(),
            train_set.classes(),
            topo.input(),
            topo.classes()
        )));
    }
    let hp = cfg.hyperparams(seed);
    let mut mlp = xavier_init(&topo, &mut Rng::derive(seed, streams::INIT));
    let bank = FeedbackBank::new(&topo, seed);
    let mut backend = match cfg.backend {
        BackendKind::Digital => Backend::digital_with_geometry(cfg.crossbar.clone()),
        BackendKind::Analog => {
            Backend::analog(cfg.crossbar.clone(), seed).map_err(crate::trainers::TrainError::from)?
        }
    };
    let history = train(&mut mlp, &bank, cfg.trainer, train_set, test_set, &hp, &mut backend, None)?;
    let fp = floorplan(&cfg)?;
    let uc = cfg.unit_costs()?;
    let samples = train_set.len() as u64;
    let batch = hp.batch_size as u64;
    let epoch_latency = CostReport::new(&fp, &uc, samples, batch, 1).latency_ns.total;
    let cost = CostReport::new(&fp, &uc, samples, batch, history.records.len() as u64);
    let out_run = RunOutput {
        id: id.to_string(),
        labels: point.labels.clone(),
        trainer: cfg.trainer,
        seed,
        feedback_digest: bank.digest(),
        history,
        cost,
        tally: backend.take_tally(),
        mlp,
        host_seconds: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
        let hist = history_csv(&out_run.history.records, epoch_latency);
        let cost_json = out_run.cost.to_json();
        write_file(&dir.join("history.csv"), &hist)?;
        write_file(&dir.join("cost.json"), &cost_json)?;
        let mut artifacts = BTreeMap::new();
        artifacts.insert("history.csv".to_string(), sha256_hex(hist.as_bytes()));
        artifacts.insert("cost.json".to_string(), sha256_hex(cost_json.as_bytes()));
        if cfg.checkpoint {
            let bytes = checkpoint::encode(&out_run.mlp, Some(&bank));
            let path = dir.join("model.ckpt");
            std::fs::write(&path, &bytes).map_err(|e| ExperimentError::io(&path, e))?;
            artifacts.insert("model.ckpt".to_string(), sha256_hex(&bytes));
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            run_id: id.to_string(),
            seed,
            labels: point.labels.clone(),
            config_digest: cfg.digest(),
            dataset: DatasetEntry {
                source: cfg.data.source,
                train_samples: train_set.len(),
                test_samples: test_set.len(),
                digest: data_digest.to_string(),
            },
            feedback_digest: out_run.feedback_digest.clone(),
            epochs_run: out_run.history.records.len(),
            diverged_at: out_run.history.diverged_at,
            artifacts,
            config: cfg,
        };
        write_file(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&manifest).expect("manifest") + "\n"))?;
        write_file(&dir.join("timing.csv"), &format!("run_id,host_seconds\n{id},{:.3}\n", out_run.host_seconds))?;
    }
    Ok(out_run)
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub workers: usize,
    pub out: Option<PathBuf>,
    /// Print one line per finished run to stderr.
    pub progress: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { workers: 1, out: None, progress: false }
    }
}

#[derive(Debug)]
pub struct SweepOutput {
    pub runs: Vec<RunOutput>,
    pub merged_csv: Option<String>,
}

impl SweepOutput {
    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(RunOutput::diverged)
    }

    /// Runs whose labels include `(param, value)` for every given pair.
    pub fn select(&self, filters: &[(&str, &str)]) -> Vec<&RunOutput> {
        self.runs
            .iter()
            .filter(|r| filters.iter().all(|(p, v)| r.labels.iter().any(|(lp, lv)| lp == p && lv == v)))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct SweepManifest {
    tool: String,
    version: String,
    config_digest: String,
    runs: Vec<SweepEntry>,
    config: ExperimentConfig,
}

#[derive(Serialize, Deserialize)]
struct SweepEntry {
    run_id: String,
    seed: u64,
    labels: Vec<(String, String)>,
}

fn run_id(index: usize, seed: u64, grid_len: usize) -> String {
    if grid_len == 1 {
        format!("s{seed}")
    } else {
        format!("p{index:03}-s{seed}")
    }
}

/// Every grid point × every seed. Each run depends only on its config and
/// seed, so results do not depend on `workers` or scheduling. Every grid
/// point uses the same seed list, which pairs runs across points.
pub fn sweep(cfg: &ExperimentConfig, opts: &SweepOptions) -> Result<SweepOutput, ExperimentError> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let jobs: Vec<(usize, u64)> = (0..grid.len()).flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s))).collect();

    let mut data: BTreeMap<String, ((Dataset, Dataset), String)> = BTreeMap::new();
    for p in &grid {
        let key = serde_json::to_string(&p.config.data).expect("data config");
        if let std::collections::btree_map::Entry::Vacant(slot) = data.entry(key) {
            let d = load_data(&p.config.data)?;
            let digest = dataset_digest(&d.0, &d.1);
            slot.insert((d, digest));
        }
    }

    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    }
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunOutput, ExperimentError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let workers = opts.workers.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::SeqCst);
                if j >= jobs.len() {
                    break;
                }
                let (pi, seed) = jobs[j];
                let point = &grid[pi];
                let key = serde_json::to_string(&point.config.data).expect("data config");
                let (d, digest) = &data[&key];
                let id = run_id(pi, seed, grid.len());
                let dir = opts.out.as_ref().map(|o| o.join(&id));
                let r = run_point(point, seed, d, digest, &id, dir.as_deref());
                if opts.progress {
                    let n = done.fetch_add(1, Ordering::SeqCst) + 1;
                    let labels: Vec<String> = point.labels.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    match &r {
                        Ok(o) => eprintln!(
                            "[{n}/{}] {id} {} {}: test accuracy {:.4}{} ({:.1}s)",
                            jobs.len(),
                            o.trainer,
                            labels.join(" "),
                            o.history.final_test_accuracy().unwrap_or(f64::NAN),
                            if o.diverged() { ", diverged" } else { "" },
                            o.host_seconds
                        ),
                        Err(e) => eprintln!("[{n}/{}] {id}: {e}", jobs.len()),
                    }
                }
                results.lock().expect("results lock")[j] = Some(r);
            });
        }
    });
    let runs = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<Vec<_>, _>>()?;

    let merged_csv = match &opts.out {
        Some(dir) => {
            let manifest = SweepManifest {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                config_digest: cfg.digest(),
                runs: runs
                    .iter()
                    .map(|r| SweepEntry { run_id: r.id.clone(), seed: r.seed, labels: r.labels.clone() })
                    .collect(),
                config: cfg.clone(),
            };
            write_file(
                &dir.join("manifest.json"),
                &(serde_json::to_string_pretty(&manifest).expect("manifest") + "\n"),
            )?;
            let timing: String = std::iter::once("run_id,host_seconds\n".to_string())
                .chain(runs.iter().map(|r| format!("{},{:.3}\n", r.id, r.host_seconds)))
                .collect();
            write_file(&dir.join("timing.csv"), &timing)?;
            Some(merge_dir(dir)?)
        }
        None => None,
    };
    Ok(SweepOutput { runs, merged_csv })
}

struct HistoryRow {
    test_accuracy: f64,
}

fn parse_history(text: &str) -> Vec<HistoryRow> {
    text.lines()
        .skip(1)
        .filter_map(|l| l.split(',').nth(4).and_then(|v| v.parse().ok()))
        .map(|test_accuracy| HistoryRow { test_accuracy })
        .collect()
}

fn fmt_stat(xs: &[f64]) -> (String, String) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    (format!("{m:.6}"), format!("{sd:.6}"))
}

/// Rebuilds `merged.csv` and `summary.csv` of a sweep directory from the
/// per-run artifacts alone, and returns the merged table.
///
/// `merged.csv` has one row per run; `summary.csv` one row per grid point
/// with mean and std across seeds.
pub fn merge_dir(dir: &Path) -> Result<String, ExperimentError> {
    let manifest: SweepManifest = serde_json::from_str(&read_file(&dir.join("manifest.json"))?)
        .map_err(|e| ExperimentError::Parse(format!("{}: {e}", dir.join("manifest.json").display())))?;
    let axes: Vec<String> = manifest.config.sweep.iter().map(|a| a.param.clone()).collect();
    let mut merged = String::new();
    for a in &axes {
        merged += a;
        merged += ",";
    }
    merged += "run_id,seed,epochs_run,diverged,final_test_accuracy,best_test_accuracy,tail5_test_accuracy,tail20_test_std,area_um2,energy_pJ,latency_ns\n";
    let mut groups: BTreeMap<Vec<String>, Vec<[f64; 3]>> = BTreeMap::new();
    let mut order: Vec<Vec<String>> = Vec::new();
    for entry in &manifest.runs {
        let run_dir = dir.join(&entry.run_id);
        let hist = parse_history(&read_file(&run_dir.join("history.csv"))?);
        let cost: serde_json::Value = serde_json::from_str(&read_file(&run_dir.join("cost.json"))?)
            .map_err(|e| ExperimentError::Parse(format!("{}: {e}", run_dir.join("cost.json").display())))?;
        let run: serde_json::Value = serde_json::from_str(&read_file(&run_dir.join("manifest.json"))?)
            .map_err(|e| ExperimentError::Parse(format!("{}: {e}", run_dir.join("manifest.json").display())))?;
        let acc: Vec<f64> = hist.iter().map(|h| h.test_accuracy).collect();
        let total = |k: &str| cost[k]["total"].as_f64().unwrap_or(f64::NAN);
        let labels: Vec<String> = entry.labels.iter().map(|(_, v)| v.clone()).collect();
        let final_acc = acc.last().copied().unwrap_or(f64::NAN);
        let best = acc.iter().cloned().fold(f64::NAN, f64::max);
        let tail5 = tail_mean(&acc, 5);
        for l in &labels {
            merged += l;
            merged += ",";
        }
        let _ = writeln!(
            merged,
            "{},{},{},{},{},{},{},{},{},{},{}",
            entry.run_id,
            entry.seed,
            acc.len(),
            !run["diverged_at"].is_null(),
            final_acc,
            best,
            tail5,
            tail_std(&acc, 20),
            total("area_um2"),
            total("energy_pJ"),
            total("latency_ns")
        );
        if !groups.contains_key(&labels) {
            order.push(labels.clone());
        }
        groups.entry(labels).or_default().push([final_acc, best, tail5]);
    }
    let mut summary = String::new();
    for a in &axes {
        summary += a;
        summary += ",";
    }
    summary += "seeds,final_mean,final_std,best_mean,best_std,tail5_mean,tail5_std\n";
    for key in &order {
        let rows = &groups[key];
        for l in key {
            summary += l;
            summary += ",";
        }
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
        let (fm, fs) = fmt_stat(&col(0));
        let (bm, bs) = fmt_stat(&col(1));
        let (tm, ts) = fmt_stat(&col(2));
        let _ = writeln!(summary, "{},{fm},{fs},{bm},{bs},{tm},{ts}", rows.len());
    }
    write_file(&dir.join("merged.csv"), &merged)?;
    write_file(&dir.join("summary.csv"), &summary)?;
    Ok(merged)
}

/// One cost-only grid point.
#[derive(Clone, Debug)]
pub struct CostPoint {
    pub labels: Vec<(String, String)>,
    pub config: ExperimentConfig,
    pub floorplan: Floorplan,
    pub report: CostReport,
}

/// Closed-form costs for every grid point; no data is loaded and nothing is
/// trained. `train.epochs` epochs over the nominal training-set size.
pub fn cost_grid(cfg: &ExperimentConfig) -> Result<Vec<CostPoint>, ExperimentError> {
    cfg.validate()?;
    cfg.grid()?
        .into_iter()
        .map(|p| {
            let fp = floorplan(&p.config)?;
            let uc = p.config.unit_costs()?;
            let report = CostReport::new(
                &fp,
                &uc,
                nominal_train_samples(&p.config),
                p.config.train.batch_size as u64,
                p.config.train.epochs as u64,
            );
            Ok(CostPoint { labels: p.labels, config: p.config, floorplan: fp, report })
        })
        .collect()
}

/// One row per cost point: floorplan counts, category totals and shares.
pub fn cost_merged_csv(points: &[CostPoint]) -> String {
    let mut s = String::new();
    let fixed = ["trainer", "topology.depth", "topology.width"];
    if let Some(first) = points.first() {
        for (k, _) in first.labels.iter().filter(|(k, _)| !fixed.contains(&k.as_str())) {
            s += k;
            s += ",";
        }
    }
    s += "trainer,depth,width,tiles,adc_count,wgu_count,utilization,area_um2,area_adc,area_wgu,area_feedback_cells,\
energy_pJ,energy_offchip_buffer,latency_ns,backward_latency_per_batch_ns,offchip_energy_share,buffering_latency_share\n";
    for p in points {
        for (_, v) in p.labels.iter().filter(|(k, _)| !fixed.contains(&k.as_str())) {
            s += v;
            s += ",";
        }
        let r = &p.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trainer,
            p.config.topology.depth,
            p.config.topology.width,
            r.floorplan.tiles,
            r.floorplan.adc_count,
            r.floorplan.wgu_count,
            r.floorplan.utilization,
            r.area_um2.total,
            r.area_um2.adc,
            r.area_um2.wgu,
            r.feedback_cell_area_um2,
            r.energy_pj.total,
            r.energy_pj.offchip_buffer,
            r.latency_ns.total,
            r.backward_latency_per_batch_ns,
            r.shares.offchip_energy,
            r.shares.buffering_latency
        );
    }
    s
}

/// Writes `cost.json` (single point) or one `cost.json` per point plus
/// `merged.csv` into `dir`.
pub fn write_cost_grid(points: &[CostPoint], dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    if let [single] = points {
        return write_file(&dir.join("cost.json"), &single.report.to_json());
    }
    for (i, p) in points.iter().enumerate() {
        let sub = dir.join(format!("p{i:03}"));
        std::fs::create_dir_all(&sub).map_err(|e| ExperimentError::io(&sub, e))?;
        write_file(&sub.join("cost.json"), &p.report.to_json())?;
    }
    write_file(&dir.join("merged.csv"), &cost_merged_csv(points))
}
