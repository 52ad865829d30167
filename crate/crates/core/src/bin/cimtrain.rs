use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cimtrain::experiment::{
    cost_grid, preset, preset_names, sweep, write_cost_grid, ExperimentConfig, ExperimentError, SweepOptions,
};
use cimtrain::hwcost::build_floorplan;
use cimtrain::trainers::TrainerKind;

#[derive(Parser)]
#[command(name = "cimtrain", version, about = "BP and DFA training on a simulated compute-in-memory chip")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the config once per seed (sweep axes are not allowed).
    Run(Common),
    /// Train every sweep grid point for every seed and merge the results.
    Sweep(Common),
    /// Closed-form area, energy and latency only; no training.
    Cost(Common),
    /// Print the resolved config and the floorplan of each rule.
    Describe(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config, or a run manifest.json to reproduce a run.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Bundled preset to start from.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory (default: runs/<config name>).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated seeds, replacing the config's list.
    #[arg(long, value_name = "SEEDS", value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Runs trained in parallel.
    #[arg(long, value_name = "N", default_value_t = 1)]
    workers: usize,
    /// Override one field, e.g. `--set train.epochs=5` (repeatable).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

fn parse_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => {
                return Err(ExperimentError::Config("give either --config or --preset, not both".into()))
            }
            (Some(path), None) => ExperimentConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => preset("default")?,
        };
        if let Some(seeds) = &self.seed_list {
            cfg.seeds = seeds.clone();
        }
        for o in &self.overrides {
            let (path, value) = o
                .split_once('=')
                .ok_or_else(|| ExperimentError::Config(format!("--set {o:?}: expected PATH=VALUE")))?;
            let sweep = std::mem::take(&mut cfg.sweep);
            cfg = cfg.with_param(path.trim(), &parse_value(value.trim()))?;
            cfg.sweep = sweep;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
    }
}

fn run(cmd: Command) -> Result<ExitCode, ExperimentError> {
    match cmd {
        Command::Run(c) => {
            let cfg = c.resolve()?;
            if !cfg.sweep.is_empty() {
                return Err(ExperimentError::Config("sweep: config has sweep axes; use `cimtrain sweep`".into()));
            }
            train_grid(&cfg, &c)
        }
        Command::Sweep(c) => {
            let cfg = c.resolve()?;
            if cfg.sweep.is_empty() {
                return Err(ExperimentError::Config("sweep: config has no sweep axes; use `cimtrain run`".into()));
            }
            train_grid(&cfg, &c)
        }
        Command::Cost(c) => {
            let cfg = c.resolve()?;
            let points = cost_grid(&cfg)?;
            let dir = c.out_dir(&cfg);
            write_cost_grid(&points, &dir)?;
            for p in &points {
                let labels: Vec<String> = p.labels.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let r = &p.report;
                println!(
                    "{} {}: area {:.4e} µm², energy {:.4e} pJ, latency {:.4e} ns, {} tiles, utilization {:.1}%",
                    r.trainer,
                    labels.join(" "),
                    r.area_um2.total,
                    r.energy_pj.total,
                    r.latency_ns.total,
                    r.floorplan.tiles,
                    100.0 * r.floorplan.utilization
                );
            }
            eprintln!("wrote {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Describe(c) => {
            let cfg = c.resolve()?;
            println!("# resolved config\n{}", cfg.to_toml());
            let topo = cfg.topology()?;
            for kind in [TrainerKind::Bp, TrainerKind::Dfa] {
                let fp = build_floorplan(&topo, kind, &cfg.crossbar, cfg.costs.tile_dim)?;
                print!("{}", fp.summary());
            }
            if !cfg.sweep.is_empty() {
                println!("sweep: {} grid points × {} seeds", cfg.grid()?.len(), cfg.seeds.len());
            }
            println!("presets: {}", preset_names().join(", "));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn train_grid(cfg: &ExperimentConfig, c: &Common) -> Result<ExitCode, ExperimentError> {
    let dir = c.out_dir(cfg);
    let opts = SweepOptions { workers: c.workers, out: Some(dir.clone()), progress: true };
    let out = sweep(cfg, &opts)?;
    eprintln!("wrote {}", dir.display());
    if out.any_diverged() {
        eprintln!("error: at least one run diverged (partial histories kept)");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
