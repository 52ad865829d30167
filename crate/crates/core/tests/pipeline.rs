use cimtrain::analog::{Backend, CrossbarConfig};
use cimtrain::checkpoint;
use cimtrain::dataio::{synthetic, Split, SyntheticSpec};
use cimtrain::experiment::{merge_dir, preset, sweep, DataSource, ExperimentConfig, SweepOptions};
use cimtrain::hwcost::{build_floorplan, EpochCounts, UnitCosts, DEFAULT_TILE_DIM};
use cimtrain::math::{streams, Mat, Rng};
use cimtrain::network::{forward, xavier_init, Activation, Topology};
use cimtrain::trainers::{train, FeedbackBank, HyperParams, TrainerKind};

fn blobs(split: Split) -> cimtrain::dataio::Dataset {
    let spec = SyntheticSpec { classes: 10, features: 20, samples_per_class: 13, std: 0.15, seed: 3 };
    synthetic(&spec, split).unwrap()
}

#[test]
fn recorded_events_match_closed_form_counts() {
    let topo = Topology::new(vec![20, 16, 12, 10], Activation::Relu).unwrap();
    let (train_set, test_set) = (blobs(Split::Train), blobs(Split::Test));
    let uc = UnitCosts::resolve("default").unwrap();
    let cfg = CrossbarConfig { subarray_rows: 8, subarray_cols: 8, ..CrossbarConfig::ideal() };
    for kind in [TrainerKind::Bp, TrainerKind::Dfa] {
        for analog in [false, true] {
            let hp = HyperParams { epochs: 2, batch_size: 32, ..HyperParams::default() };
            let mut mlp = xavier_init(&topo, &mut Rng::derive(1, streams::INIT));
            let bank = FeedbackBank::new(&topo, 1);
            let mut backend = if analog {
                Backend::analog(cfg.clone(), 1).unwrap()
            } else {
                Backend::digital_with_geometry(cfg.clone())
            };
            train(&mut mlp, &bank, kind, &train_set, &test_set, &hp, &mut backend, None).unwrap();
            let fp = build_floorplan(&topo, kind, &cfg, DEFAULT_TILE_DIM).unwrap();
            let counts = EpochCounts::closed_form(&fp, &uc, train_set.len() as u64, 32);
            let diffs = counts.compare_tally(backend.tally(), 2);
            assert!(diffs.is_empty(), "{kind:?} analog={analog}: {diffs:?}");
        }
    }
}

#[test]
fn ideal_analog_forward_tracks_digital() {
    let topo = Topology::new(vec![20, 32, 10], Activation::Tanh).unwrap();
    let mlp = xavier_init(&topo, &mut Rng::new(5));
    let x = blobs(Split::Test).images().select_cols(&(0..16).collect::<Vec<_>>());
    let mut digital = Backend::digital();
    let mut analog = Backend::analog(CrossbarConfig::ideal(), 5).unwrap();
    analog.load(&mlp, None).unwrap();
    let a = forward(&mlp, &x, &mut digital).unwrap();
    let b = forward(&mlp, &x, &mut analog).unwrap();
    let err = a.logits().sub(b.logits()).unwrap().max_abs();
    assert!(err < 1e-3, "ideal analog logits differ by {err}");
}

fn mean_matvec_error(sub: usize, seeds: u64) -> f64 {
    let cfg = CrossbarConfig {
        subarray_rows: sub,
        subarray_cols: sub,
        adc_bits: 8,
        wire_r: 1e-3,
        ..CrossbarConfig::default()
    };
    let topo = Topology::new(vec![256, 256], Activation::Relu).unwrap();
    let mut total = 0.0;
    for seed in 0..seeds {
        let mut rng = Rng::new(seed);
        let mlp = xavier_init(&topo, &mut rng);
        let x = Mat::from_fn(256, 4, |_, _| rng.uniform());
        let mut backend = Backend::analog(cfg.clone(), seed).unwrap();
        backend.load(&mlp, None).unwrap();
        let got = backend.matvec(1, mlp.weight(1), &x).unwrap();
        let want = mlp.weight(1).matmul(&x).unwrap();
        total += got.sub(&want).unwrap().max_abs() / want.max_abs();
    }
    total / seeds as f64
}

#[test]
fn wire_resistance_error_grows_with_subarray_size() {
    let errs: Vec<f64> = [32, 64, 128, 256].iter().map(|&s| mean_matvec_error(s, 50)).collect();
    assert!(errs.windows(2).all(|w| w[0] < w[1]), "{errs:?}");
}

fn tiny(name: &str) -> ExperimentConfig {
    let mut cfg = preset("fig2").unwrap();
    cfg.name = name.into();
    cfg.topology.input = 20;
    cfg.topology.width = 12;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 32;
    cfg.data.source = DataSource::Synthetic;
    cfg.data.synthetic.features = 20;
    cfg.data.synthetic.samples_per_class = 8;
    cfg.validate().unwrap();
    cfg.seeds = vec![0, 1];
    cfg
}

#[test]
fn merge_is_idempotent_and_rebuilds_from_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny("merge");
    let out = sweep(&cfg, &SweepOptions { workers: 2, out: Some(dir.path().into()), progress: false }).unwrap();
    assert_eq!(out.runs.len(), 8);
    let merged = std::fs::read_to_string(dir.path().join("merged.csv")).unwrap();
    assert_eq!(out.merged_csv.as_deref(), Some(merged.as_str()));
    let again = merge_dir(dir.path()).unwrap();
    assert_eq!(again, merged);
    assert_eq!(merge_dir(dir.path()).unwrap(), merged);
    // header plus one row per run
    assert_eq!(merged.lines().count(), 1 + 8);
}

#[test]
fn sweep_pairs_seeds_across_grid_points() {
    let cfg = tiny("pairs");
    let out = sweep(&cfg, &SweepOptions::default()).unwrap();
    for seed in [0, 1] {
        let dfa: Vec<_> = out.runs.iter().filter(|r| r.seed == seed && r.trainer == TrainerKind::Dfa).collect();
        assert_eq!(dfa.len(), 2);
        let depth8: Vec<_> = out.select(&[("topology.depth", "8")]).into_iter().filter(|r| r.seed == seed).collect();
        assert_eq!(depth8[0].feedback_digest, depth8[1].feedback_digest);
    }
}

#[test]
fn checkpoint_round_trips_a_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny("ckpt");
    cfg.sweep.clear();
    cfg.seeds = vec![4];
    cfg.checkpoint = true;
    let out = sweep(&cfg, &SweepOptions { workers: 1, out: Some(dir.path().into()), progress: false }).unwrap();
    let run = &out.runs[0];
    let (mlp, bank) = checkpoint::load(&dir.path().join("s4/model.ckpt")).unwrap();
    assert_eq!(mlp.weights(), run.mlp.weights());
    assert_eq!(bank.unwrap().digest(), run.feedback_digest);
}
