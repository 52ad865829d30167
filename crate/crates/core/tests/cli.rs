use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use cimtrain::dataio::{load_bundled_mnist5k, write_idx};

fn cimtrain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cimtrain")).args(args).env_remove("CIMTRAIN_DATA").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

const SMALL: &[&str] =
    &["--set", "data.train_samples=256", "--set", "data.test_samples=100", "--set", "train.epochs=1"];

#[test]
fn default_preset_runs_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["run", "--out", out, "--set", "topology.width=64"];
    args.extend_from_slice(SMALL);
    let o = cimtrain(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["manifest.json", "merged.csv", "summary.csv", "s0/history.csv", "s0/cost.json", "s0/manifest.json"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let hist = std::fs::read_to_string(dir.path().join("s0/history.csv")).unwrap();
    assert!(hist.starts_with("epoch,train_loss,train_accuracy,test_loss,test_accuracy,modeled_seconds\n"));
    assert_eq!(hist.lines().count(), 2);
}

#[test]
fn unknown_parameter_is_named() {
    let o = cimtrain(&["run", "--set", "train.learning_rat=3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("train.learning_rat"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "name = \"bad\"\nseeds = [0]\n[[sweep]]\nparam = \"crossbar.adc_bitz\"\nvalues = [1, 2]\n")
        .unwrap();
    let o = cimtrain(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("crossbar.adc_bitz"), "{}", stderr(&o));
}

#[test]
fn empty_seed_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("noseeds.toml");
    std::fs::write(&cfg, "name = \"noseeds\"\nseeds = []\n").unwrap();
    let o = cimtrain(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("seeds"), "{}", stderr(&o));

    let o = cimtrain(&["run", "--seed-list", ""]);
    assert!(!o.status.success());
}

#[test]
fn run_and_sweep_check_for_axes() {
    let o = cimtrain(&["run", "--preset", "fig3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cimtrain sweep"));
    let o = cimtrain(&["sweep", "--preset", "default"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cimtrain run"));
}

#[test]
fn sweep_is_byte_identical_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, workers) in [(&a, "1"), (&b, "3")] {
        let mut args = vec![
            "sweep",
            "--preset",
            "fig3",
            "--seed-list",
            "0,1",
            "--workers",
            workers,
            "--out",
            dir.path().to_str().unwrap(),
        ];
        args.extend_from_slice(SMALL);
        let o = cimtrain(&args);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut fa = files(a.path());
    let mut fb = files(b.path());
    fa.retain(|k, _| !k.ends_with("timing.csv"));
    fb.retain(|k, _| !k.ends_with("timing.csv"));
    assert_eq!(fa.len(), 3 + 8 * 3);
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{k} differs");
    }
}

#[test]
fn a_run_is_reproduced_from_its_manifest() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--preset", "default", "--seed-list", "7", "--set", "topology.width=32", "--out"];
    args.push(first.path().to_str().unwrap());
    args.extend_from_slice(SMALL);
    assert!(cimtrain(&args).status.success());
    let manifest = first.path().join("s7/manifest.json");
    let o = cimtrain(&["run", "--config", manifest.to_str().unwrap(), "--out", second.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["s7/history.csv", "s7/cost.json", "s7/manifest.json"] {
        assert_eq!(std::fs::read(first.path().join(f)).unwrap(), std::fs::read(second.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn divergence_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--set", "topology.width=32", "--set", "train.learning_rate=1e300", "--out"];
    args.push(dir.path().to_str().unwrap());
    args.extend_from_slice(SMALL);
    let o = cimtrain(&args);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(dir.path().join("s0/history.csv").exists());
}

#[test]
fn cost_sweep_shows_the_tile_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = cimtrain(&["cost", "--preset", "fig7", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let merged = std::fs::read_to_string(dir.path().join("merged.csv")).unwrap();
    let header: Vec<&str> = merged.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no {name} in {header:?}"));
    let (w, t, tiles) = (col("width"), col("trainer"), col("tiles"));
    let tiles_at = |width: &str| -> usize {
        let row = merged
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .find(|r| r[w] == width && r[t] == "bp")
            .unwrap();
        row[tiles].parse().unwrap()
    };
    assert!(tiles_at("1025") > tiles_at("1024"));
}

#[test]
fn describe_prints_both_floorplans() {
    let o = cimtrain(&["describe", "--preset", "fig9"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("# resolved config"));
    assert!(text.contains("bp") && text.contains("dfa"));
    assert!(text.contains("sweep: 10 grid points"));
}

#[test]
fn data_root_comes_from_the_environment() {
    let data = tempfile::tempdir().unwrap();
    let (train, test) = load_bundled_mnist5k().unwrap();
    let (train, test) = (train.head(300), test.head(50));
    let p = |n: &str| data.path().join(n);
    write_idx(&train, &p("train-images-idx3-ubyte"), &p("train-labels-idx1-ubyte"), false).unwrap();
    write_idx(&test, &p("t10k-images-idx3-ubyte"), &p("t10k-labels-idx1-ubyte"), false).unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cimtrain"))
        .args(["run", "--set", "data.source=\"idx\"", "--set", "topology.width=16", "--set", "train.epochs=1"])
        .args(["--out", out.path().to_str().unwrap()])
        .env("CIMTRAIN_DATA", data.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(out.path().join("s0/manifest.json")).unwrap();
    assert!(manifest.contains("\"train_samples\": 300"), "{manifest}");
    assert!(manifest.contains("\"test_samples\": 50"));
}
