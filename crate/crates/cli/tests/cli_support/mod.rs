#![allow(dead_code)]

//! Command-line checks run against the built `spikeclass` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikeclass::cache::FeatureCache;
use spikeclass::encoding::SpikeTrain;
use tempfile::TempDir;

pub fn spikeclass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikeclass")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Two-class cache where class 0 spikes early on the first half of the
/// features and class 1 on the second half.
pub fn write_cache(path: &Path, features: usize, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            let label = i % 2;
            let times: Vec<Option<f64>> = (0..features)
                .map(|f| {
                    let early = (f < features / 2) == (label == 0);
                    Some(if early { rng.gen_range(0.0..0.4) } else { rng.gen_range(0.6..1.0) })
                })
                .collect();
            (SpikeTrain::from_times(&times, 1.0).unwrap(), label)
        })
        .collect();
    FeatureCache::new(features, 1.0, samples).unwrap().save(path).unwrap();
}

pub fn write_config(path: &Path, extra: &str) {
    let text = format!(
        "# synthetic two-class run\ndataset=mnist\nrule=s2stdp\nthreshold=2\nepochs=5\npatience=3\nfolds=2\nval_fraction=0.25\n{extra}"
    );
    fs::write(path, text).unwrap();
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture {
            dir: TempDir::new().unwrap(),
        };
        write_cache(&f.path("train.sfc"), 8, 40, 1);
        write_cache(&f.path("test.sfc"), 8, 20, 2);
        write_cache(&f.path("narrow.sfc"), 5, 10, 3);
        write_config(&f.path("c.cfg"), "");
        f
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

pub fn unknown_subcommand_prints_usage() {
    let o = spikeclass(&["frobnicate"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

pub fn train_writes_model_and_metrics() {
    let f = Fixture::new();
    let o = spikeclass(&["train", "--config", &f.arg("c.cfg"), "--features", &f.arg("train.sfc"), "--out", &f.arg("m.snnw")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(f.path("m.snnw").exists());
    let csv = fs::read_to_string(f.path("m.csv")).unwrap();
    assert!(csv.starts_with("epoch,update_ratio_target,"));
    assert!(csv.lines().count() >= 2);
}

pub fn identical_runs_give_identical_models() {
    let f = Fixture::new();
    for out in ["a.snnw", "b.snnw"] {
        let o = spikeclass(&["train", "--config", &f.arg("c.cfg"), "--features", &f.arg("train.sfc"), "--out", &f.arg(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(f.path("a.snnw")).unwrap(), fs::read(f.path("b.snnw")).unwrap());
}

pub fn eval_reports_accuracy_and_rejects_mismatch() {
    let f = Fixture::new();
    let o = spikeclass(&["train", "--config", &f.arg("c.cfg"), "--features", &f.arg("train.sfc"), "--out", &f.arg("m.snnw")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = spikeclass(&["eval", "--model", &f.arg("m.snnw"), "--features", &f.arg("test.sfc")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("accuracy "));
    let o = spikeclass(&["eval", "--model", &f.arg("m.snnw"), "--features", &f.arg("narrow.sfc")]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("structural error") && err.contains("expected 8, got 5"), "{err}");
}

pub fn missing_file_is_an_error() {
    let f = Fixture::new();
    let o = spikeclass(&["eval", "--model", &f.arg("absent.snnw"), "--features", &f.arg("test.sfc")]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("absent.snnw") && stderr(&o).contains("Usage"), "{}", stderr(&o));
}

pub fn kfold_and_sweep_run_on_caches() {
    let f = Fixture::new();
    let o = spikeclass(&["kfold", "--config", &f.arg("c.cfg"), "--features", &f.arg("train.sfc"), "--test", &f.arg("test.sfc")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("fold ")).count(), 2, "{out}");
    assert!(out.lines().last().unwrap().starts_with("mean "));

    let o = spikeclass(&[
        "sweep", "--config", &f.arg("c.cfg"), "--features", &f.arg("train.sfc"), "--grid", "gap=0.1,0.2", "--grid", "threshold=1.5,2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);
}

pub fn metrics_reemits_csv() {
    let f = Fixture::new();
    let o = spikeclass(&["train", "--config", &f.arg("c.cfg"), "--features", &f.arg("train.sfc"), "--out", &f.arg("m.snnw")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = spikeclass(&["metrics", &f.arg("m.csv")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), fs::read_to_string(f.path("m.csv")).unwrap());

    fs::write(f.path("bad.csv"), "a,b\n1,2\n").unwrap();
    assert!(!spikeclass(&["metrics", &f.arg("bad.csv")]).status.success());
}

pub fn all() -> Vec<(&'static str, fn())> {
    vec![
        ("cli: unknown subcommand", unknown_subcommand_prints_usage),
        ("cli: train writes model and CSV", train_writes_model_and_metrics),
        ("cli: byte-identical models", identical_runs_give_identical_models),
        ("cli: eval and dimension mismatch", eval_reports_accuracy_and_rejects_mismatch),
        ("cli: missing file", missing_file_is_an_error),
        ("cli: kfold and sweep", kfold_and_sweep_run_on_caches),
        ("cli: metrics", metrics_reemits_csv),
    ]
}
