use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &[&str] = &["rows=4", "cols=4", "dt=3600", "days=10", "seed=7"];

fn run(dir: &Path, args: &[&str], sets: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_demandnet"));
    cmd.current_dir(dir).args(args);
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn single_error_line(out: &Output, category: &str) -> String {
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error[{category}]: ")), "{err}");
    err
}

#[test]
fn synth_is_deterministic() {
    let dir = TempDir::new().unwrap();
    ok(&run(dir.path(), &["synth", "--out", "a.txt"], SMALL));
    ok(&run(dir.path(), &["synth", "--out", "b.txt", "--profiles", "p.csv"], SMALL));
    let a = fs::read(dir.path().join("a.txt")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.txt")).unwrap());
    let profiles = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(profiles.lines().count(), 17);
    let mut other = SMALL.to_vec();
    other.push("seed=8");
    ok(&run(dir.path(), &["synth", "--out", "c.txt"], &other));
    assert_ne!(a, fs::read(dir.path().join("c.txt")).unwrap());
}

#[test]
fn decompose_selects_daily_period() {
    let dir = TempDir::new().unwrap();
    let sets = ["rows=4", "cols=4", "days=14", "seed=1", "candidates=72,144,288"];
    ok(&run(dir.path(), &["synth", "--out", "cube.txt"], &sets));
    let table = ok(&run(
        dir.path(),
        &["decompose", "--cube", "cube.txt", "--plots", "plots"],
        &sets,
    ));
    assert!(table.contains("# selected=144"), "{table}");
    for f in ["daily_demand.csv", "decomposition.csv"] {
        assert!(dir.path().join("plots").join(f).exists());
    }
}

#[test]
fn evaluate_identity_is_zero() {
    let dir = TempDir::new().unwrap();
    ok(&run(dir.path(), &["synth", "--out", "cube.txt"], SMALL));
    let report = ok(&run(
        dir.path(),
        &["evaluate", "--truth", "cube.txt", "--pred", "cube.txt", "--plots", "plots"],
        SMALL,
    ));
    assert!(report.contains("\nplain,0,0,0,0,0\n"), "{report}");
    assert!(report.contains("\nweighted,0,0,0,0,0\n"));
    assert!(report.contains("global_rmse,0\n"));
    assert!(dir.path().join("plots/cma_rmse.csv").exists());
}

#[test]
fn classify_writes_partition_and_plots() {
    let dir = TempDir::new().unwrap();
    let mut sets = SMALL.to_vec();
    sets.push("noise_fraction=0.5");
    ok(&run(dir.path(), &["synth", "--out", "cube.txt"], &sets));
    let table = ok(&run(
        dir.path(),
        &["classify", "--cube", "cube.txt", "--plots", "plots"],
        &sets,
    ));
    assert_eq!(table.lines().filter(|l| l.ends_with(",G1,-") || l.contains(",G2,")).count(), 16);
    assert!(table.contains("gini="));
    for f in ["lorenz.csv", "region_frequencies.csv"] {
        assert!(dir.path().join("plots").join(f).exists());
    }
}

#[test]
fn ingest_bins_trips() {
    let dir = TempDir::new().unwrap();
    let trips = "timestamp,longitude,latitude\n0,0.5,0.5\n3600,1.5,0.5\n3700,1.5,0.5\nbad,line\n9999999,0.5,0.5\n";
    fs::write(dir.path().join("trips.csv"), trips).unwrap();
    let sets = [
        "lon_min=0", "lon_max=2", "lat_min=0", "lat_max=1", "rows=1", "cols=2", "t0=0", "dt=3600", "intervals=3",
    ];
    let out = run(dir.path(), &["ingest", "--trips", "trips.csv", "--out", "cube.txt"], &sets);
    ok(&out);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("trips.csv:5"), "{stderr}");
    let cube = fs::read_to_string(dir.path().join("cube.txt")).unwrap();
    let rows: Vec<&str> = cube.lines().skip(1).collect();
    assert_eq!(rows, vec!["1 0", "0 2", "0 0"]);
}

#[test]
fn pipeline_replays_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let sets = [
        "rows=4", "cols=4", "dt=7200", "days=8", "seed=3", "train_days=6", "test_days=2", "lag=12", "recent=3",
        "period=3", "kernel_depths=2,2", "temporal_filters=3", "conv2d_filters=3", "conv2d_layers=1",
        "head_filters=2", "max_epochs=2", "batch_size=8",
    ];
    ok(&run(dir.path(), &["synth", "--out", "cube.txt"], &sets));
    let mut reports = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let ckpt = format!("{tag}.ckpt");
        let pred = format!("{tag}.pred");
        let train = ok(&run(
            dir.path(),
            &["--threads", threads, "train", "--cube", "cube.txt", "--checkpoint", &ckpt],
            &sets,
        ));
        assert!(train.starts_with("epoch,train_loss,val_loss\n"));
        ok(&run(
            dir.path(),
            &["--threads", threads, "predict", "--cube", "cube.txt", "--checkpoint", &ckpt, "--out", &pred],
            &sets,
        ));
        let report = ok(&run(
            dir.path(),
            &["--threads", threads, "evaluate", "--truth", "cube.txt", "--pred", &pred],
            &sets,
        ));
        reports.push((train, fs::read(dir.path().join(&ckpt)).unwrap(), report));
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);

    ok(&run(
        dir.path(),
        &["predict", "--cube", "cube.txt", "--baseline", "additive", "--out", "add.pred"],
        &sets,
    ));
    let pred = fs::read_to_string(dir.path().join("add.pred")).unwrap();
    assert!(pred.starts_with("4 4 24 "));
}

#[test]
fn errors_are_single_categorised_lines() {
    let dir = TempDir::new().unwrap();
    let err = single_error_line(&run(dir.path(), &["synth", "--out", "x.txt"], &["bogus=1"]), "config");
    assert!(err.contains("`bogus`"));

    fs::write(dir.path().join("run.cfg"), "rows = 4\nlearning_rate = quick\n").unwrap();
    let err = single_error_line(
        &run(dir.path(), &["--config", "run.cfg", "synth", "--out", "x.txt"], &[]),
        "config",
    );
    assert!(err.contains("run.cfg:2") && err.contains("`learning_rate`"), "{err}");

    fs::write(dir.path().join("bad.txt"), "1 2 1 0 600 0 1 0 1\n3 x\n").unwrap();
    let err = single_error_line(&run(dir.path(), &["classify", "--cube", "bad.txt"], &[]), "parse");
    assert!(err.contains("bad.txt") && err.contains("line 2"), "{err}");

    single_error_line(&run(dir.path(), &["classify", "--cube", "missing.txt"], &[]), "io");
    single_error_line(&run(dir.path(), &["train"], &[]), "config");
    single_error_line(&run(dir.path(), &["frobnicate"], &[]), "usage");
}
