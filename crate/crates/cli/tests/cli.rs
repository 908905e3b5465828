use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hgconv(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgconv"))
        .args(args)
        .current_dir(cwd)
        .env_remove("HGCONV_OUT_ROOT")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Small planted dataset in `<dir>/data`.
fn synth(dir: &Path, per_class: &str) {
    ok(&hgconv(dir, &["synth", "--out-dir", "data", "--per-class", per_class, "--seed", "3"]));
}

const TINY: &[&str] = &["--k", "3", "--channels", "2,2,2", "--fc-width", "4", "--epochs", "1"];

#[test]
fn infer_graph_writes_edges_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "30");
    ok(&hgconv(dir.path(), &["infer-graph", "--signals", "data/signals.csv", "--threshold", "0.7", "--out", "g.csv"]));
    let edges = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert!(edges.starts_with("src,dst,weight\n"));
    assert!(edges.lines().count() > 1000);
    let m = read_json(dir.path().join("manifest.json"));
    assert_eq!(m["command"], "infer-graph");
    assert_eq!(m["config"]["threshold"], 0.7);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let again = hgconv(dir.path(), &["infer-graph", "--signals", "data/signals.csv", "--out", "g.csv"]);
    assert_eq!(again.status.code(), Some(1));
    ok(&hgconv(dir.path(), &["infer-graph", "--signals", "data/signals.csv", "--out", "g.csv", "--force"]));
}

#[test]
fn infer_graph_dense_export() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "10");
    ok(&hgconv(dir.path(), &["infer-graph", "--signals", "data/signals.csv", "--out-dir", "g", "--dense"]));
    for f in ["edges.csv", "correlation.csv", "adjacency.csv", "manifest.json"] {
        assert!(dir.path().join("g").join(f).exists(), "{f}");
    }
    let corr = std::fs::read_to_string(dir.path().join("g/correlation.csv")).unwrap();
    assert_eq!(corr.lines().count(), 120);
}

#[test]
fn coarsen_exports_hierarchy() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.csv"), "src,dst,weight\n0,1,1\n1,2,1\n2,3,1\n").unwrap();
    ok(&hgconv(dir.path(), &["coarsen", "--edges", "p.csv", "--levels", "2", "--out-dir", "h"]));
    let h = read_json(dir.path().join("h/hierarchy.json"));
    assert_eq!(h["level_sizes"], serde_json::json!([4, 2, 1]));
    assert!(dir.path().join("h/level2.csv").exists());
}

#[test]
fn cross_validate_protocol_and_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "10");
    let mut args = vec![
        "cross-validate",
        "--signals",
        "data/signals.csv",
        "--labels",
        "data/labels.csv",
        "--folds",
        "5",
        "--repeats",
        "10",
        "--seed",
        "7",
        "--out-dir",
        "cv",
    ];
    args.extend_from_slice(TINY);
    ok(&hgconv(dir.path(), &args));
    let report = read_json(dir.path().join("cv/report.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 50);
    assert_eq!(report["class_names"], serde_json::json!(["class0", "class1"]));
    assert!(dir.path().join("cv/curves/repeat9_fold4.csv").exists());

    ok(&hgconv(dir.path(), &["cross-validate", "--config", "cv/manifest.json", "--out-dir", "cv2"]));
    let a = std::fs::read(dir.path().join("cv/report.json")).unwrap();
    let b = std::fs::read(dir.path().join("cv2/report.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn parallel_cross_validation_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "10");
    let base = ["cross-validate", "--signals", "data/signals.csv", "--labels", "data/labels.csv", "--repeats", "2"];
    for (out, jobs) in [("seq", "1"), ("par", "3")] {
        let mut args = base.to_vec();
        args.extend_from_slice(&["--out-dir", out, "--jobs", jobs]);
        args.extend_from_slice(TINY);
        ok(&hgconv(dir.path(), &args));
    }
    assert_eq!(
        std::fs::read(dir.path().join("seq/report.json")).unwrap(),
        std::fs::read(dir.path().join("par/report.json")).unwrap()
    );
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "10");
    let mut args = vec!["train", "--signals", "data/signals.csv", "--labels", "data/labels.csv", "--out-dir", "t"];
    args.extend_from_slice(TINY);
    ok(&hgconv(dir.path(), &args));
    let curve = std::fs::read_to_string(dir.path().join("t/curve.csv")).unwrap();
    assert!(curve.starts_with("epoch,train_loss,train_acc,val_acc\n"));
    ok(&hgconv(
        dir.path(),
        &["predict", "--model", "t/model.json", "--signals", "data/signals.csv", "--labels", "data/labels.csv", "--out-dir", "p"],
    ));
    let preds = std::fs::read_to_string(dir.path().join("p/predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 21);
    assert!(preds.starts_with("subject_id,predicted,p_class0,p_class1\n"));
    assert!(read_json(dir.path().join("p/summary.json"))["accuracy"].is_number());
}

#[test]
fn benchmark_methods_agree() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hgconv(dir.path(), &["benchmark", "--n", "128", "--k", "25", "--densities", "0.01,0.02", "--out-dir", "b"]));
    let csv = std::fs::read_to_string(dir.path().join("b/benchmark.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,edges,K,method,seconds,max_abs_err"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!(r[5].parse::<f64>().unwrap() <= 1e-8, "{r:?}");
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"per_class": 4, "seed": 1, "nodes": 12}"#).unwrap();
    ok(&hgconv(dir.path(), &["synth", "--config", "c.json", "--seed", "2", "--out-dir", "s"]));
    let m = read_json(dir.path().join("s/manifest.json"));
    assert_eq!(m["config"]["seed"], 2);
    assert_eq!(m["config"]["per_class"], 4);
    assert_eq!(m["master_seed"], 2);

    std::fs::write(dir.path().join("bad.json"), r#"{"per_clas": 4}"#).unwrap();
    let out = hgconv(dir.path(), &["synth", "--config", "bad.json", "--out-dir", "s2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("per_clas"));
}

#[test]
fn out_root_env_places_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    let out = Command::new(env!("CARGO_BIN_EXE_hgconv"))
        .args(["synth", "--per-class", "3", "--out-dir", "d"])
        .current_dir(dir.path())
        .env("HGCONV_OUT_ROOT", &root)
        .output()
        .unwrap();
    ok(&out);
    assert!(root.join("d/signals.csv").exists());
    assert!(root.join("d/manifest.json").exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["synth", "--no-such-flag"], &[]] {
        let out = hgconv(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"), "{args:?}");
    }
    let out = hgconv(dir.path(), &["train", "--labels", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_inputs_exit_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.csv"), "1,2,3\n4,NaN,6\n").unwrap();
    std::fs::write(dir.path().join("l.csv"), "subject_id,label\ns0,a\ns1,b\ns2,a\n").unwrap();
    let out = hgconv(dir.path(), &["infer-graph", "--signals", "s.csv", "--out-dir", "g"]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 2") && msg.contains("column 2"), "{msg}");

    std::fs::write(dir.path().join("s.csv"), "1,2,3\n4,5,6\n").unwrap();
    std::fs::write(dir.path().join("l2.csv"), "subject_id,label\ns0,a\ns1,b\n").unwrap();
    let out = hgconv(dir.path(), &["train", "--signals", "s.csv", "--labels", "l2.csv", "--out-dir", "t"]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains('3') && msg.contains('2'), "{msg}");
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let out = hgconv(dir.path(), &["synth", "--per-class", "3", "--out-dir", "blocker/sub"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
