use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vcrg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vcrg"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("VCRG_SEED")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: [&str; 8] = ["--set", "synth.n=120", "--set", "synth.p_in=0.1", "--set", "synth.p_out=0.01", "--seed", "4"];
const TRAIN: [&str; 6] = ["--set", "train.epochs=3", "--set", "train.width=8", "--set", "train.heads=2"];

fn pipeline(dir: &Path) {
    assert!(vcrg(dir, &[&["synth"][..], &SMALL].concat()).status.success());
    let out = vcrg(dir, &["tokenize", "--jobs", "1", "--seed", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = vcrg(dir, &[&["train", "--seed", "4"][..], &TRAIN].concat());
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn full_pipeline_writes_artifacts_and_resolved_configs() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    for name in ["graph.edges", "features.csv", "labels.txt", "splits.json", "tokens.vcrt", "tokens.vcrt.json", "model.ckpt", "metrics.jsonl"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    for artifact in ["graph.edges", "tokens.vcrt", "model.ckpt", "metrics.jsonl"] {
        let text = fs::read_to_string(dir.path().join(format!("{artifact}.config.json"))).unwrap();
        let config: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(config["seed"], 4, "{artifact}");
    }
    let metrics = fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    let lines: Vec<Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2]["epoch"], 3);

    let out = vcrg(dir.path(), &["eval"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout_json(&out);
    let acc = report["accuracy"]["test"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn rerunning_resolved_config_reproduces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let store = fs::read(dir.path().join("tokens.vcrt")).unwrap();
    let metrics = fs::read(dir.path().join("metrics.jsonl")).unwrap();

    let again = tempfile::tempdir().unwrap();
    let config = dir.path().join("model.ckpt.config.json");
    // Paths inside the resolved config point at the first directory; send
    // the rerun's outputs elsewhere.
    let out_store = again.path().join("tokens.vcrt");
    let out_metrics = again.path().join("metrics.jsonl");
    let out_ckpt = again.path().join("model.ckpt");
    let set = |k: &str, p: &Path| format!("paths.{k}={}", p.display());
    let run = |cmd: &str, extra: Vec<String>| {
        let mut args = vec![cmd.to_string(), "--config".into(), config.display().to_string(), "--jobs".into(), "1".into()];
        for e in extra {
            args.push("--set".into());
            args.push(e);
        }
        let out = Command::new(env!("CARGO_BIN_EXE_vcrg")).args(&args).env_remove("VCRG_SEED").output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
    };
    run("tokenize", vec![set("store", &out_store)]);
    run("train", vec![set("store", &out_store), set("metrics", &out_metrics), set("checkpoint", &out_ckpt)]);
    assert_eq!(fs::read(&out_store).unwrap(), store);
    assert_eq!(fs::read(&out_metrics).unwrap(), metrics);
}

#[test]
fn missing_features_path_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(&config, r#"{"paths": {"graph": "g.edges", "labels": "l.txt", "splits": "s.json", "store": "t.vcrt"}}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vcrg")).args(["tokenize", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("paths.features"), "{}", stderr(&out));
}

#[test]
fn missing_input_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = vcrg(dir.path(), &["tokenize"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("graph"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = vcrg(dir.path(), &["synth", "--set", "synth.blocs=3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("blocs"), "{}", stderr(&out));
}

#[test]
fn train_rejects_store_with_different_feature_width() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    // Same graph, features with one column fewer.
    let narrow: String = fs::read_to_string(dir.path().join("features.csv"))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    let path = dir.path().join("narrow.csv");
    fs::write(&path, narrow).unwrap();
    let set = format!("paths.features={}", path.display());
    let out = vcrg(dir.path(), &[&["train", "--set", &set][..], &TRAIN].concat());
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("d = "), "{}", stderr(&out));

    let out = vcrg(dir.path(), &["train", "--set", "tokenize.hops=2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("mismatch"), "{}", stderr(&out));
}

#[test]
fn corrupted_store_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let path = dir.path().join("tokens.vcrt");
    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(&path, bytes).unwrap();
    let out = vcrg(dir.path(), &[&["train"][..], &TRAIN].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("checksum"), "{}", stderr(&out));
}

#[test]
fn verify_theorems_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = vcrg(dir.path(), &["verify", "--suite", "theorems", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = stdout_json(&out);
    assert_eq!(report["passed"], true);
    assert_eq!(report["seed"], 7);
    let names: Vec<&str> = report["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for name in ["mass_transfer_identity", "mass_transfer_sum", "ppr_series", "gcn_equivalence"] {
        assert!(names.contains(&name), "{name}");
    }
}

#[test]
fn seed_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_vcrg"))
        .args(["verify", "--suite", "ppr"])
        .env("VCRG_SEED", "11")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout_json(&out)["seed"], 11);
    let out = Command::new(env!("CARGO_BIN_EXE_vcrg")).args(["verify"]).env("VCRG_SEED", "eleven").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_without_checkpoint_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = vcrg(dir.path(), &["eval"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("checkpoint"), "{}", stderr(&out));
}
