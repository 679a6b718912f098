use std::fs::{self, File};
use std::io::{BufWriter, ErrorKind, Write};
use std::path::Path;

use serde_json::{json, Value};
use vcrg_core::io::{load_features, load_graph, load_labels, write_edge_list, write_features, write_labels};
use vcrg_core::synth::{edge_homophily, generate_sbm};
use vcrg_core::tokenize::{tokenize_graph, TokenStore};
use vcrg_core::{FeatureMatrix, Graph, LabelVector, Splits};
use vcrg_model::checkpoint::{read_checkpoint, write_checkpoint};
use vcrg_model::{train, Dataset, Precision, Scalar};

use crate::config::{required, resolved_config_path, RunConfig};
use crate::error::{CliError, Result};
use crate::verify::{run_suite, Suite};

fn read_text(field: &'static str, path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Input { field, path: path.into(), source })
}

fn parse_err<E: std::error::Error + Send + Sync + 'static>(field: &'static str, path: &Path) -> impl FnOnce(E) -> CliError {
    let path = path.to_path_buf();
    move |e| CliError::Parse { field, path, source: Box::new(e) }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let out = |source| CliError::Output { path: path.into(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(out)?;
    }
    fs::write(path, bytes).map_err(out)
}

fn write_resolved(config: &RunConfig, artifact: &Path) -> Result<()> {
    write_bytes(&resolved_config_path(artifact), config.to_json().as_bytes())
}

fn load_graph_file(config: &RunConfig) -> Result<Graph> {
    let path = required!(config.paths, graph)?;
    let loaded = load_graph(&read_text("graph", path)?).map_err(parse_err("graph", path))?;
    Ok(loaded.graph)
}

fn load_features_file(config: &RunConfig, n: usize) -> Result<FeatureMatrix> {
    let path = required!(config.paths, features)?;
    load_features(&read_text("features", path)?, n).map_err(parse_err("features", path))
}

fn load_labels_file(config: &RunConfig, n: usize) -> Result<LabelVector> {
    let path = required!(config.paths, labels)?;
    load_labels(&read_text("labels", path)?, n).map_err(parse_err("labels", path))
}

fn load_splits_file(config: &RunConfig, n: usize) -> Result<Splits> {
    let path = required!(config.paths, splits)?;
    let splits: Splits = serde_json::from_str(&read_text("splits", path)?).map_err(parse_err("splits", path))?;
    splits.validate(n).map_err(parse_err("splits", path))?;
    Ok(splits)
}

fn load_store(config: &RunConfig) -> Result<TokenStore> {
    let path = required!(config.paths, store)?;
    if !path.exists() {
        let source = std::io::Error::new(ErrorKind::NotFound, "no such file");
        return Err(CliError::Input { field: "store", path: path.into(), source });
    }
    TokenStore::read(path).map_err(parse_err("store", path))
}

pub fn synth(config: &RunConfig) -> Result<Value> {
    let spec = &config.synth;
    spec.validate().map_err(|e| CliError::Config(format!("synth: {e}")))?;
    let paths = [
        required!(config.paths, graph)?,
        required!(config.paths, features)?,
        required!(config.paths, labels)?,
        required!(config.paths, splits)?,
    ];
    let data = generate_sbm(spec)?;
    write_bytes(paths[0], write_edge_list(&data.graph).as_bytes())?;
    write_bytes(paths[1], write_features(&data.features).as_bytes())?;
    write_bytes(paths[2], write_labels(&data.labels).as_bytes())?;
    let splits = serde_json::to_string(&data.splits).expect("splits serialize") + "\n";
    write_bytes(paths[3], splits.as_bytes())?;
    write_resolved(config, paths[0])?;
    Ok(json!({
        "nodes": data.graph.node_count(),
        "edges": data.graph.edge_count(),
        "edge_homophily": edge_homophily(&data.graph, &data.labels)?,
        "train": data.splits.train.len(),
        "val": data.splits.val.len(),
        "test": data.splits.test.len(),
    }))
}

pub fn tokenize(config: &RunConfig, jobs: Option<usize>) -> Result<Value> {
    config.tokenize.validate().map_err(|e| CliError::Config(format!("tokenize: {e}")))?;
    let out = required!(config.paths, store)?;
    // Report a missing field before touching any file.
    required!(config.paths, graph)?;
    required!(config.paths, features)?;
    required!(config.paths, labels)?;
    required!(config.paths, splits)?;
    let graph = load_graph_file(config)?;
    let n = graph.node_count();
    let features = load_features_file(config, n)?;
    let labels = load_labels_file(config, n)?;
    let splits = load_splits_file(config, n)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = jobs {
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| CliError::Pool(e.to_string()))?;
    let start = std::time::Instant::now();
    let store = pool.install(|| tokenize_graph(&graph, &features, &labels, &splits.train, &config.tokenize))?;
    let seconds = start.elapsed().as_secs_f64();
    store.write(out).map_err(|e| match e {
        vcrg_core::Error::Io(source) => CliError::Output { path: out.into(), source },
        other => other.into(),
    })?;
    write_resolved(config, out)?;
    Ok(json!({ "store": out, "header": store.header, "seconds": seconds }))
}

/// The store must have been built with the configured token layout, and
/// from features of the configured width when a features file is given.
fn check_store(config: &RunConfig, store: &TokenStore) -> Result<()> {
    let h = &store.header;
    let t = &config.tokenize;
    let expected = (t.hops, t.structure_k, t.content_k);
    let found = (h.hops as usize, h.structure_k as usize, h.content_k as usize);
    if expected != found {
        return Err(CliError::Mismatch(format!(
            "store has (hops, structure_k, content_k) = {found:?} but the config says {expected:?}"
        )));
    }
    if config.paths.features.is_some() {
        let features = load_features_file(config, h.n as usize)?;
        if features.dim() != h.d as usize {
            return Err(CliError::Mismatch(format!(
                "store header has d = {} but the features file has {} columns",
                h.d,
                features.dim()
            )));
        }
    }
    Ok(())
}

pub fn train_command(config: &RunConfig) -> Result<Value> {
    config.train.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
    let checkpoint = required!(config.paths, checkpoint)?;
    let metrics_path = required!(config.paths, metrics)?;
    let store = load_store(config)?;
    check_store(config, &store)?;
    let n = store.records.len();
    let labels = load_labels_file(config, n)?;
    let splits = load_splits_file(config, n)?;
    match config.train.precision {
        Precision::F32 => run_training::<f32>(config, &store, &labels, &splits, checkpoint, metrics_path),
        Precision::F64 => run_training::<f64>(config, &store, &labels, &splits, checkpoint, metrics_path),
    }
}

fn run_training<S: Scalar>(
    config: &RunConfig,
    store: &TokenStore,
    labels: &LabelVector,
    splits: &Splits,
    checkpoint: &Path,
    metrics_path: &Path,
) -> Result<Value> {
    let dataset = Dataset::<S>::new(store, labels)?;
    write_bytes(metrics_path, b"")?;
    let file = File::create(metrics_path).map_err(|source| CliError::Output { path: metrics_path.into(), source })?;
    let mut metrics = BufWriter::new(file);
    let mut io_error = None;
    let outcome = train(&dataset, splits, &config.train, |m, params, best| {
        let line = serde_json::to_string(m).expect("metrics serialize");
        if let Err(e) = writeln!(metrics, "{line}").and_then(|_| metrics.flush()) {
            io_error = Some(CliError::Output { path: metrics_path.into(), source: e });
        }
        if best {
            write_checkpoint(checkpoint, params, &config.train, m.epoch, Some(m))?;
        }
        Ok(())
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    write_resolved(config, checkpoint)?;
    write_resolved(config, metrics_path)?;
    Ok(json!({
        "checkpoint": checkpoint,
        "metrics": metrics_path,
        "best_epoch": outcome.best_epoch,
        "best": outcome.best_metrics(),
    }))
}

pub fn eval(config: &RunConfig) -> Result<Value> {
    let path = required!(config.paths, checkpoint)?;
    if !path.exists() {
        let source = std::io::Error::new(ErrorKind::NotFound, "no such file");
        return Err(CliError::Input { field: "checkpoint", path: path.into(), source });
    }
    let ckpt = read_checkpoint(path).map_err(parse_err("checkpoint", path))?;
    let store = load_store(config)?;
    if ckpt.params.config.input_dim != store.header.token_width() {
        return Err(CliError::Mismatch(format!(
            "checkpoint expects tokens of width {} but the store has {}",
            ckpt.params.config.input_dim,
            store.header.token_width()
        )));
    }
    let n = store.records.len();
    let labels = load_labels_file(config, n)?;
    let splits = load_splits_file(config, n)?;
    let accuracies = match ckpt.header.train.precision {
        Precision::F32 => accuracies(&ckpt.params, &store, &labels, &splits)?,
        Precision::F64 => accuracies(&ckpt.params.cast::<f64>(), &store, &labels, &splits)?,
    };
    Ok(json!({ "checkpoint": path, "epoch": ckpt.header.epoch, "accuracy": accuracies }))
}

fn accuracies<S: Scalar>(
    params: &vcrg_model::ModelParams<S>,
    store: &TokenStore,
    labels: &LabelVector,
    splits: &Splits,
) -> Result<Value> {
    if labels.class_count() > params.config.classes {
        return Err(CliError::Mismatch(format!(
            "labels have {} classes but the checkpoint predicts {}",
            labels.class_count(),
            params.config.classes
        )));
    }
    let data = Dataset::<S>::new(store, labels)?;
    Ok(json!({
        "train": data.accuracy(params, &splits.train)?,
        "val": data.accuracy(params, &splits.val)?,
        "test": data.accuracy(params, &splits.test)?,
    }))
}

pub fn verify(suite: Suite, seed: u64) -> Result<Value> {
    let report = run_suite(suite, seed)?;
    let value = serde_json::to_value(&report).expect("report serializes");
    if !report.passed {
        let names: Vec<String> = report.failures().map(|c| format!("{}#{}", c.name, c.instance)).collect();
        println!("{}", serde_json::to_string_pretty(&value).expect("json"));
        return Err(CliError::Verification(names.join(", ")));
    }
    Ok(value)
}
