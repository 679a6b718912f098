//! Run configuration: one JSON document with `paths`, `synth`, `tokenize`
//! and `train` sections. Keys can be overridden with `--set a.b=value`.
//! A global `seed` (flag, config key, or `VCRG_SEED`, in that order) fills
//! every section seed that was not given explicitly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use vcrg_core::synth::SbmSpec;
use vcrg_core::tokenize::TokenizeConfig;
use vcrg_model::TrainConfig;

use crate::error::{CliError, Result};

pub const SEED_ENV: &str = "VCRG_SEED";
const SEEDED_SECTIONS: [&str; 3] = ["synth", "tokenize", "train"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub graph: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
}

impl Paths {
    /// Fills every unset path with a conventional file name inside `dir`.
    pub fn fill_defaults(&mut self, dir: &Path) {
        let slots = [
            (&mut self.graph, "graph.edges"),
            (&mut self.features, "features.csv"),
            (&mut self.labels, "labels.txt"),
            (&mut self.splits, "splits.json"),
            (&mut self.store, "tokens.vcrt"),
            (&mut self.checkpoint, "model.ckpt"),
            (&mut self.metrics, "metrics.jsonl"),
        ];
        for (slot, name) in slots {
            slot.get_or_insert_with(|| dir.join(name));
        }
    }
}

macro_rules! required {
    ($paths:expr, $field:ident) => {
        $paths.$field.as_deref().ok_or(CliError::MissingField(concat!("paths.", stringify!($field))))
    };
}
pub(crate) use required;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub synth: SbmSpec,
    pub tokenize: TokenizeConfig,
    pub train: TrainConfig,
}

/// Where the raw configuration comes from, before resolution.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource<'a> {
    pub file: Option<&'a Path>,
    pub overrides: &'a [String],
    pub seed: Option<u64>,
    /// Value of `VCRG_SEED`, if set.
    pub env_seed: Option<String>,
}

impl RunConfig {
    pub fn resolve(source: &ConfigSource<'_>) -> Result<Self> {
        let mut value = match source.file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Input { field: "config", path: path.into(), source: e })?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Parse { field: "config", path: path.into(), source: Box::new(e) })?
            }
            None => Value::Object(Map::new()),
        };
        if !value.is_object() {
            return Err(CliError::Config("top level must be a JSON object".into()));
        }
        for item in source.overrides {
            apply_override(&mut value, item)?;
        }

        let env_seed = match &source.env_seed {
            Some(raw) => Some(
                raw.trim()
                    .parse::<u64>()
                    .map_err(|_| CliError::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?,
            ),
            None => None,
        };
        let from_config = match value.get("seed") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_u64().ok_or_else(|| CliError::Config(format!("seed {v} is not an unsigned integer")))?),
        };
        if let Some(seed) = source.seed.or(from_config).or(env_seed) {
            value["seed"] = seed.into();
            for section in SEEDED_SECTIONS {
                let entry = value.as_object_mut().unwrap().entry(section).or_insert_with(|| Value::Object(Map::new()));
                let obj = entry.as_object_mut().ok_or_else(|| CliError::Config(format!("`{section}` must be an object")))?;
                obj.entry("seed").or_insert(seed.into());
            }
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// `a.b.c=v`: `v` is parsed as JSON when possible, else taken as a string.
fn apply_override(root: &mut Value, item: &str) -> Result<()> {
    let (key, raw) = item.split_once('=').ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key {key:?} has an empty component")));
    }
    for part in &parts[..parts.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| CliError::Config(format!("override {key:?} descends into a non-object")))?;
        node = obj.entry(*part).or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = node.as_object_mut().ok_or_else(|| CliError::Config(format!("override {key:?} descends into a non-object")))?;
    obj.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

/// `<artifact>.config.json`, written next to every output.
pub fn resolved_config_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}
