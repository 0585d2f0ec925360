//! On-disk formats.
//!
//! Every file carries a provenance record with the fully resolved config and
//! the seed it came from. CSV files put it in leading `#` comment lines; JSON
//! files wrap their payload as `{"provenance": …, "<payload>": …}`. Nothing
//! time-dependent is written, so rerunning a config reproduces every byte.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use snd_core::policies::Checkpoint;
use snd_core::DistanceMatrix;

/// Bumped whenever a file layout changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema_version: u32,
    pub config: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub seeds: Vec<u64>,
}

impl Provenance {
    pub fn new(config: &impl Serialize, variant: Option<&str>, seeds: Vec<u64>) -> Self {
        Self {
            tool: "snd",
            version: env!("CARGO_PKG_VERSION"),
            schema_version: SCHEMA_VERSION,
            config: serde_json::to_value(config).expect("config serializes"),
            variant: variant.filter(|v| !v.is_empty()).map(String::from),
            seeds,
        }
    }

    pub fn csv_header(&self) -> String {
        let one_line = serde_json::to_string(self).expect("provenance serializes");
        format!("# snd schema {}\n# provenance: {one_line}\n", self.schema_version)
    }

    pub fn wrap(&self, key: &str, payload: Value) -> Value {
        json!({ "provenance": self, key: payload })
    }
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn write_csv(path: &Path, prov: &Provenance, body: &str) -> Result<()> {
    write(path, &format!("{}{body}", prov.csv_header()))
}

pub fn write_json(path: &Path, prov: &Provenance, key: &str, payload: Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&prov.wrap(key, payload))?;
    text.push('\n');
    write(path, &text)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// The payload under `key` when the document is wrapped, else the document.
fn unwrap_payload(doc: Value, key: &str) -> Value {
    match doc {
        Value::Object(mut m) if m.contains_key("provenance") && m.contains_key(key) => m.remove(key).unwrap_or(Value::Null),
        other => other,
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let doc: Value = serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let payload = unwrap_payload(doc, "checkpoint");
    Checkpoint::from_json(&payload.to_string()).with_context(|| format!("{} is not a policy checkpoint", path.display()))
}

/// Reads a matrix from `.json` (wrapped or bare) or headerless CSV.
pub fn load_matrix(path: &Path) -> Result<DistanceMatrix> {
    let text = read(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let m = if is_json {
        let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        DistanceMatrix::from_json(&unwrap_payload(doc, "matrix").to_string())
    } else {
        DistanceMatrix::from_csv(&text)
    };
    m.with_context(|| format!("{} is not a valid distance matrix", path.display()))
}

pub fn load_log(path: &Path) -> Result<snd_core::training::TrainingLog> {
    let doc: Value = serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let payload = unwrap_payload(doc, "records");
    snd_core::training::TrainingLog::from_json(&payload.to_string()).with_context(|| format!("{} is not a training log", path.display()))
}
