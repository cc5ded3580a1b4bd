//! Configuration files and output artifacts.
//!
//! Configs are strict JSON: unknown keys are rejected and errors carry a
//! JSON pointer. `"preset:NAME"` strings in the `transducer` and `qubit`
//! slots are replaced by the named parameter set before parsing.
//!
//! Result floats are written with 9 significant digits. The resolved config
//! inside a manifest is written exactly so it reproduces the run bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LinkError, Result};
use crate::model::{
    validate, DeliveryPolicy, LinkConfig, MemoryParams, ProtocolSpec, StorageQubitParams,
    TransducerParams,
};
use crate::planner::ArchitectureSpec;
use crate::presets;

pub const PRESET_PREFIX: &str = "preset:";

/// Everything a config file may contain: one link and, for planning, an
/// architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub transducer: TransducerParams,
    pub qubit: StorageQubitParams,
    pub protocol: ProtocolSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemoryParams>,
    pub policy: DeliveryPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<ArchitectureSpec>,
}

impl ConfigFile {
    pub fn new(link: LinkConfig, architecture: Option<ArchitectureSpec>) -> Self {
        Self {
            transducer: link.transducer,
            qubit: link.qubit,
            protocol: link.protocol,
            memory: link.memory,
            policy: link.policy,
            architecture,
        }
    }

    pub fn link(&self) -> LinkConfig {
        LinkConfig {
            transducer: self.transducer.clone(),
            qubit: self.qubit.clone(),
            protocol: self.protocol.clone(),
            memory: self.memory.clone(),
            policy: self.policy.clone(),
        }
    }

    /// Copy with every default written out.
    pub fn resolved(&self) -> Self {
        Self::new(self.link().materialized(), self.architecture.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = validate(&self.link());
        if let Some(a) = &self.architecture {
            v.extend(a.violations());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(LinkError::Invalid(v))
        }
    }
}

/// Replace preset references in the parameter slots by their values.
pub fn expand_presets(doc: &mut Value) -> Result<()> {
    let Some(obj) = doc.as_object_mut() else {
        return Ok(());
    };
    for slot in ["transducer", "qubit"] {
        let Some(Value::String(s)) = obj.get(slot) else {
            continue;
        };
        let Some(name) = s.strip_prefix(PRESET_PREFIX) else {
            continue;
        };
        let expanded = match slot {
            "transducer" => serde_json::to_value(presets::transducer(name)?),
            _ => serde_json::to_value(presets::qubit(name)?),
        }
        .expect("parameter sets serialize");
        obj.insert(slot.to_string(), expanded);
    }
    Ok(())
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Parse and validate config text.
pub fn parse_config_str(text: &str) -> Result<ConfigFile> {
    if text.trim().is_empty() {
        return Err(LinkError::Schema {
            pointer: String::new(),
            message: "empty document, expected a JSON object".to_string(),
        });
    }
    let mut doc: Value = serde_json::from_str(text).map_err(|e| LinkError::Schema {
        pointer: String::new(),
        message: e.to_string(),
    })?;
    if !doc.is_object() {
        return Err(LinkError::Schema {
            pointer: String::new(),
            message: "expected a JSON object".to_string(),
        });
    }
    expand_presets(&mut doc)?;
    let config: ConfigFile = serde_path_to_error::deserialize(doc).map_err(|e| LinkError::Schema {
        pointer: pointer_of(e.path()),
        message: e.inner().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

/// Read, parse and validate a config file.
pub fn parse_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|source| LinkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

/// Provenance block embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Command parameters beyond the config (trials, budget, mode, ...).
    pub parameters: Value,
    pub resolved_config: Option<ConfigFile>,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str, resolved_config: Option<ConfigFile>, seed: Option<u64>) -> Self {
        let now = timestamp();
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            parameters: Value::Object(Default::default()),
            resolved_config,
            seed,
            started_at: now.clone(),
            finished_at: now,
        }
    }

    pub fn finish(&mut self) {
        self.finished_at = timestamp();
    }
}

/// Round to 9 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Round every float in a JSON tree to 9 significant digits.
pub fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// A named file body, ready to write.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub body: String,
}

fn to_value(x: &impl Serialize) -> Value {
    serde_json::to_value(x).expect("report types serialize to JSON")
}

/// `{"manifest": ..., "result": ...}` with result floats rounded.
pub fn json_artifact(name: &str, manifest: &RunManifest, result: &impl Serialize) -> Artifact {
    let mut result = to_value(result);
    round_floats(&mut result);
    let mut doc = serde_json::Map::new();
    doc.insert("manifest".to_string(), to_value(manifest));
    doc.insert("result".to_string(), result);
    let mut body = serde_json::to_string_pretty(&Value::Object(doc)).expect("JSON value");
    body.push('\n');
    Artifact {
        name: name.to_string(),
        body,
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => round_sig(x).to_string(),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

fn write_csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 cells")
}

/// One row per record, nested fields flattened to dotted column names.
pub fn csv_records_artifact<T: Serialize>(name: &str, records: &[T]) -> Artifact {
    let flat: Vec<Vec<(String, Value)>> = records
        .iter()
        .map(|r| {
            let mut row = Vec::new();
            flatten("", &to_value(r), &mut row);
            row
        })
        .collect();
    let header: Vec<String> = flat
        .first()
        .map(|r| r.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    let rows: Vec<Vec<String>> = flat
        .iter()
        .map(|r| r.iter().map(|(_, v)| csv_cell(v)).collect())
        .collect();
    Artifact {
        name: name.to_string(),
        body: write_csv(&header, &rows),
    }
}

/// Two-column `field,value` table of a single result.
pub fn csv_table_artifact(name: &str, result: &impl Serialize) -> Artifact {
    let mut flat = Vec::new();
    flatten("", &to_value(result), &mut flat);
    let rows: Vec<Vec<String>> = flat
        .into_iter()
        .map(|(k, v)| vec![k, csv_cell(&v)])
        .collect();
    Artifact {
        name: name.to_string(),
        body: write_csv(&["field".to_string(), "value".to_string()], &rows),
    }
}

/// Single result in the requested format; `stem` gets the extension.
pub fn emit_report(
    stem: &str,
    manifest: &RunManifest,
    result: &impl Serialize,
    format: Format,
) -> Artifact {
    match format {
        Format::Json => json_artifact(&format!("{stem}.json"), manifest, result),
        Format::Csv => csv_table_artifact(&format!("{stem}.csv"), result),
    }
}

/// Manifest on its own, accompanying CSV outputs.
pub fn manifest_artifact(manifest: &RunManifest) -> Artifact {
    let mut body = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    body.push('\n');
    Artifact {
        name: "manifest.json".to_string(),
        body,
    }
}

fn io_err(path: &Path, source: std::io::Error) -> LinkError {
    LinkError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write each artifact to a temporary file then rename it into place.
/// All bodies exist before the first write, so a failed run leaves no
/// half-written files.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let target = dir.join(&a.name);
        let tmp = dir.join(format!(".{}.tmp-{}", a.name, std::process::id()));
        fs::write(&tmp, &a.body).map_err(|e| io_err(&tmp, e))?;
        if let Err(e) = fs::rename(&tmp, &target) {
            let _ = fs::remove_file(&tmp);
            return Err(io_err(&target, e));
        }
        written.push(target);
    }
    Ok(written)
}
