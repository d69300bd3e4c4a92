use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything needed to rerun a command.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub inputs: Value,
    pub tool_version: &'static str,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub sequential: bool,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(
        command: &str,
        inputs: Value,
        seed: Option<u64>,
        threads: Option<usize>,
        sequential: bool,
    ) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            inputs,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed,
            threads,
            sequential,
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }
}

/// `out.csv` -> `out.csv.manifest.json`; a directory gets `manifest.json`.
pub fn sidecar(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join("manifest.json")
    } else {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }
}

/// Absolute form of every existing path in the options, for the manifest.
pub fn resolve_paths(mut inputs: Value) -> Value {
    if let Value::Object(map) = &mut inputs {
        for (key, v) in map.iter_mut() {
            if matches!(key.as_str(), "rates" | "init" | "scenario" | "output") {
                if let Some(s) = v.as_str().filter(|s| Path::new(s).exists()) {
                    if let Ok(abs) = std::path::absolute(s) {
                        *v = Value::String(abs.display().to_string());
                    }
                }
            }
        }
    }
    inputs
}
