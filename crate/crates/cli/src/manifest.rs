use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::{write_error, CliError};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_hash(path: &Path) -> Option<String> {
    std::fs::read(path).ok().map(|b| sha256_hex(&b))
}

/// Run record written next to a command's primary output as
/// `<output>.manifest.json`. It holds no timestamps, so reruns with the
/// same inputs give identical bytes.
#[derive(Debug, Default)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub derived_seeds: Vec<(String, u64)>,
    pub config_sha256: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_text: &str) -> Self {
        Self { command: command.into(), seed, config_sha256: sha256_hex(config_text.as_bytes()), ..Self::default() }
    }

    pub fn to_json(&self) -> Value {
        let files = |paths: &[PathBuf]| -> Vec<Value> {
            paths.iter().map(|p| json!({ "path": p.display().to_string(), "sha256": file_hash(p) })).collect()
        };
        let seeds: serde_json::Map<String, Value> =
            self.derived_seeds.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        json!({
            "tool": "rulecritic",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "derived_seeds": seeds,
            "config_sha256": self.config_sha256,
            "inputs": files(&self.inputs),
            "outputs": files(&self.outputs),
        })
    }

    pub fn path_for(primary: &Path) -> PathBuf {
        let mut name = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    /// Writes the manifest beside `primary`.
    pub fn write(&self, primary: &Path) -> Result<PathBuf, CliError> {
        let path = Self::path_for(primary);
        let text = serde_json::to_string_pretty(&self.to_json()).expect("json values serialise") + "\n";
        std::fs::write(&path, text).map_err(|e| write_error(&path, e))?;
        Ok(path)
    }
}
