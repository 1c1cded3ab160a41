//! Reproducibility header attached to every file the tool writes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const TOOL_NAME: &str = "sirank";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Input name to SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(seed: Option<u64>) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            seed,
            inputs: BTreeMap::new(),
        }
    }

    pub fn with_input(mut self, name: impl Into<String>, fingerprint: impl Into<String>) -> Self {
        self.inputs.insert(name.into(), fingerprint.into());
        self
    }

    /// Header lines for line-oriented formats, each starting with `prefix`.
    pub fn header_lines(&self, prefix: &str) -> Vec<String> {
        let mut lines = vec![format!("{prefix} {} {}", self.tool, self.version)];
        match self.seed {
            Some(seed) => lines.push(format!("{prefix} seed {seed}")),
            None => lines.push(format!("{prefix} seed none")),
        }
        for (name, digest) in &self.inputs {
            lines.push(format!("{prefix} input {name} sha256:{digest}"));
        }
        lines
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_fingerprint(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}
