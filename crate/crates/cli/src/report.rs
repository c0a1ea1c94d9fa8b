//! JSON reports with a provenance block.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Default, Serialize)]
pub struct Provenance {
    pub tool_version: &'static str,
    /// SHA-256 of the effective configuration below (output directory excluded).
    pub config_sha256: String,
    pub seeds: BTreeMap<&'static str, u64>,
    /// SHA-256 of the correctness CSV, when the command reads or writes one.
    pub dataset_sha256: Option<String>,
    /// SHA-256 of every other input file, keyed by flag name.
    pub inputs: BTreeMap<&'static str, String>,
}

impl Provenance {
    pub fn new<C: Serialize>(config: &C) -> anyhow::Result<(Self, Value)> {
        let mut value = serde_json::to_value(config)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("out");
        }
        let config_sha256 = sha256_hex(&serde_json::to_vec(&value)?);
        Ok((
            Provenance {
                tool_version: env!("CARGO_PKG_VERSION"),
                config_sha256,
                ..Provenance::default()
            },
            value,
        ))
    }

    pub fn seed(mut self, name: &'static str, value: Option<u64>) -> Self {
        if let Some(v) = value {
            self.seeds.insert(name, v);
        }
        self
    }

    pub fn input(mut self, name: &'static str, path: Option<&Path>) -> anyhow::Result<Self> {
        if let Some(p) = path {
            let hash = file_sha256(p)?;
            if name == "data" {
                self.dataset_sha256 = Some(hash);
            } else {
                self.inputs.insert(name, hash);
            }
        }
        Ok(self)
    }
}

#[derive(Serialize)]
struct Report<'a, R: Serialize> {
    command: &'a str,
    provenance: &'a Provenance,
    config: &'a Value,
    result: &'a R,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_report<R: Serialize>(
    out: &Path,
    command: &str,
    provenance: &Provenance,
    config: &Value,
    result: &R,
) -> anyhow::Result<()> {
    write_json(
        &out.join("report.json"),
        &Report {
            command,
            provenance,
            config,
            result,
        },
    )
}
