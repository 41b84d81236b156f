//! `provenance.json` records: configuration, seeds, input digests and tool
//! version. No timestamps or output paths, so identical runs produce
//! identical records.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde_json::{json, Value};
use voxbench::fsio::sha256_hex;

use crate::put;

pub fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub struct Provenance {
    pub command: &'static str,
    pub config: Value,
    pub config_sources: BTreeMap<String, String>,
    pub seeds: Value,
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: &'static str, config: Value) -> Self {
        Provenance {
            command,
            config,
            config_sources: BTreeMap::new(),
            seeds: Value::Null,
            inputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, name: impl Into<String>, path: &Path) -> anyhow::Result<()> {
        self.inputs.insert(name.into(), file_digest(path)?);
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "tool": "voxbench",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "config_sources": self.config_sources,
            "seeds": self.seeds,
            "input_sha256": self.inputs,
        })
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())? + "\n";
        put(&dir.join("provenance.json"), text.as_bytes())
    }
}
