use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects files written under one output directory and finishes with
/// `manifest.json`.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
    inputs: serde_json::Map<String, serde_json::Value>,
}

impl OutDir {
    pub fn create(dir: &Path) -> anyhow::Result<OutDir> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            inputs: serde_json::Map::new(),
        })
    }

    pub fn input(&mut self, role: &str, path: &Path, bytes: &[u8]) {
        self.inputs.insert(
            role.to_string(),
            json!({"path": path.display().to_string(), "sha256": sha256_hex(bytes)}),
        );
    }

    pub fn write(&mut self, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn finish<C: Serialize>(self, command: &str, config: &C, timings: bool) -> anyhow::Result<()> {
        let config = serde_json::to_value(config)?;
        // The output location does not change what is computed.
        let mut hashed = config.clone();
        if let Some(m) = hashed.as_object_mut() {
            m.remove("out");
        }
        let hash = sha256_hex(serde_json::to_string(&hashed)?.as_bytes());
        let manifest = json!({
            "command": command,
            "config": config,
            "config_hash": hash,
            "versions": {
                "loadshed": env!("CARGO_PKG_VERSION"),
                "model_format": loadshed_core::nn::FORMAT_VERSION,
            },
            "inputs": self.inputs,
            "outputs": self.written,
            "timings": timings,
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// Plain CSV: header plus rows, fields joined by commas.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}
