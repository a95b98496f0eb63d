use std::path::Path;

use anyhow::{anyhow, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Failure, Globals};

pub fn read_table(path: &Path) -> anyhow::Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<toml::Table>()
        .with_context(|| format!("parsing config {}", path.display()))
}

/// Config-file table for `section`, overlaid with the flags that were
/// given, then filled from the resolved type's defaults.
pub fn resolve<A: Serialize, R: DeserializeOwned>(g: &Globals, section: &str, args: &A) -> Result<R, Failure> {
    let mut merged = match g.config.as_ref().and_then(|c| c.get(section)) {
        Some(toml::Value::Table(t)) => serde_json::to_value(t).map_err(|e| Failure::Config(e.into()))?,
        Some(_) => return Err(Failure::Config(anyhow!("config entry [{section}] must be a table"))),
        None => serde_json::json!({}),
    };
    let flags = serde_json::to_value(args).map_err(|e| Failure::Config(e.into()))?;
    if let (Some(m), Some(f)) = (merged.as_object_mut(), flags.as_object()) {
        for (k, v) in f {
            m.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(merged).map_err(|e| Failure::Config(anyhow!("[{section}] settings: {e}")))
}
