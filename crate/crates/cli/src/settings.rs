//! Config resolution: defaults < file < `MLS_<SECTION>__<KEY>` env vars < flags.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mls_core::ExperimentConfig;
use serde_json::Value;

const SECTIONS: [&str; 3] = ["rollout", "train", "analysis"];

/// Reads a config document or a run manifest (its `config` field).
pub fn load_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => anyhow!("file not found: {}", path.display()),
        _ => anyhow!("cannot read {}: {e}", path.display()),
    })?;
    let doc: Value = serde_json::from_str(&text).with_context(|| format!("malformed JSON in {}", path.display()))?;
    let doc = match doc {
        Value::Object(mut map) if map.contains_key("invocation") && map.contains_key("config") => {
            map.remove("config").expect("checked")
        }
        other => other,
    };
    // Round-trip through the typed config so every key is present.
    let cfg: ExperimentConfig =
        serde_json::from_value(doc).with_context(|| format!("invalid config in {}", path.display()))?;
    Ok(serde_json::to_value(cfg)?)
}

pub fn defaults() -> Value {
    serde_json::to_value(ExperimentConfig::default()).expect("config serialises")
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `section.key`, matching both names case-insensitively.
pub fn set_path(doc: &mut Value, section: &str, key: &str, raw: &str) -> Result<()> {
    let sec_name = SECTIONS
        .iter()
        .find(|s| s.eq_ignore_ascii_case(section))
        .ok_or_else(|| anyhow!("unknown config section `{section}` (expected rollout, train or analysis)"))?;
    let obj = doc
        .get_mut(*sec_name)
        .and_then(Value::as_object_mut)
        .ok_or_else(|| anyhow!("config section `{sec_name}` missing"))?;
    let name = obj
        .keys()
        .find(|k| k.eq_ignore_ascii_case(key))
        .cloned()
        .ok_or_else(|| anyhow!("unknown config key `{sec_name}.{key}`"))?;
    obj.insert(name, parse_scalar(raw));
    Ok(())
}

/// Applies `MLS_<SECTION>__<KEY>=value` pairs.
pub fn apply_env<I: IntoIterator<Item = (String, String)>>(doc: &mut Value, vars: I) -> Result<()> {
    let mut pairs: Vec<(String, String)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with("MLS_") && k.contains("__"))
        .collect();
    pairs.sort();
    for (k, v) in pairs {
        let (section, key) = k["MLS_".len()..].split_once("__").expect("filtered");
        set_path(doc, section, key, &v).with_context(|| format!("in environment variable {k}"))?;
    }
    Ok(())
}

/// Applies `section.key=value` assignments.
pub fn apply_sets(doc: &mut Value, sets: &[String]) -> Result<()> {
    for s in sets {
        let (path, raw) = s
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects section.key=value, got `{s}`"))?;
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| anyhow!("--set expects section.key=value, got `{s}`"))?;
        set_path(doc, section, key, raw)?;
    }
    Ok(())
}

pub fn finish(doc: Value) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_value(doc).context("invalid config value")?;
    cfg.validate()?;
    Ok(cfg)
}

/// File, then environment, then `--set` flags. Command-specific flags are
/// applied by the caller on the returned document before `finish`.
pub fn resolve(config: Option<&Path>, sets: &[String]) -> Result<Value> {
    let mut doc = match config {
        Some(p) => load_file(p)?,
        None => defaults(),
    };
    apply_env(&mut doc, std::env::vars())?;
    apply_sets(&mut doc, sets)?;
    Ok(doc)
}

pub fn require_dir(path: &Path) -> Result<()> {
    if path.exists() && !path.is_dir() {
        bail!("output path {} exists and is not a directory", path.display());
    }
    std::fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}
