//! Profile resolution, `key=value` overrides and the config hash.

use std::fs;
use std::path::Path;

use dwl_core::profiles::{self, RunConfig, PROFILE_NAMES};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::Value;

use crate::error::{CliError, Result};

pub fn profile(name: &str) -> Result<RunConfig> {
    profiles::by_name(name).ok_or_else(|| {
        CliError::Usage(format!("unknown profile `{name}` (expected one of {})", PROFILE_NAMES.join(", ")))
    })
}

fn parse_literal(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn coerce(old: &Value, new: Value) -> Value {
    match (old, new) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    }
}

/// Applies one dotted `key=value` override; array elements are addressed by index.
pub fn apply_override(cfg: &RunConfig, assignment: &str) -> Result<RunConfig> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    let mut root = Value::try_from(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let mut slot = &mut root;
    for part in key.split('.') {
        slot = match slot {
            Value::Table(t) => t.get_mut(part),
            Value::Array(a) => part.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
    }
    *slot = coerce(slot, parse_literal(raw.trim()));
    let out = RunConfig::deserialize(root).map_err(|e| CliError::Config(format!("`{key}`: {}", e.message())))?;
    out.validate()?;
    Ok(out)
}

pub fn resolve(profile_name: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = profile(profile_name)?;
    for o in overrides {
        cfg = apply_override(&cfg, o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))
}

pub fn from_toml(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    from_toml(&text)
}

/// SHA-256 of the canonical TOML rendering.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let digest = Sha256::digest(to_toml(cfg)?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
