//! Experiment configuration: TOML file layered over built-in defaults, with
//! `key=value` overrides on top.
//!
//! Keys are dotted paths into [`ExperimentConfig`], e.g. `train.lr`,
//! `env.hsn.horizon`, `eval.team_sizes`. Override values are TOML literals
//! (`0.005`, `true`, `[3, 4, 5]`); anything that does not parse as one is
//! taken as a string, so `variant=ca_gnn` works without quotes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::envs::{EnvKind, EnvSettings};
use crate::error::{Error, Result};
use crate::eval::EvalProtocol;
use crate::nets::PolicyVariant;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Which environment to train or evaluate on.
    pub task: EnvKind,
    pub variant: PolicyVariant,
    pub seed: u64,
    /// Output directory; the CLI falls back to `CAPTEAM_OUT_DIR`, then `runs`.
    pub out_dir: Option<PathBuf>,
    pub env: EnvSettings,
    pub train: TrainConfig,
    pub eval: EvalProtocol,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: EnvKind::Hsn,
            variant: PolicyVariant::CaCcGnn,
            seed: 0,
            out_dir: None,
            env: EnvSettings::default(),
            train: TrainConfig::default(),
            eval: EvalProtocol::default(),
        }
    }
}

fn override_value(raw: &str) -> Value {
    raw.parse::<Value>().unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `key` (dotted) in `table`, creating intermediate tables.
fn set_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "malformed key"));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::config(key, format!("`{part}` is not a table"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn key_of(path: &serde_path_to_error::Path, msg: &str) -> String {
    let base = path.to_string();
    let base = if base == "." { String::new() } else { base };
    match msg.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
        Some(field) if base.is_empty() => field.to_string(),
        Some(field) if !base.ends_with(field) => format!("{base}.{field}"),
        _ => base,
    }
}

impl ExperimentConfig {
    /// Defaults ← `file` ← `overrides` (`key=value`), then validation.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match file {
            Some(path) => {
                std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?
            }
            None => String::new(),
        };
        Self::resolve_str(&text, overrides)
    }

    pub fn resolve_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.to_string().trim().to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item.as_str(), "override must look like key=value"))?;
            set_path(&mut table, key.trim(), override_value(raw.trim()))?;
        }
        let config: Self = serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
            let full = e.inner().to_string();
            let msg = full.lines().next().unwrap_or_default().to_string();
            Error::config(key_of(e.path(), &msg), msg)
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.hmt.validate()?;
        self.env.hsn.validate()?;
        self.train.validate()?;
        self.eval.validate()
    }

    /// Fully resolved config as TOML; parsing it back gives the same value.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_values_parse_as_toml_or_string() {
        assert_eq!(override_value("0.5"), Value::Float(0.5));
        assert_eq!(
            override_value("[3, 4]"),
            Value::Array(vec![Value::Integer(3), Value::Integer(4)])
        );
        assert_eq!(override_value("ca_gnn"), Value::String("ca_gnn".into()));
    }

    #[test]
    fn nested_override_creates_tables() {
        let mut t = Table::new();
        set_path(&mut t, "env.hsn.horizon", Value::Integer(10)).unwrap();
        assert_eq!(t["env"]["hsn"]["horizon"], Value::Integer(10));
        assert!(set_path(&mut t, "env..x", Value::Integer(1)).is_err());
    }
}
