//! Config-file loading and flag resolution.
//!
//! Every subcommand resolves each parameter with the same precedence:
//! explicit CLI flag, then config-file key, then built-in default. Config
//! files come in two forms, flat `key = value` lines or a single JSON
//! object; keys match the long CLI flag names (underscores are accepted in
//! place of dashes). Keys that no flag of the subcommand consumes are
//! rejected by name.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Key-value pairs loaded from `--config`, consumed as flags resolve.
#[derive(Debug, Default)]
pub struct FileConfig {
    entries: BTreeMap<String, String>,
}

fn canonical(key: &str) -> String {
    key.replace('_', "-")
}

fn json_value_to_string(key: &str, value: &serde_json::Value) -> Result<String> {
    use serde_json::Value;
    Ok(match value {
        Value::Null => bail!("config key `{key}`: null is not a usable value"),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        Value::Array(items) => {
            let parts: Result<Vec<String>> = items
                .iter()
                .map(|item| match item {
                    Value::Number(n) => Ok(n.to_string()),
                    Value::String(s) => Ok(s.clone()),
                    other => Err(anyhow!(
                        "config key `{key}`: list entries must be numbers or strings, got {other}"
                    )),
                })
                .collect();
            parts?.join(",")
        }
        Value::Object(_) => bail!("config key `{key}`: nested objects are not supported"),
    })
}

impl FileConfig {
    /// Loads a config file; a leading `{` selects the JSON form, anything
    /// else the flat `key = value` form.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut entries = BTreeMap::new();
        if text.trim_start().starts_with('{') {
            let value: serde_json::Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing JSON config {}", path.display()))?;
            let object = value
                .as_object()
                .ok_or_else(|| anyhow!("JSON config must be a single object"))?;
            for (key, value) in object {
                entries.insert(canonical(key), json_value_to_string(key, value)?);
            }
        } else {
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    anyhow!("config line {} is not `key = value`: `{line}`", lineno + 1)
                })?;
                entries.insert(canonical(key.trim()), value.trim().to_string());
            }
        }
        Ok(Self { entries })
    }

    /// Removes and returns the value for `key`, if present.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(&canonical(key))
    }

    /// Errors on any key no flag consumed, naming each one.
    pub fn finish(self, subcommand: &str) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        bail!(
            "unknown config key(s) for `{subcommand}`: {}",
            keys.join(", ")
        );
    }
}

/// CLI flag beats config key beats default; file values are parsed with
/// errors that name the offending key.
pub fn resolve<T>(cfg: &mut FileConfig, key: &str, cli: Option<T>, default: T) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    if let Some(value) = cli {
        cfg.take(key);
        return Ok(value);
    }
    match cfg.take(key) {
        Some(raw) => raw
            .trim()
            .parse()
            .map_err(|e| anyhow!("config key `{key}`: {e} (value `{raw}`)")),
        None => Ok(default),
    }
}

/// [`resolve`] for parameters with no default; `None` means unset.
pub fn resolve_opt<T>(cfg: &mut FileConfig, key: &str, cli: Option<T>) -> Result<Option<T>>
where
    T: FromStr,
    T::Err: Display,
{
    if let Some(value) = cli {
        cfg.take(key);
        return Ok(Some(value));
    }
    match cfg.take(key) {
        Some(raw) => raw
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| anyhow!("config key `{key}`: {e} (value `{raw}`)")),
        None => Ok(None),
    }
}

/// Boolean switches: the CLI flag can only assert `true`; a config key may
/// set either value.
pub fn resolve_flag(cfg: &mut FileConfig, key: &str, cli: bool) -> Result<bool> {
    if cli {
        cfg.take(key);
        return Ok(true);
    }
    match cfg.take(key) {
        Some(raw) => raw
            .trim()
            .parse()
            .map_err(|e| anyhow!("config key `{key}`: {e} (value `{raw}`)")),
        None => Ok(false),
    }
}

/// Parses a comma-separated list, naming the key in errors.
pub fn parse_list<T>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    let mut out = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            bail!("key `{key}`: empty entry in list `{raw}`");
        }
        out.push(
            part.parse()
                .map_err(|e| anyhow!("key `{key}`: {e} (entry `{part}`)"))?,
        );
    }
    if out.is_empty() {
        bail!("key `{key}`: list is empty");
    }
    Ok(out)
}
