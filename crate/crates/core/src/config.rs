//! Plain `key = value` configuration files.
//!
//! Used for preprocessing specs, bias grids and CLI `--config` files. Lines
//! starting with `#` are comments, list values are comma separated.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    origin: String,
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    origin: origin.to_string(),
                    line: idx + 1,
                    reason: "expected `key = value`".into(),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config {
                    origin: origin.to_string(),
                    line: idx + 1,
                    reason: "empty key".into(),
                });
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config {
                    origin: origin.to_string(),
                    line: idx + 1,
                    reason: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self {
            origin: origin.to_string(),
            entries,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn insert(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| self.err(format!("missing key `{key}`")))
    }

    /// Comma-separated list; an absent key or empty value is an empty list.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        if !self.contains(key) {
            return Ok(None);
        }
        self.list(key)
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| self.err(format!("`{key}`: `{v}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| self.err(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    /// Renders the config back in canonical (sorted) `key = value` form.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    fn err(&self, reason: String) -> Error {
        Error::Config {
            origin: self.origin.clone(),
            line: 0,
            reason,
        }
    }
}
