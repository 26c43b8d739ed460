//! Config-file merging, thread setup and the CLI error split.

use std::path::Path;

use fairshift_core::config::KvConfig;

pub const THREADS_VAR: &str = "FAIRSHIFT_THREADS";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config; exit 2, nothing written.
    Usage(String),
    /// Failure after validation; exit 1.
    Runtime(fairshift_core::Error),
}

impl From<fairshift_core::Error> for CliError {
    fn from(e: fairshift_core::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Turns a validation failure into a usage error.
pub fn usage<T>(r: fairshift_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

/// Caps the global rayon pool from `FAIRSHIFT_THREADS` when it is set.
pub fn init_threads() -> CliResult<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(None);
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(CliError::Usage(format!("{THREADS_VAR}=`{raw}` is not a positive integer"))),
    };
    // Fails only if a pool already exists, which keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

/// Loads `--config` when given and lays the set flags over it.
pub fn merge(config: Option<&Path>, flags: &[(&str, Option<String>)]) -> CliResult<KvConfig> {
    let mut cfg = match config {
        Some(p) => usage(KvConfig::from_file(p))?,
        None => usage(KvConfig::parse("", "flags"))?,
    };
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.insert(k, v.clone());
        }
    }
    Ok(cfg)
}

/// Fills `key` with `default` when neither the config nor a flag set it.
pub fn default_to(cfg: &mut KvConfig, key: &str, default: impl Into<String>) {
    if !cfg.contains(key) {
        cfg.insert(key, default);
    }
}

pub fn flag(set: bool) -> Option<String> {
    set.then(|| "true".to_string())
}

pub fn bool_key(cfg: &KvConfig, key: &str) -> CliResult<bool> {
    match cfg.get(key) {
        None | Some("false") | Some("0") | Some("no") => Ok(false),
        Some("true") | Some("1") | Some("yes") => Ok(true),
        Some(v) => Err(CliError::Usage(format!("`{key}`: `{v}` is not a boolean"))),
    }
}

pub fn record_threads(cfg: &mut KvConfig, threads: Option<usize>) {
    cfg.insert("threads", threads.map_or_else(|| "auto".to_string(), |n| n.to_string()));
}
