//! Run manifest: what was run, on which data, with which settings.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Config keys that name where or how fast a run happens rather than what
/// it computes; they are recorded but not hashed.
pub const UNHASHED_KEYS: [&str; 2] = ["out", "threads"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Every resolved setting, defaults included.
    pub config: BTreeMap<String, String>,
    pub dataset_fingerprint: String,
    pub version: String,
    pub master_seed: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        config: BTreeMap<String, String>,
        dataset_fingerprint: String,
        master_seed: u64,
    ) -> Self {
        Self {
            subcommand: subcommand.into(),
            config,
            dataset_fingerprint,
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// SHA-256 over everything that determines the results: the timestamp,
    /// output directory and thread count are left out so reruns match.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.subcommand, &self.dataset_fingerprint, &self.version] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        h.update(self.master_seed.to_le_bytes());
        for (k, v) in self.config.iter().filter(|(k, _)| !UNHASHED_KEYS.contains(&k.as_str())) {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    /// Writes the manifest as pretty JSON with its hash included.
    pub fn write(&self, path: &Path) -> Result<String> {
        let hash = self.hash();
        let mut value = serde_json::to_value(self).map_err(std::io::Error::other)?;
        if let serde_json::Value::Object(m) = &mut value {
            m.insert("hash".into(), serde_json::Value::String(hash.clone()));
        }
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, &value).map_err(std::io::Error::other)?;
        f.write_all(b"\n")?;
        Ok(hash)
    }
}
