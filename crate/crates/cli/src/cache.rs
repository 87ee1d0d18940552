//! Sidecar cache for full-cloud exact reference distances, keyed by a hash
//! of the dataset contents so re-runs skip the expensive LP.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use quantot_core::DiscreteMeasure;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const CACHE_FILE: &str = "quantot-ref-cache.json";

/// Content hash of a dataset pair (supports and weights of both clouds).
/// Salted with the crate version so caches from older solver builds are not
/// reused across upgrades.
pub fn dataset_hash(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"quantot-ref-");
    hasher.update(env!("CARGO_PKG_VERSION").as_bytes());
    for m in [mu, nu] {
        hasher.update((m.len() as u64).to_le_bytes());
        hasher.update((m.dim() as u64).to_le_bytes());
        for &x in m.support().iter() {
            hasher.update(x.to_le_bytes());
        }
        for &w in m.weights().iter() {
            hasher.update(w.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical config string, recorded in CSV metadata.
pub fn config_hash(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub struct RefCache {
    path: PathBuf,
    entries: BTreeMap<String, f64>,
}

impl RefCache {
    /// Opens (or initializes) the cache sidecar in `dir`.
    pub fn open(dir: &Path) -> Self {
        let path = dir.join(CACHE_FILE);
        let entries = std::fs::read_to_string(&path)
            .ok()
            .and_then(|text| serde_json::from_str(&text).ok())
            .unwrap_or_default();
        Self { path, entries }
    }

    pub fn get_or_compute(
        &mut self,
        key: &str,
        compute: impl FnOnce() -> Result<f64>,
    ) -> Result<f64> {
        if let Some(&v) = self.entries.get(key) {
            return Ok(v);
        }
        let v = compute()?;
        self.entries.insert(key.to_string(), v);
        let text = serde_json::to_string_pretty(&self.entries)
            .map_err(|e| CliError::Data(format!("cannot serialize reference cache: {e}")))?;
        if let Err(e) = std::fs::write(&self.path, text) {
            log::warn!(
                "could not persist reference cache {}: {e}",
                self.path.display()
            );
        }
        Ok(v)
    }
}
