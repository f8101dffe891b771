//! Result records and the content-addressed cache.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// What a pipeline produces, before it is wrapped into a record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Product {
    pub payload: Value,
    /// Grid sizes actually used and refinement deltas.
    pub provenance: Value,
    /// Headline numbers, used by `sweep` tables.
    pub summary: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    /// Side files by name: CSV tables and SVG figures.
    pub files: BTreeMap<String, String>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub command: String,
    pub input_hash: String,
    pub started: f64,
    pub finished: f64,
    pub cache: String,
    pub config: Value,
    pub payload: Value,
    pub provenance: Value,
    pub summary: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    pub exit_code: i32,
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn input_hash(cfg: &RunConfig) -> String {
    let mut h = Sha256::new();
    h.update(format!("schema={SCHEMA_VERSION}\n").as_bytes());
    h.update(cfg.canonical().as_bytes());
    hex::encode(h.finalize())
}

#[derive(Serialize, Deserialize)]
struct Entry {
    schema_version: u32,
    input_hash: String,
    product: Product,
}

pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    /// `SHEARSPEC_CACHE_DIR` if set, otherwise `<out>/.cache`.
    pub fn locate(out: &Path) -> Self {
        let dir = std::env::var_os("SHEARSPEC_CACHE_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| out.join(".cache"));
        Self { dir }
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Stored product iff the hash and schema version match. Unreadable
    /// entries count as misses.
    pub fn lookup(&self, key: &str) -> Option<Product> {
        let path = self.path(key);
        let text = std::fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<Entry>(&text) {
            Ok(e) if e.schema_version == SCHEMA_VERSION && e.input_hash == key => Some(e.product),
            Ok(e) => {
                log::info!("stale cache entry {} (schema {})", path.display(), e.schema_version);
                None
            }
            Err(err) => {
                log::warn!("ignoring corrupted cache entry {}: {err}", path.display());
                None
            }
        }
    }

    pub fn store(&self, key: &str, product: &Product) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let entry = Entry {
            schema_version: SCHEMA_VERSION,
            input_hash: key.to_string(),
            product: product.clone(),
        };
        let tmp = self.dir.join(format!("{key}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec(&entry)?)?;
        std::fs::rename(tmp, self.path(key))
    }
}
