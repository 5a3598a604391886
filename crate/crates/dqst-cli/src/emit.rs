//! Deterministic artifact writers: JSON reports carrying the schema,
//! config hash and seed; CSV tables with a metadata comment line.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn config_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

pub struct Emitter {
    pub out_dir: PathBuf,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Emitter {
    pub fn new(out_dir: &Path, config_sha256: String, seed: Option<u64>) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Io(format!("create {}: {e}", out_dir.display())))?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            config_sha256,
            seed,
        })
    }

    /// Emitter with the same destination and hash but an explicit seed,
    /// for pipelines that fall back to a built-in default seed.
    pub fn with_seed(&self, seed: u64) -> Emitter {
        Emitter {
            out_dir: self.out_dir.clone(),
            config_sha256: self.config_sha256.clone(),
            seed: Some(seed),
        }
    }

    pub fn write_json(&self, name: &str, command: &str, body: Value) -> Result<PathBuf, CliError> {
        let mut doc = Map::new();
        doc.insert("schema".into(), json!(1));
        doc.insert("command".into(), json!(command));
        doc.insert("config_sha256".into(), json!(self.config_sha256));
        doc.insert(
            "seed".into(),
            self.seed.map(|s| json!(s)).unwrap_or(Value::Null),
        );
        if let Value::Object(map) = body {
            for (k, v) in map {
                doc.insert(k, v);
            }
        }
        let path = self.out_dir.join(name);
        let text = serde_json::to_string_pretty(&Value::Object(doc))
            .map_err(|e| CliError::Io(format!("serialize {name}: {e}")))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("write {name}: {e}")))?;
        Ok(path)
    }

    pub fn write_csv(
        &self,
        name: &str,
        header: &str,
        rows: &[String],
    ) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(name);
        let mut text = format!(
            "# config_sha256={} seed={}\n{header}\n",
            self.config_sha256,
            self.seed
                .map(|s| s.to_string())
                .unwrap_or_else(|| "none".into())
        );
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| CliError::Io(format!("write {name}: {e}")))?;
        Ok(path)
    }
}

/// CSV rows for a complex matrix: `i,j,re,im`.
pub fn matrix_rows(m: &dqst::linops::CMat) -> Vec<String> {
    let mut rows = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            rows.push(format!(
                "{i},{j},{:.12e},{:.12e}",
                m[[i, j]].re,
                m[[i, j]].im
            ));
        }
    }
    rows
}
