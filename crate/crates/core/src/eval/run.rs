use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub created_at: DateTime<Utc>,
    pub seed: Option<u64>,
    /// SHA-256 of the checkpoint archive the run evaluated.
    pub checkpoint_sha256: Option<String>,
    pub config: serde_json::Value,
    pub files: Vec<String>,
    pub version: String,
}

impl Manifest {
    pub fn new(command: impl Into<String>, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            created_at: Utc::now(),
            seed: None,
            checkpoint_sha256: None,
            config: serde_json::to_value(config)?,
            files: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
        })
    }
}

/// An output directory that records every file it writes in its manifest.
pub struct RunDir {
    path: PathBuf,
    manifest: Manifest,
}

impl RunDir {
    pub fn create(path: impl Into<PathBuf>, manifest: Manifest) -> Result<Self> {
        let path = path.into();
        fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        let run = Self { path, manifest };
        run.flush()?;
        Ok(run)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn flush(&self) -> Result<()> {
        let path = self.path.join(MANIFEST_FILE);
        let bytes = serde_json::to_vec_pretty(&self.manifest)?;
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    fn record(&mut self, name: &str) -> Result<PathBuf> {
        if !self.manifest.files.iter().any(|f| f == name) {
            self.manifest.files.push(name.to_string());
            self.flush()?;
        }
        Ok(self.path.join(name))
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<PathBuf> {
        let path = self.record(name)?;
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Store(format!("{}: {e}", path.display())))?;
        for row in rows {
            w.serialize(row).map_err(|e| Error::Store(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.record(name)?;
        let bytes = serde_json::to_vec_pretty(value)?;
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        k: usize,
        accuracy: Option<f64>,
    }

    #[test]
    fn files_are_listed_in_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new("eval", &serde_json::json!({"bins": [0, 1]})).unwrap();
        m.seed = Some(3);
        let mut run = RunDir::create(dir.path().join("run"), m).unwrap();
        run.write_csv("curve.csv", [Row { k: 0, accuracy: Some(0.5) }, Row { k: 1, accuracy: None }]).unwrap();
        run.write_json("metrics.json", &serde_json::json!({"accuracy": 0.5})).unwrap();
        let text = fs::read_to_string(dir.path().join("run/curve.csv")).unwrap();
        assert_eq!(text, "k,accuracy\n0,0.5\n1,\n");
        let manifest: Manifest =
            serde_json::from_slice(&fs::read(dir.path().join("run").join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest.files, ["curve.csv", "metrics.json"]);
        assert_eq!(manifest.seed, Some(3));
    }
}
