use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{hex, RunConfig};
use crate::discernibility::ErrorMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    /// Path relative to the run directory.
    pub file: PathBuf,
    pub sha256: String,
}

/// Summary of a co-design run and checksums of everything it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub mode: ErrorMode,
    pub d_star: Vec<f64>,
    pub i_en_d_star: f64,
    pub grid_best: Vec<f64>,
    pub i_en_grid_best: f64,
    pub i_en_grid_average: f64,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub artifacts: Vec<Artifact>,
    pub created_unix_s: u64,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(cfg: &RunConfig) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            mode: cfg.objective.mode,
            d_star: Vec::new(),
            i_en_d_star: f64::NAN,
            grid_best: Vec::new(),
            i_en_grid_best: f64::NAN,
            i_en_grid_average: f64::NAN,
            train_rmse: f64::NAN,
            test_rmse: f64::NAN,
            artifacts: Vec::new(),
            created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    /// Writes `dir/file` through `body` and records its checksum.
    pub fn write_artifact<F>(&mut self, dir: &Path, file: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<std::fs::File>) -> Result<()>,
    {
        let path = dir.join(file);
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(f);
        body(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        drop(w);
        self.add_artifact(dir, file)
    }

    pub fn add_artifact(&mut self, dir: &Path, file: &str) -> Result<()> {
        let sha256 = sha256_file(&dir.join(file))?;
        let name = file.rsplit_once('.').map_or(file, |(n, _)| n).to_string();
        self.artifacts.retain(|a| a.file != Path::new(file));
        self.artifacts.push(Artifact {
            name,
            file: file.into(),
            sha256,
        });
        Ok(())
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    /// Checks every recorded artifact against its checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            let got = sha256_file(&dir.join(&a.file))?;
            if got != a.sha256 {
                return Err(Error::parse(dir.join(&a.file), "checksum does not match the manifest"));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}
