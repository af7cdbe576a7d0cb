use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChannelParams, FrequencyGrid};
use crate::circuit::{CorrectionTable, Sensor, SensorCircuitParams};
use crate::discernibility::{ConditionGrid, ErrorMode, NeighborSets};
use crate::error::{Error, Result};
use crate::sensefn::TrainConfig;
use crate::structopt::{DesignSpace, SurrogateConfig};

/// The built-in configuration, also shipped as `config/default.toml`.
pub const DEFAULT_CONFIG: &str = include_str!("../../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    pub start: Vec<f64>,
    pub step: Vec<f64>,
    pub count: Vec<usize>,
    #[serde(default)]
    pub names: Vec<String>,
    #[serde(default)]
    pub units: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    #[serde(default)]
    pub mode: ErrorMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Noisy measurements per condition in training sets.
    pub measurements_per_condition: usize,
    /// Measurements per condition in held-out test sets.
    pub test_measurements_per_condition: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub power_w: Vec<f64>,
    pub distance_m: Vec<f64>,
    /// Retrain every structure case at each sweep point instead of training
    /// once at the nominal channel.
    #[serde(default)]
    pub retrain_per_point: bool,
    /// Largest baseline grid the grid-average case will train on.
    pub grid_average_limit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Optional CSV of multiplicative reflection corrections.
    #[serde(default)]
    pub correction_csv: Option<PathBuf>,
    pub circuit: SensorCircuitParams,
    pub channel: ChannelParams,
    pub frequency: FrequencyGrid,
    pub conditions: ConditionSpec,
    pub design: DesignSpace,
    pub surrogate: SurrogateConfig,
    pub objective: ObjectiveConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn default_config() -> Self {
        Self::from_toml(DEFAULT_CONFIG, Path::new("<default>")).expect("built-in config parses")
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = cfg.correction_csv.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn n_targets(&self) -> usize {
        self.circuit.n_targets()
    }

    pub fn validate(&self) -> Result<()> {
        self.circuit.validate()?;
        self.channel.validate()?;
        self.frequency.validate()?;
        self.design.validate()?;
        self.surrogate.validate(self.design.dim())?;
        self.train.validate()?;
        let n_t = self.n_targets();
        let dims = [
            ("condition grid", self.conditions.start.len()),
            ("design space", self.design.dim()),
            ("channel units_per_sensor", self.channel.units_per_sensor as usize),
        ];
        for (what, got) in dims {
            if got != n_t {
                return Err(Error::Config(format!(
                    "{what} has dimension {got}, the circuit has {n_t} units"
                )));
            }
        }
        if self.dataset.measurements_per_condition == 0 || self.dataset.test_measurements_per_condition == 0 {
            return Err(Error::Config("measurement counts must be at least 1".into()));
        }
        if let Some(p) = &self.correction_csv {
            if !p.exists() {
                return Err(Error::Config(format!("correction table {} not found", p.display())));
            }
        }
        self.condition_grid()?;
        Ok(())
    }

    pub fn condition_grid(&self) -> Result<ConditionGrid> {
        let c = &self.conditions;
        ConditionGrid::regular(&c.start, &c.step, &c.count)
    }

    pub fn sensor(&self) -> Result<Sensor> {
        let sensor = Sensor::new(self.circuit.clone());
        match &self.correction_csv {
            None => Ok(sensor),
            Some(p) => {
                let table = CorrectionTable::from_csv(p)?;
                if table.n_gaps() != self.n_targets() {
                    return Err(Error::Dimension {
                        expected: self.n_targets(),
                        got: table.n_gaps(),
                    });
                }
                Ok(sensor.with_correction(table))
            }
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex(&Sha256::digest(json.as_bytes()))
    }

    /// Name and unit label of condition dimension `n`.
    pub fn condition_label(&self, n: usize) -> (String, String) {
        let name = self
            .conditions
            .names
            .get(n)
            .cloned()
            .unwrap_or_else(|| format!("cond_{}", n + 1));
        let unit = self.conditions.units.get(n).cloned().unwrap_or_default();
        (name, unit)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything derived from a config that the stages share.
pub struct Context {
    pub cfg: RunConfig,
    pub sensor: Sensor,
    pub grid: ConditionGrid,
    pub neighbors: NeighborSets,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let sensor = cfg.sensor()?;
        let grid = cfg.condition_grid()?;
        let neighbors = NeighborSets::build(&grid);
        Ok(Context {
            cfg,
            sensor,
            grid,
            neighbors,
        })
    }

    pub fn mode(&self) -> ErrorMode {
        self.cfg.objective.mode
    }
}
