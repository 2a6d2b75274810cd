//! Run configuration: one TOML file drives every pipeline command, with a
//! handful of flag overrides (`--seed`, `--out`, `--threads`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use bridgenet::dataset::{ScenarioModel, SplitSpec};
use bridgenet::error::{Error, Result};
use bridgenet::gnn::TrainConfig;
use bridgenet::graph::NetworkFormat;
use bridgenet::hazard::{FaultStyle, SeismicScenario, SigmaMode};
use bridgenet::mc::McConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsSection {
    /// csv-pair directory or geojson file.
    pub network: PathBuf,
    #[serde(default = "default_format")]
    pub network_format: NetworkFormat,
    pub fragility: PathBuf,
    pub gmpe: PathBuf,
    pub out_dir: PathBuf,
    /// Dataset directory (written by `dataset`, read by `train`/`evaluate`).
    #[serde(default)]
    pub dataset_dir: Option<PathBuf>,
    /// Model checkpoint (written by `train`, read by `predict`/`evaluate`).
    #[serde(default)]
    pub model: Option<PathBuf>,
}

fn default_format() -> NetworkFormat {
    NetworkFormat::CsvPair
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSection {
    pub magnitude: f64,
    pub epicenter: (f64, f64),
    pub style_of_faulting: FaultStyle,
    pub regional_quality: f64,
    pub basin_depth_km: f64,
    pub sigma_mode: SigmaMode,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            magnitude: 7.0,
            epicenter: (-121.9, 37.3),
            style_of_faulting: FaultStyle::StrikeSlip,
            regional_quality: 150.0,
            basin_depth_km: 2.0,
            sigma_mode: SigmaMode::Median,
        }
    }
}

impl ScenarioSection {
    pub fn to_scenario(&self) -> SeismicScenario {
        SeismicScenario {
            magnitude: self.magnitude,
            epicenter: self.epicenter,
            style_of_faulting: self.style_of_faulting,
            regional_quality: self.regional_quality,
            basin_depth_km: self.basin_depth_km,
            sigma_mode: self.sigma_mode,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct McSection {
    pub max_samples: usize,
    pub std_threshold: f64,
    pub check_interval: usize,
    /// Targets for the `mc` command.
    pub targets: Vec<usize>,
    /// Optional `edge_id,p_e` csv replacing the hazard-derived field
    /// (matches the `hazard` command's `edge_probs.csv` output).
    pub edge_probs_csv: Option<PathBuf>,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            max_samples: 10_000,
            std_threshold: 0.01,
            check_interval: 500,
            targets: vec![0],
            edge_probs_csv: None,
        }
    }
}

impl McSection {
    pub fn to_config(&self, seed: u64) -> McConfig {
        McConfig {
            max_samples: self.max_samples,
            std_threshold: self.std_threshold,
            check_interval: self.check_interval,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    /// Scenarios generated per target node.
    pub n_k: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection { n_k: 20 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictSection {
    pub target: usize,
    pub edge_probs_csv: Option<PathBuf>,
}

impl Default for PredictSection {
    fn default() -> Self {
        PredictSection {
            target: 0,
            edge_probs_csv: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferSection {
    pub base_nodes: usize,
    pub base_edges: usize,
    pub base_bridges: usize,
    pub super_nodes: usize,
    pub super_edges: usize,
    pub super_bridges: usize,
}

impl Default for TransferSection {
    fn default() -> Self {
        // Level 2 -> Level 3 region scales
        TransferSection {
            base_nodes: 84,
            base_edges: 133,
            base_bridges: 448,
            super_nodes: 103,
            super_edges: 159,
            super_bridges: 628,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSection {
    pub ratios: Vec<f64>,
    pub noise_frac: f64,
    pub transfer: TransferSection,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            ratios: vec![0.05, 0.2, 0.4, 0.6],
            noise_frac: 0.2,
            transfer: TransferSection::default(),
        }
    }
}

fn default_split() -> SplitSpec {
    SplitSpec {
        test_fraction: 0.20,
        train_target_ratio: 0.60,
        parts: 8,
        seed: 0,
    }
}

fn default_train() -> TrainConfig {
    TrainConfig::default()
}

/// The whole config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    pub paths: PathsSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default = "ScenarioModel::default")]
    pub scenario_model: ScenarioModel,
    #[serde(default = "default_split")]
    pub split: SplitSpec,
    #[serde(default = "default_train")]
    pub train: TrainConfig,
    #[serde(default)]
    pub predict: PredictSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        Ok(cfg)
    }

    /// Resolved dataset directory (defaults under out_dir).
    pub fn dataset_dir(&self) -> PathBuf {
        self.paths
            .dataset_dir
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("dataset"))
    }

    /// Resolved model path (defaults under out_dir).
    pub fn model_path(&self) -> PathBuf {
        self.paths
            .model
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("model.bngn"))
    }

    /// Check that the files a command needs exist, naming the bad field.
    pub fn validate_inputs(&self, needs_network: bool) -> Result<()> {
        let check = |field: &str, path: &Path| -> Result<()> {
            if !path.exists() {
                return Err(Error::Config {
                    field: field.to_string(),
                    message: format!("path does not exist: {}", path.display()),
                });
            }
            Ok(())
        };
        if needs_network {
            check("paths.network", &self.paths.network)?;
        }
        check("paths.fragility", &self.paths.fragility)?;
        check("paths.gmpe", &self.paths.gmpe)?;
        if let Some(csv) = &self.mc.edge_probs_csv {
            check("mc.edge_probs_csv", csv)?;
        }
        Ok(())
    }

    /// Config echo for reports.
    pub fn echo(&self) -> toml::Value {
        toml::Value::try_from(self).unwrap_or(toml::Value::String("unserializable".into()))
    }
}
