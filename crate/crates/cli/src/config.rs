//! Experiment configuration.
//!
//! A run is described by a TOML document. The chosen preset supplies every
//! key; the user's file is deep-merged on top of it (tables merge key by key,
//! any other value replaces the preset's), and the result is deserialized
//! with unknown keys rejected and validated as a whole before any work
//! starts.

use std::path::{Path, PathBuf};

use clusterfed::data::{DatasetSchema, Scaling, SyntheticSpec};
use clusterfed::federation::{Cluster, ClusterTopology, LocalTrainingConfig};
use clusterfed::latency::{AggTimeMode, CommMode, ServerProfile};
use clusterfed::nn::{GumbelMode, HybridLossConfig, ModelSpec, OptimizerConfig, OptimizerKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

const DESK: &str = include_str!("presets/desk.toml");
const PAPER: &str = include_str!("presets/paper.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Small synthetic run with 5 local epochs.
    #[default]
    Desk,
    /// The reference training budget (50 local epochs).
    Paper,
}

impl Preset {
    /// The preset as a TOML table (paper is layered over desk).
    pub fn table(self) -> toml::Table {
        let mut base: toml::Table = DESK.parse().expect("desk preset is valid TOML");
        if self == Preset::Paper {
            let overlay: toml::Table = PAPER.parse().expect("paper preset is valid TOML");
            merge(&mut base, overlay);
        }
        base
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }
}

/// Recursively merges `overlay` into `base`.
pub fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub topology: TopologyConfig,
    pub latency: LatencyConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingChoice {
    #[serde(rename = "minmax")]
    MinMax,
    #[serde(rename = "zscore")]
    ZScore,
    #[serde(rename = "none")]
    None,
}

impl ScalingChoice {
    pub fn scaling(self) -> Option<Scaling> {
        match self {
            ScalingChoice::MinMax => Some(Scaling::MinMax),
            ScalingChoice::ZScore => Some(Scaling::ZScore),
            ScalingChoice::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: Source,
    pub scaling: ScalingChoice,
    /// Share of each class that goes to training.
    pub split_fraction: f64,
    pub synthetic: SyntheticSpec,
    pub csv: Option<CsvSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    /// Relative paths are resolved against the config file's directory.
    pub path: PathBuf,
    pub schema: DatasetSchema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Lightweight,
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    /// Weight of the SoftMax term in the hybrid loss.
    pub alpha: f64,
    pub temperature: f64,
    /// Dirichlet concentration of the client partition.
    pub gamma: f64,
    pub optimizer: OptimizerKind,
    pub gumbel: GumbelMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// Training rate of the 1.2 GHz board, samples/s.
    pub base_rate: f64,
    pub bandwidth_mbps: f64,
    /// Explicit clusters; the three-board testbed when absent.
    pub clusters: Option<Vec<Cluster>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    pub server_processing_speed: f64,
    pub server_bandwidth_mbps: f64,
    pub agg_mode: AggTimeMode,
    pub comm_mode: CommMode,
    pub test_inputs: usize,
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub preset: Preset,
}

impl ExperimentConfig {
    /// Preset, then the config file, then command-line flags.
    pub fn load(o: &Overrides) -> Result<Self, CliError> {
        let mut table = o.preset.table();
        if let Some(path) = &o.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let user: toml::Table = text
                .parse()
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut table, user);
        }
        let mut cfg = Self::from_table(table)?;
        if let (Some(path), Some(csv)) = (&o.config, &mut cfg.data.csv) {
            if csv.path.is_relative() {
                let dir = path.parent().unwrap_or(Path::new(""));
                csv.path = dir.join(&csv.path);
            }
        }
        if let Some(seed) = o.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &o.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, CliError> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    pub fn preset(preset: Preset) -> Self {
        Self::from_table(preset.table()).expect("presets deserialize")
    }

    /// Checks every field before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let d = &self.data;
        if !(d.split_fraction > 0.0 && d.split_fraction < 1.0) {
            return bad(format!("data.split_fraction must lie in (0, 1), got {}", d.split_fraction));
        }
        match d.source {
            Source::Synthetic => d.synthetic.validate()?,
            Source::Csv => {
                let Some(csv) = &d.csv else {
                    return bad("data.source = \"csv\" needs a [data.csv] table".into());
                };
                csv.schema.validate()?;
                if d.scaling == ScalingChoice::None {
                    return bad("CSV data must be scaled (minmax or zscore)".into());
                }
            }
        }
        let t = &self.training;
        if t.rounds == 0 {
            return bad("training.rounds must be at least 1".into());
        }
        if !(0.0..1.0).contains(&t.dropout) {
            return bad(format!("training.dropout must lie in [0, 1), got {}", t.dropout));
        }
        if !(t.gamma > 0.0 && t.gamma.is_finite()) {
            return bad(format!("training.gamma must be positive, got {}", t.gamma));
        }
        self.local_training().validate()?;
        self.topology()?.validate()?;
        let l = &self.latency;
        for (what, v) in [
            ("latency.server_processing_speed", l.server_processing_speed),
            ("latency.server_bandwidth_mbps", l.server_bandwidth_mbps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{what} must be > 0, got {v}"));
            }
        }
        if l.test_inputs == 0 {
            return bad("latency.test_inputs must be at least 1".into());
        }
        Ok(())
    }

    pub fn topology(&self) -> Result<ClusterTopology, CliError> {
        let t = &self.topology;
        let topology = match &t.clusters {
            Some(clusters) => ClusterTopology {
                clusters: clusters.clone(),
            },
            None => ClusterTopology::pi_testbed(t.base_rate, t.bandwidth_mbps),
        };
        Ok(topology)
    }

    pub fn local_training(&self) -> LocalTrainingConfig {
        let t = &self.training;
        LocalTrainingConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            optimizer: OptimizerConfig {
                kind: t.optimizer,
                learning_rate: t.learning_rate,
                ..OptimizerConfig::default()
            },
            loss: HybridLossConfig {
                alpha: t.alpha,
                temperature: t.temperature,
                gumbel_mode: t.gumbel,
            },
        }
    }

    pub fn model_spec(&self, arch: Architecture, features: usize, classes: usize) -> ModelSpec {
        match arch {
            Architecture::Lightweight => ModelSpec::lightweight(features, classes, self.training.dropout),
            Architecture::Standard => ModelSpec::standard(features, classes, self.training.dropout),
        }
    }

    pub fn server(&self) -> ServerProfile {
        ServerProfile {
            processing_speed: self.latency.server_processing_speed,
            bandwidth_mbps: self.latency.server_bandwidth_mbps,
        }
    }

    /// The config as JSON without the output directory, so the echo does not
    /// depend on where a run was written.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(map) = &mut v {
            map.remove("out");
        }
        v
    }
}
