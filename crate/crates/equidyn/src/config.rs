//! TOML run configuration with sections `[group]`, `[architecture]`, `[flow]`,
//! `[data]`, `[output]` and optional `[tolerances]`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use equidyn_core::experiment::{Architecture, ExperimentConfig, ExperimentKind, Scale};
use equidyn_core::risk::{Augmentation, FlowConfig, FlowMode};
use equidyn_core::{BasisMethod, Tolerances};
use serde::{Deserialize, Serialize};

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "EQUIDYN_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid value for {key}: {message}")]
    Value { key: &'static str, message: String },
}

/// Every key with its meaning, shown by `--help`.
pub const CONFIG_HELP: &str = "\
CONFIGURATION (TOML, every key optional):
  [group]
    kind = \"rotation\"            symmetric | translation | rotation; selects the experiment
                                  (graph connectivity, digit classification, shape segmentation)
    n = 14                        nodes (symmetric) or image side; default from the scale
  [architecture]
    scale = \"desk\"               paper | desk | acceptance | toy
    channels = 8                  channels C of the first hidden space
    batch_norm = true             batch normalization layer of the experiment
    method = \"default\"           default | orbits | partition | convolution | average | nullspace
  [flow]
    learning_rate = 1e-5          step size tau
    epochs = 50
    augmentation = \"sampled\"     sampled | exact
    n_aug = 8                     passes per epoch for sampled augmentation
    batch_size = 32               mini-batch size, 0 for the whole dataset
    record_every = 1              epochs between recorded rows
    perp_penalty = 0.0            coefficient of |A_Eperp|^2 added to every risk
    modes = [\"nominal\", \"augmented\", \"equivariant\"]
    repetitions = 5
    seed = 0                      base seed for data, initializations and draws
  [data]
    source = \"auto\"              auto | generate | synthetic | mnist | file
    samples = 500                 dataset size; default from the scale
    seed = 0                      dataset seed; default derived from flow.seed
    dir = \"data\"                 MNIST directory; default $EQUIDYN_DATA_DIR, then ./data
    path = \"set.json\"            dataset file for source = \"file\"
  [output]
    dir = \"out\"                  output directory
    plot = true                   write plot.svg
    checkpoints = false           write final layers of every run as JSON
  [tolerances]                    thresholds of the checks; defaults shown by `equidyn check --list-tolerances`
    representation, basis, rank_drop, augmented_risk_forms, gradient_identity,
    hessian_identity, quadratic_hessian, augmented_flow_drift, equivariant_flow_drift,
    in_subspace, finite_difference, fd_step, fd_step_kinked, decoupling_order, stationary,
    negative_eigenvalue, eigen_residual, counterexample, orthonormal_basis,
    trajectory_coincidence
";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub group: GroupSection,
    pub architecture: ArchitectureSection,
    pub flow: FlowSection,
    pub data: DataSection,
    pub output: OutputSection,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupSection {
    pub kind: String,
    pub n: Option<usize>,
}

impl Default for GroupSection {
    fn default() -> Self {
        Self {
            kind: "rotation".into(),
            n: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureSection {
    pub scale: String,
    pub channels: Option<usize>,
    pub batch_norm: Option<bool>,
    pub method: String,
}

impl Default for ArchitectureSection {
    fn default() -> Self {
        Self {
            scale: "desk".into(),
            channels: None,
            batch_norm: None,
            method: "default".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub augmentation: String,
    pub n_aug: usize,
    pub batch_size: usize,
    pub record_every: usize,
    pub perp_penalty: f64,
    pub modes: Vec<FlowMode>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for FlowSection {
    fn default() -> Self {
        let f = FlowConfig::default();
        Self {
            learning_rate: f.learning_rate,
            epochs: f.epochs,
            augmentation: "sampled".into(),
            n_aug: 8,
            batch_size: DEFAULT_BATCH_SIZE,
            record_every: f.record_every,
            perp_penalty: f.perp_penalty,
            modes: FlowMode::ALL.to_vec(),
            repetitions: 5,
            seed: 0,
        }
    }
}

/// Mini-batch size of experiment runs unless configured otherwise.
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: String,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub dir: Option<PathBuf>,
    pub path: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: "auto".into(),
            samples: None,
            seed: None,
            dir: None,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub plot: bool,
    pub checkpoints: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            plot: true,
            checkpoints: false,
        }
    }
}

/// Where the training data comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    /// Real digit images when present in the data directory, the offline
    /// stand-in otherwise; generated data for the other experiments.
    Auto,
    Generate,
    Synthetic,
    Mnist,
    File(PathBuf),
}

fn value_error(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key,
        message: message.into(),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { source, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            source,
        })?;
        cfg.experiment()?;
        Ok(cfg)
    }

    pub fn kind(&self) -> Result<ExperimentKind, ConfigError> {
        match self.group.kind.as_str() {
            "symmetric" => Ok(ExperimentKind::GraphConnectivity),
            "translation" => Ok(ExperimentKind::MnistTranslation),
            "rotation" => Ok(ExperimentKind::ShapeSegmentation),
            other => Err(value_error(
                "group.kind",
                format!("{other:?} is not symmetric, translation or rotation"),
            )),
        }
    }

    pub fn scale(&self) -> Result<Scale, ConfigError> {
        Scale::from_str(&self.architecture.scale)
            .map_err(|e| value_error("architecture.scale", e.to_string()))
    }

    pub fn method(&self, kind: ExperimentKind) -> Result<Option<BasisMethod>, ConfigError> {
        match self.architecture.method.as_str() {
            "default" => Ok(Some(kind.default_method())),
            "orbits" => Ok(None),
            m => BasisMethod::from_str(m)
                .map(Some)
                .map_err(|e| value_error("architecture.method", e.to_string())),
        }
    }

    pub fn data_source(&self) -> Result<DataSource, ConfigError> {
        Ok(match self.data.source.as_str() {
            "auto" => DataSource::Auto,
            "generate" => DataSource::Generate,
            "synthetic" => DataSource::Synthetic,
            "mnist" => DataSource::Mnist,
            "file" => {
                DataSource::File(self.data.path.clone().ok_or_else(|| {
                    value_error("data.path", "required when data.source = \"file\"")
                })?)
            }
            other => {
                return Err(value_error(
                    "data.source",
                    format!("unknown source {other:?}"),
                ))
            }
        })
    }

    /// Dataset root: `[data] dir`, then `$EQUIDYN_DATA_DIR`, then `./data`.
    pub fn data_dir(&self) -> PathBuf {
        self.data
            .dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    /// The resolved experiment description.
    pub fn experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        let kind = self.kind()?;
        let mut arch = Architecture::new(kind, self.scale()?);
        if let Some(n) = self.group.n {
            arch.n = n;
        }
        if let Some(c) = self.architecture.channels {
            if c == 0 {
                return Err(value_error("architecture.channels", "must be positive"));
            }
            arch.channels = c;
        }
        if let Some(bn) = self.architecture.batch_norm {
            arch.batch_norm = bn;
        }
        if let Some(s) = self.data.samples {
            arch.samples = s;
        }
        let f = &self.flow;
        let augmentation = match f.augmentation.as_str() {
            "exact" => Augmentation::Exact,
            "sampled" => Augmentation::Sampled { n_aug: f.n_aug },
            other => {
                return Err(value_error(
                    "flow.augmentation",
                    format!("{other:?} is not sampled or exact"),
                ))
            }
        };
        let flow = FlowConfig {
            mode: FlowMode::Nominal,
            learning_rate: f.learning_rate,
            epochs: f.epochs,
            augmentation,
            seed: f.seed,
            record_every: f.record_every,
            batch_size: (f.batch_size > 0).then_some(f.batch_size),
            perp_penalty: f.perp_penalty,
        };
        flow.validate()
            .map_err(|e| value_error("flow", e.to_string()))?;
        if f.modes.is_empty() {
            return Err(value_error("flow.modes", "at least one mode is required"));
        }
        Ok(ExperimentConfig {
            arch,
            method: self.method(kind)?,
            flow,
            modes: f.modes.clone(),
            repetitions: f.repetitions,
            seed: f.seed,
        })
    }

    /// Seed of the generated dataset.
    pub fn data_seed(&self) -> Result<u64, ConfigError> {
        Ok(self.data.seed.unwrap_or(self.experiment()?.data_seed()))
    }

    /// Replaces every seed by `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.flow.seed = seed;
        self.data.seed = None;
    }
}
