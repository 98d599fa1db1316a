//! Run configuration file. Every field is optional; missing values take the
//! defaults below and command-line flags override the file.
//!
//! ```toml
//! seed = 0
//!
//! [doe]
//! count = 1024
//! start_index = 1
//! bounds = { v_min = 40.0, v_max = 70.0, alpha_min = -15.0, alpha_max = 17.0 }
//!
//! [generate]
//! fidelity = "A"            # "A" or "B"
//! noise_sigma = 0.0         # relative to the dataset pressure range
//! noise_copies = 1
//! geometry = { camber = 0.02, camber_pos = 0.4, thickness = 0.16, n_points = 600 }
//!
//! [train]
//! architecture = "convnet-s"  # "convnet-d", "convnet-s" or "fcnn"
//! n_s = 75
//! task = "alpha"              # "alpha" or "v_inf"
//! batch_size = 32
//! max_epochs = 500
//! patience = 50
//! optimizer = { learning_rate = 1e-3, kind = { type = "adam", beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8 } }
//! lr_schedule = { type = "constant" }  # or { type = "cosine", final_fraction = 0.05 }
//! split = { train = 0.72, val = 0.18, test = 0.10 }
//!
//! [transfer]
//! last_k = 1
//! target_domain = "D_R"
//! batch_size = 32
//! max_epochs = 500
//! patience = 50
//!
//! [evaluate]
//! split = "test"              # "test" or "all"
//! ```

use std::path::Path;

use onflow::aerogen::{Ambient, Fidelity, StallModel};
use onflow::architectures::ArchitectureKind;
use onflow::experiments::GeometrySpec;
use onflow::nn::OptimizerConfig;
use onflow::pipeline::{LrSchedule, SplitSpec, Task, TrainConfig};
use onflow::quasirandom::DomainBounds;
use onflow::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub doe: DoeSection,
    pub generate: GenerateSection,
    pub train: TrainSection,
    pub transfer: TransferSection,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoeSection {
    pub count: usize,
    pub start_index: u64,
    pub bounds: DomainBounds,
}

impl Default for DoeSection {
    fn default() -> Self {
        DoeSection {
            count: 1024,
            start_index: onflow::quasirandom::DEFAULT_START_INDEX,
            bounds: DomainBounds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub fidelity: Fidelity,
    pub noise_sigma: f64,
    pub noise_copies: usize,
    pub geometry: GeometrySpec,
    pub ambient: Ambient,
    pub stall: StallModel,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection {
            fidelity: Fidelity::Inviscid,
            noise_sigma: 0.0,
            noise_copies: 1,
            geometry: GeometrySpec::default(),
            ambient: Ambient::default(),
            stall: StallModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub architecture: ArchitectureKind,
    pub n_s: usize,
    pub task: Task,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub optimizer: OptimizerConfig,
    pub lr_schedule: LrSchedule,
    pub split: SplitSpec,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            architecture: ArchitectureKind::ConvNetS,
            n_s: 75,
            task: Task::Alpha,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            optimizer: t.optimizer,
            lr_schedule: t.lr_schedule,
            split: SplitSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    pub last_k: usize,
    pub target_domain: String,
    /// Defaults to the task stored with the source checkpoint.
    pub task: Option<Task>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub optimizer: OptimizerConfig,
    pub lr_schedule: LrSchedule,
}

impl Default for TransferSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TransferSection {
            last_k: onflow::transfer::DEFAULT_LAST_K,
            target_domain: "D_R".to_string(),
            task: None,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            optimizer: t.optimizer,
            lr_schedule: t.lr_schedule,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    #[default]
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub split: EvalSplit,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = onflow::fsutil::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
            Error::Parse {
                path: Some(path.to_path_buf()),
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: self.train.optimizer,
            lr_schedule: self.train.lr_schedule,
            batch_size: self.train.batch_size,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            seed: self.seed,
            task: self.train.task,
        }
    }

    pub fn transfer_train_config(&self, task: Task) -> TrainConfig {
        TrainConfig {
            optimizer: self.transfer.optimizer,
            lr_schedule: self.transfer.lr_schedule,
            batch_size: self.transfer.batch_size,
            max_epochs: self.transfer.max_epochs,
            patience: self.transfer.patience,
            seed: self.seed,
            task,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run configs serialize")
    }

    /// Writes the resolved configuration as `config.toml` into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        onflow::fsutil::write_atomic_str(&dir.join("config.toml"), &self.to_toml())
    }
}
