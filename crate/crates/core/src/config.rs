//! Run configuration files.
//!
//! A run is described by one TOML file. Every section is optional and falls
//! back to the full-size defaults, so a config only needs the values it
//! changes:
//!
//! ```toml
//! seed = 7
//! inputs = ["recordings/"]
//!
//! [model.encoder]
//! width = 64
//!
//! [pretrain]
//! steps = 2000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{preset as dataset_preset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::finetune::{FinetuneConfig, Variant};
use crate::model::ModelConfig;
use crate::preprocess::{PreprocessConfig, TrialWindow};
use crate::pretrain::PretrainConfig;

/// Synthetic sessions used in place of recordings, one per subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub sessions: u32,
    /// Seed of the first session; session `i` uses `seed + i`.
    pub seed: u64,
    pub spec: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// EDF files or directories searched (non-recursively) for `.edf` files.
    pub inputs: Vec<PathBuf>,
    pub synthetic: Option<SyntheticSource>,
    /// Manifest written by `preprocess` and read by the other commands.
    pub manifest: Option<PathBuf>,
    /// Checkpoint to start from (fine-tuning, evaluation, sweeps).
    pub checkpoint: Option<PathBuf>,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub sweep_lengths_s: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            inputs: Vec::new(),
            synthetic: None,
            manifest: None,
            checkpoint: None,
            preprocess: PreprocessConfig::default(),
            model: ModelConfig::default(),
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            sweep_lengths_s: vec![20.0, 30.0, 40.0, 50.0, 60.0],
        }
    }
}

pub const PRESET_NAMES: &[&str] = &[
    "paper",
    "desk",
    "desk-finetune",
    "mmi",
    "bcic",
    "ern",
    "p300",
    "ssc",
];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every block so that a bad value fails before any compute.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        if self.sweep_lengths_s.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Config("sweep lengths must be positive".into()));
        }
        Ok(())
    }

    /// Named starting points: the full-size defaults (`paper`), the desk-scale
    /// synthetic runs, and fine-tuning presets for five downstream datasets.
    pub fn preset(name: &str) -> Result<Self> {
        let name = name.to_ascii_lowercase();
        let cfg = match name.as_str() {
            "paper" => Self::default(),
            "desk" => Self {
                seed: 7,
                synthetic: Some(SyntheticSource {
                    sessions: 8,
                    seed: 100,
                    spec: SyntheticSpec::pretraining(300.0),
                }),
                model: ModelConfig::desk(),
                ..Self::default()
            },
            "desk-finetune" => Self {
                seed: 7,
                synthetic: Some(SyntheticSource {
                    sessions: 10,
                    seed: 500,
                    spec: SyntheticSpec::downstream(20, 4.0),
                }),
                preprocess: PreprocessConfig {
                    dataset: "synthetic-trials".into(),
                    trials: Some(TrialWindow {
                        start_s: 0.0,
                        length_s: 4.0,
                        classes: vec!["alpha".into(), "beta".into()],
                    }),
                    ..Default::default()
                },
                model: ModelConfig::desk(),
                finetune: desk_finetune(),
                ..Self::default()
            },
            other => {
                let d = dataset_preset(other).ok_or_else(|| {
                    Error::Config(format!(
                        "unknown preset `{other}`; known: {}",
                        PRESET_NAMES.join(", ")
                    ))
                })?;
                Self {
                    preprocess: PreprocessConfig {
                        dataset: d.name.clone(),
                        trials: Some(TrialWindow {
                            start_s: d.trial_start_s,
                            length_s: d.trial_length_s,
                            classes: Vec::new(),
                        }),
                        ..Default::default()
                    },
                    finetune: FinetuneConfig::from_descriptor(&d, Variant::Full),
                    ..Self::default()
                }
            }
        };
        Ok(cfg)
    }
}

/// Fine-tuning settings for the synthetic two-class trials.
pub fn desk_finetune() -> FinetuneConfig {
    FinetuneConfig {
        variant: Variant::LinearFrozenEncoder,
        batch_size: 8,
        epochs: 8,
        peak_lr: 1e-3,
        folds: 5,
        ..Default::default()
    }
}
