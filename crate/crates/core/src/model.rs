use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contextualizer::{ContextConfig, TransformerParams};
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub context: ContextConfig,
}


impl ModelConfig {
    /// Same architecture with widths small enough to pretrain on one CPU
    /// core in minutes.
    pub fn desk() -> Self {
        Self {
            encoder: EncoderConfig {
                width: 64,
                ..Default::default()
            },
            context: ContextConfig {
                bendr_dim: 64,
                model_dim: 96,
                layers: 2,
                heads: 4,
                ff_dim: 192,
                ..Default::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.context.validate()?;
        if self.encoder.width != self.context.bendr_dim {
            return Err(Error::Config(format!(
                "encoder width {} differs from transformer BENDR dim {}",
                self.encoder.width, self.context.bendr_dim
            )));
        }
        Ok(())
    }
}

/// Encoder plus contextualizer.
#[derive(Debug, Clone)]
pub struct BendrModel {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    pub context: TransformerParams,
}

impl BendrModel {
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            encoder: EncoderParams::init(&config.encoder, rng)?,
            context: TransformerParams::init(&config.context, rng)?,
        })
    }

    pub fn parameters(&self) -> Vec<(String, Tensor)> {
        let mut p = self.encoder.parameters();
        p.extend(self.context.parameters());
        p
    }
}

/// A named tensor snapshot: shape and values.
pub type StateDict = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

pub fn state_dict(params: &[(String, Tensor)]) -> StateDict {
    params
        .iter()
        .map(|(n, t)| (n.clone(), (t.shape().to_vec(), t.to_vec())))
        .collect()
}

/// Copies values from `state` into `params` by name. Every parameter must be
/// present with a matching shape; extra entries are ignored.
pub fn load_state(params: &[(String, Tensor)], state: &StateDict) -> Result<()> {
    for (name, t) in params {
        let (shape, data) = state
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
        if shape != t.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: stored shape {shape:?}, model expects {:?}",
                t.shape()
            )));
        }
        t.data_mut().copy_from_slice(data);
    }
    Ok(())
}

/// Total number of scalar parameters.
pub fn count(params: &[(String, Tensor)]) -> usize {
    params.iter().map(|(_, t)| t.numel()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn state_round_trip() {
        let cfg = ModelConfig::desk();
        let a = BendrModel::init(&cfg, &mut seeded(1)).unwrap();
        let b = BendrModel::init(&cfg, &mut seeded(2)).unwrap();
        load_state(&b.parameters(), &state_dict(&a.parameters())).unwrap();
        assert_eq!(state_dict(&a.parameters()), state_dict(&b.parameters()));
    }

    #[test]
    fn names_are_unique() {
        let m = BendrModel::init(&ModelConfig::desk(), &mut seeded(1)).unwrap();
        let p = m.parameters();
        assert_eq!(state_dict(&p).len(), p.len());
    }

    #[test]
    fn mismatched_widths() {
        let mut cfg = ModelConfig::desk();
        cfg.context.bendr_dim = 32;
        assert!(cfg.validate().is_err());
    }
}
