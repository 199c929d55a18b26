//! Convolutional feature encoder: raw 20-channel sequences to BENDR vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{SequenceSource, StandardizedSequence, STANDARD_CHANNELS};
use crate::tensor::{conv_output_len, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub in_channels: usize,
    /// Filters per block; also the BENDR vector dimension.
    pub width: usize,
    /// Kernel width of each block; strides are equal to the kernels.
    pub kernels: Vec<usize>,
    pub norm_groups: usize,
    pub norm_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            in_channels: STANDARD_CHANNELS,
            width: 512,
            kernels: vec![3, 2, 2, 2, 2, 2],
            norm_groups: 32,
            norm_eps: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() || self.kernels.contains(&0) {
            return Err(Error::Config(
                "encoder kernels must be non-empty and positive".into(),
            ));
        }
        if self.width == 0 || self.norm_groups == 0 || !self.width.is_multiple_of(self.norm_groups) {
            return Err(Error::Config(format!(
                "encoder width {} must be a positive multiple of {} norm groups",
                self.width, self.norm_groups
            )));
        }
        Ok(())
    }

    /// Total downsampling factor, equal to the receptive field.
    pub fn downsampling(&self) -> usize {
        self.kernels.iter().product()
    }

    /// Token count for `len` input samples, `None` when too short.
    pub fn output_len(&self, len: usize) -> Option<usize> {
        self.kernels
            .iter()
            .try_fold(len, |l, &k| conv_output_len(l, k, k))
    }
}

#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub weight: Tensor,
    pub bias: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub blocks: Vec<EncoderBlock>,
}

impl EncoderParams {
    /// Fan-in scaled uniform weights and biases, unit GroupNorm affine.
    pub fn init<R: Rng + ?Sized>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut c_in = config.in_channels;
        let blocks = config
            .kernels
            .iter()
            .map(|&k| {
                let bound = 1.0 / ((c_in * k) as f64).sqrt();
                let block = EncoderBlock {
                    weight: Tensor::uniform(&[config.width, c_in, k], bound, rng),
                    bias: Tensor::uniform(&[config.width], bound, rng),
                    gamma: Tensor::full(&[config.width], 1.0),
                    beta: Tensor::zeros(&[config.width]),
                };
                c_in = config.width;
                block
            })
            .collect();
        let p = Self {
            config: config.clone(),
            blocks,
        };
        p.parameters()
            .iter()
            .for_each(|(_, t)| t.set_requires_grad(true));
        Ok(p)
    }

    pub fn parameters(&self) -> Vec<(String, Tensor)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(i, b)| {
                [
                    (format!("encoder.{i}.weight"), b.weight.clone()),
                    (format!("encoder.{i}.bias"), b.bias.clone()),
                    (format!("encoder.{i}.gamma"), b.gamma.clone()),
                    (format!("encoder.{i}.beta"), b.beta.clone()),
                ]
            })
            .collect()
    }

    /// `[in_channels × L]` → `[width × T]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (c, len) = x.dims2()?;
        if c != self.config.in_channels {
            return Err(Error::shape(
                "encode",
                format!("expected {} channels, got {c}", self.config.in_channels),
            ));
        }
        match self.config.output_len(len) {
            Some(t) if t > 0 => {}
            _ => {
                return Err(Error::TooShort(format!(
                    "{len} samples; the encoder needs at least {}",
                    self.config.downsampling()
                )))
            }
        }
        let mut h = x.clone();
        for (b, &k) in self.blocks.iter().zip(&self.config.kernels) {
            h = h
                .conv1d(&b.weight, Some(&b.bias), k, 1)?
                .group_norm(
                    self.config.norm_groups,
                    &b.gamma,
                    &b.beta,
                    self.config.norm_eps,
                )?
                .gelu()?;
        }
        Ok(h)
    }

    pub fn encode(&self, x: &StandardizedSequence) -> Result<BendrSequence> {
        Ok(BendrSequence {
            vectors: self.forward(&x.to_tensor())?,
            source: Some(x.source.clone()),
        })
    }
}

/// Encoder output: `[dim × T]` feature vectors, one per 96 input samples.
#[derive(Debug, Clone)]
pub struct BendrSequence {
    pub vectors: Tensor,
    pub source: Option<SequenceSource>,
}

impl BendrSequence {
    pub fn new(vectors: Tensor) -> Self {
        Self {
            vectors,
            source: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.vectors.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn encode(params: &EncoderParams, x: &StandardizedSequence) -> Result<BendrSequence> {
    params.encode(x)
}

/// Mean squared activation of the encoder output.
pub fn bendr_activation_penalty(b: &BendrSequence) -> Result<Tensor> {
    b.vectors.mean_square()
}
