use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contextualizer::TransformerParams;
use crate::encoder::{BendrSequence, EncoderParams};
use crate::error::{Error, Result};
use crate::model::{load_state, state_dict, BendrModel, ModelConfig};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::regularize::{regularize_sequence, Regularization};

/// Number of segments the linear head pools the BENDR into.
pub const POOL_SEGMENTS: usize = 4;

/// The six transfer configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Variant {
    /// Pretrained encoder and transformer, all trainable.
    Full = 1,
    /// Pretrained encoder with a pooled linear head.
    Linear = 2,
    /// As `Full`, randomly initialized.
    FullRandom = 3,
    /// As `Full` with the encoder frozen.
    FullFrozenEncoder = 4,
    /// As `Linear`, randomly initialized.
    LinearRandom = 5,
    /// As `Linear` with the encoder frozen; only the head trains.
    LinearFrozenEncoder = 6,
}

impl TryFrom<u8> for Variant {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Ok(match v {
            1 => Variant::Full,
            2 => Variant::Linear,
            3 => Variant::FullRandom,
            4 => Variant::FullFrozenEncoder,
            5 => Variant::LinearRandom,
            6 => Variant::LinearFrozenEncoder,
            _ => return Err(Error::Config(format!("variant {v} is not in 1..=6"))),
        })
    }
}

impl From<Variant> for u8 {
    fn from(v: Variant) -> u8 {
        v as u8
    }
}

impl Variant {
    pub fn uses_transformer(self) -> bool {
        matches!(
            self,
            Variant::Full | Variant::FullRandom | Variant::FullFrozenEncoder
        )
    }

    pub fn needs_pretrained(self) -> bool {
        !matches!(self, Variant::FullRandom | Variant::LinearRandom)
    }

    pub fn encoder_frozen(self) -> bool {
        matches!(
            self,
            Variant::FullFrozenEncoder | Variant::LinearFrozenEncoder
        )
    }
}

/// Affine classifier; softmax is folded into the loss.
#[derive(Debug, Clone)]
pub struct ClassifierHead {
    /// `[targets × in]`.
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ClassifierHead {
    pub fn init<R: Rng + ?Sized>(inputs: usize, targets: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let h = Self {
            weight: Tensor::uniform(&[targets, inputs], bound, rng),
            bias: Tensor::zeros(&[targets]),
        };
        h.weight.set_requires_grad(true);
        h.bias.set_requires_grad(true);
        h
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn targets(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Segment lengths for splitting `t` steps into four, remainder to the
/// earliest segments.
pub fn pool_segments(t: usize) -> Vec<usize> {
    let (base, rem) = (t / POOL_SEGMENTS, t % POOL_SEGMENTS);
    (0..POOL_SEGMENTS)
        .map(|i| base + usize::from(i < rem))
        .collect()
}

/// Averages `[C × T]` within four contiguous segments and concatenates the
/// means, giving `[1 × 4C]`.
pub fn pool_bendr(b: &BendrSequence) -> Result<Tensor> {
    let (c, t) = b.vectors.dims2()?;
    if t < POOL_SEGMENTS {
        return Err(Error::TooShort(format!(
            "{t} BENDR steps; pooling needs at least {POOL_SEGMENTS}"
        )));
    }
    let mut start = 0;
    let parts = pool_segments(t)
        .into_iter()
        .map(|len| {
            let seg = b.vectors.slice_cols(start, len)?;
            start += len;
            seg.transpose()?.mean_rows()?.reshape(&[1, c])
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::concat_cols(&parts)
}

#[derive(Debug, Clone)]
pub struct FinetuneModel {
    pub variant: Variant,
    pub encoder: EncoderParams,
    /// Present for transformer variants only.
    pub context: Option<TransformerParams>,
    /// Frozen learned mask vector, used by time masking.
    pub mask_vector: Tensor,
    pub head: ClassifierHead,
}

/// Fresh copy of `model`'s parameters, sharing no storage with it.
fn clone_model(model: &BendrModel) -> Result<BendrModel> {
    let copy = BendrModel::init(&model.config, &mut crate::rng::seeded(0))?;
    load_state(&copy.parameters(), &state_dict(&model.parameters()))?;
    Ok(copy)
}

/// Assembles a variant from an optional pretrained model. Pretrained
/// weights are copied, so the source is never modified by fine-tuning.
pub fn build_variant<R: Rng + ?Sized>(
    pretrained: Option<&BendrModel>,
    variant: Variant,
    config: &ModelConfig,
    targets: usize,
    rng: &mut R,
) -> Result<FinetuneModel> {
    if targets < 2 {
        return Err(Error::Config(format!("{targets} targets; need at least 2")));
    }
    let base = match (variant.needs_pretrained(), pretrained) {
        (true, Some(m)) => clone_model(m)?,
        (true, None) => {
            return Err(Error::Config(format!(
                "variant {} needs a pretrained checkpoint",
                variant as u8
            )))
        }
        // Random variants take the architecture of the checkpoint if given.
        (false, m) => BendrModel::init(m.map_or(config, |m| &m.config), rng)?,
    };
    let frozen = variant.encoder_frozen();
    base.encoder
        .parameters()
        .iter()
        .for_each(|(_, p)| p.set_requires_grad(!frozen));
    let mask_vector = base.context.mask_vector.clone();
    mask_vector.set_requires_grad(false);
    let (context, head_in) = if variant.uses_transformer() {
        // The output projection only serves the contrastive task.
        base.context.output_weight.set_requires_grad(false);
        base.context.output_bias.set_requires_grad(false);
        let d = base.context.config.model_dim;
        (Some(base.context), d)
    } else {
        (None, POOL_SEGMENTS * base.encoder.config.width)
    };
    Ok(FinetuneModel {
        variant,
        encoder: base.encoder,
        context,
        mask_vector,
        head: ClassifierHead::init(head_in, targets, rng),
    })
}

impl FinetuneModel {
    pub fn parameters(&self) -> Vec<(String, Tensor)> {
        let mut p = self.encoder.parameters();
        if let Some(ctx) = &self.context {
            p.extend(ctx.parameters());
        }
        p.push(("head.weight".into(), self.head.weight.clone()));
        p.push(("head.bias".into(), self.head.bias.clone()));
        p
    }

    pub fn trainable_parameters(&self) -> Vec<(String, Tensor)> {
        self.parameters()
            .into_iter()
            .filter(|(_, t)| t.requires_grad())
            .collect()
    }

    /// `[1 × targets]` logits from encoder output. Passing an RNG applies
    /// fine-tuning regularization; dropout and LayerDrop stay off.
    pub fn classify(
        &self,
        b: &BendrSequence,
        train: Option<(&Regularization, &mut SeededRng)>,
    ) -> Result<Tensor> {
        let b = match train {
            Some((reg, rng)) => BendrSequence {
                vectors: regularize_sequence(&b.vectors, &self.mask_vector, reg, rng)?,
                source: b.source.clone(),
            },
            None => b.clone(),
        };
        let features = match &self.context {
            Some(ctx) => ctx.contextualize(&b, &[], None)?.hidden.slice_rows(0, 1)?,
            None => pool_bendr(&b)?,
        };
        features.linear(&self.head.weight, Some(&self.head.bias))
    }
}
