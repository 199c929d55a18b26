use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fine-tuning augmentation of the BENDR: time spans replaced by the mask
/// vector, and contiguous feature channels zeroed over the whole sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Regularization {
    pub time_p: f64,
    /// Span length as a fraction of the sequence's token count.
    pub time_frac: f64,
    pub channel_p: f64,
    /// Span length as a fraction of the feature channels; 51 of 512.
    pub channel_frac: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            time_p: 0.01,
            time_frac: 0.1,
            channel_p: 0.005,
            channel_frac: 0.1,
        }
    }
}

impl Regularization {
    pub fn none() -> Self {
        Self {
            time_p: 0.0,
            channel_p: 0.0,
            ..Self::default()
        }
    }

    pub fn time_span(&self, tokens: usize) -> usize {
        ((self.time_frac * tokens as f64).round() as usize).max(1)
    }

    pub fn channel_span(&self, channels: usize) -> usize {
        ((self.channel_frac * channels as f64).round() as usize).max(1)
    }
}

/// Positions covered by spans of `span` starting at each index with
/// probability `p`, clipped at `len`.
fn span_cover<R: Rng + ?Sized>(len: usize, span: usize, p: f64, rng: &mut R) -> Vec<bool> {
    let mut hit = vec![false; len];
    if p <= 0.0 {
        return hit;
    }
    for i in 0..len {
        if rng.random::<f64>() < p {
            hit[i..(i + span).min(len)]
                .iter_mut()
                .for_each(|h| *h = true);
        }
    }
    hit
}

/// Applies [`Regularization`] to a `[C × T]` BENDR.
pub fn regularize_sequence<R: Rng + ?Sized>(
    b: &Tensor,
    mask_vector: &Tensor,
    reg: &Regularization,
    rng: &mut R,
) -> Result<Tensor> {
    let (c, t) = b.dims2()?;
    let times: Vec<usize> = span_cover(t, reg.time_span(t), reg.time_p, rng)
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.then_some(i))
        .collect();
    let dropped = span_cover(c, reg.channel_span(c), reg.channel_p, rng);
    let mut out = if times.is_empty() {
        b.clone()
    } else {
        b.replace_cols(&times, mask_vector)?
    };
    if dropped.iter().any(|d| *d) {
        let keep: Vec<f64> = dropped
            .iter()
            .flat_map(|&d| std::iter::repeat_n(if d { 0.0 } else { 1.0 }, t))
            .collect();
        out = out.mul(&Tensor::new(keep, &[c, t])?)?;
    }
    Ok(out)
}

/// One epoch of indices with every class drawn as often as the rarest one.
/// The rarest classes contribute each example once; larger classes are
/// undersampled with replacement. The order is shuffled.
pub fn balance_sampler<R: Rng + ?Sized>(
    labels: &[usize],
    num_classes: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if num_classes < 2 {
        return Err(Error::InvalidInput(format!(
            "balanced sampling needs at least 2 classes, got {num_classes}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class
            .get_mut(l)
            .ok_or_else(|| Error::InvalidInput(format!("label {l} out of range")))?
            .push(i);
    }
    if let Some(k) = by_class.iter().position(|c| c.is_empty()) {
        return Err(Error::InvalidInput(format!("class {k} has no examples")));
    }
    let min = by_class.iter().map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::with_capacity(min * num_classes);
    for members in &by_class {
        if members.len() == min {
            out.extend_from_slice(members);
        } else {
            out.extend((0..min).map(|_| members[rng.random_range(0..members.len())]));
        }
    }
    out.shuffle(rng);
    Ok(out)
}
