use rand::Rng;

use crate::error::{Error, Result};

/// Masked spans of one sequence and the distractor candidates for every
/// masked position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    /// Sequence length in tokens.
    pub len: usize,
    pub span: usize,
    pub starts: Vec<usize>,
    /// Sorted union of all spans.
    pub masked: Vec<usize>,
    /// One list per entry of `masked`; positions of the same sequence other
    /// than the masked position itself.
    pub distractors: Vec<Vec<usize>>,
}

impl MaskPlan {
    /// Plan with the given span starts and no distractors yet.
    pub fn from_starts(len: usize, span: usize, starts: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = starts.iter().find(|&&s| s >= len) {
            return Err(Error::InvalidInput(format!(
                "span start {bad} outside sequence of {len} tokens"
            )));
        }
        let mut hit = vec![false; len];
        for &s in &starts {
            hit[s..(s + span).min(len)]
                .iter_mut()
                .for_each(|h| *h = true);
        }
        let masked = (0..len).filter(|&i| hit[i]).collect();
        Ok(Self {
            len,
            span,
            starts,
            masked,
            distractors: Vec::new(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    /// Draws `n` distractors per masked position.
    pub fn with_distractors<R: Rng + ?Sized>(mut self, n: usize, rng: &mut R) -> Result<Self> {
        self.distractors = self
            .masked
            .iter()
            .map(|&t| sample_distractors(self.len, t, n, rng))
            .collect::<Result<_>>()?;
        Ok(self)
    }
}

/// Every token starts a span independently with probability `p_mask`;
/// spans are clipped at the sequence end and may overlap.
pub fn sample_mask_spans<R: Rng + ?Sized>(
    len: usize,
    p_mask: f64,
    span: usize,
    rng: &mut R,
) -> Result<MaskPlan> {
    if !(0.0..=1.0).contains(&p_mask) {
        return Err(Error::InvalidInput(format!(
            "p_mask {p_mask} outside [0, 1]"
        )));
    }
    if span == 0 || len <= span {
        return Err(Error::TooShort(format!(
            "{len} tokens cannot hold masked spans of {span}"
        )));
    }
    let starts = (0..len).filter(|_| rng.random::<f64>() < p_mask).collect();
    MaskPlan::from_starts(len, span, starts)
}

/// Uniform draws with replacement from `0..len` excluding `target`.
pub fn sample_distractors<R: Rng + ?Sized>(
    len: usize,
    target: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if len < 2 || target >= len {
        return Err(Error::TooShort(format!(
            "need at least two tokens to draw distractors, got {len}"
        )));
    }
    Ok((0..n)
        .map(|_| {
            let r = rng.random_range(0..len - 1);
            if r >= target {
                r + 1
            } else {
                r
            }
        })
        .collect())
}

/// Evenly spaced evaluation spans: half the expected training count, one
/// every `floor(len / count)` tokens starting at token 0.
pub fn evaluation_starts(len: usize, p_mask: f64, span: usize) -> Result<Vec<usize>> {
    let count = (0.5 * len as f64 * p_mask).floor() as usize;
    if count == 0 || len < span * count {
        return Err(Error::TooShort(format!(
            "{len} tokens are too few for an evaluation mask at p_mask {p_mask}"
        )));
    }
    let step = len / count;
    Ok((0..count).map(|k| k * step).collect())
}
