use crate::contextualizer::ContextSequence;
use crate::encoder::{bendr_activation_penalty, BendrSequence};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::mask::MaskPlan;

/// Temperature-scaled cosine similarities `[M × (D+1)]` between each masked
/// output `c_t` and its candidates: the `D` distractors first, the true
/// `b_t` last.
pub fn contrastive_logits(
    ctx: &ContextSequence,
    b: &BendrSequence,
    plan: &MaskPlan,
    temperature: f64,
) -> Result<Tensor> {
    if plan.is_empty() {
        return Err(Error::InvalidInput(
            "mask plan has no masked positions".into(),
        ));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidInput(format!(
            "temperature {temperature} must be positive"
        )));
    }
    if plan.distractors.len() != plan.masked.len() {
        return Err(Error::InvalidInput(
            "mask plan has no distractors drawn".into(),
        ));
    }
    let m = plan.masked.len();
    let n = plan.distractors[0].len();
    if plan.distractors.iter().any(|d| d.len() != n) {
        return Err(Error::InvalidInput(
            "distractor lists differ in length".into(),
        ));
    }
    let rows: Vec<usize> = plan.masked.iter().map(|t| t + 1).collect();
    let c = ctx.outputs.index_rows(&rows)?;
    let bt = b.vectors.transpose()?;
    let mut cols = Vec::with_capacity(n + 1);
    for j in 0..n {
        let idx: Vec<usize> = plan.distractors.iter().map(|d| d[j]).collect();
        cols.push(
            c.cosine_similarity_rows(&bt.index_rows(&idx)?)?
                .reshape(&[m, 1])?,
        );
    }
    cols.push(
        c.cosine_similarity_rows(&bt.index_rows(&plan.masked)?)?
            .reshape(&[m, 1])?,
    );
    Tensor::concat_cols(&cols)?.scale(1.0 / temperature)
}

/// Fraction of rows whose last column strictly exceeds every other column.
pub fn candidate_accuracy(logits: &Tensor) -> Result<(usize, usize)> {
    let (m, k) = logits.dims2()?;
    let data = logits.data();
    let correct = data
        .chunks(k)
        .filter(|row| row[..k - 1].iter().all(|&v| v < row[k - 1]))
        .count();
    Ok((correct, m))
}

#[derive(Debug, Clone)]
pub struct LossParts {
    /// Contrastive term plus weighted activation penalty.
    pub total: Tensor,
    pub contrastive: Tensor,
    pub penalty: Tensor,
    pub correct: usize,
    pub masked: usize,
}

/// Mean cross-entropy of the true candidate over masked positions plus
/// `penalty_weight` times the mean squared BENDR activation.
pub fn contrastive_loss(
    ctx: &ContextSequence,
    b: &BendrSequence,
    plan: &MaskPlan,
    temperature: f64,
    penalty_weight: f64,
) -> Result<LossParts> {
    let logits = contrastive_logits(ctx, b, plan, temperature)?;
    let (m, k) = logits.dims2()?;
    let contrastive = logits.cross_entropy(&vec![k - 1; m])?;
    let penalty = bendr_activation_penalty(b)?;
    let total = contrastive.add(&penalty.scale(penalty_weight)?)?;
    let (correct, masked) = candidate_accuracy(&logits)?;
    Ok(LossParts {
        total,
        contrastive,
        penalty,
        correct,
        masked,
    })
}
