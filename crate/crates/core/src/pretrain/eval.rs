use crate::error::{Error, Result};
use crate::model::BendrModel;
use crate::preprocess::{StandardizedSequence, TARGET_RATE};
use crate::rng::derive;
use crate::tensor::no_grad;

use super::loss::{candidate_accuracy, contrastive_logits};
use super::mask::{evaluation_starts, MaskPlan};
use super::train::PretrainConfig;

/// Contrastive accuracy of each sequence under the evenly spaced evaluation
/// mask. Distractors come from a fixed per-sequence stream, so the result is
/// deterministic.
pub fn evaluate_contrastive(
    model: &BendrModel,
    seqs: &[StandardizedSequence],
    cfg: &PretrainConfig,
) -> Result<Vec<f64>> {
    let _guard = no_grad();
    seqs.iter()
        .enumerate()
        .map(|(i, seq)| {
            let b = model.encoder.encode(seq)?;
            let starts = evaluation_starts(b.len(), cfg.p_mask, cfg.span)?;
            let plan = MaskPlan::from_starts(b.len(), cfg.span, starts)?
                .with_distractors(cfg.distractors, &mut derive(cfg.eval_seed, i as u64))?;
            let ctx = model.context.contextualize(&b, &plan.masked, None)?;
            let logits = contrastive_logits(&ctx, &b, &plan, cfg.temperature)?;
            let (correct, total) = candidate_accuracy(&logits)?;
            Ok(correct as f64 / total as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub length_s: f64,
    pub tokens: usize,
    pub sequences: usize,
    pub mean_accuracy: f64,
}

/// Mean evaluation accuracy with every sequence truncated to each length.
pub fn length_sweep(
    model: &BendrModel,
    seqs: &[StandardizedSequence],
    lengths_s: &[f64],
    cfg: &PretrainConfig,
) -> Result<Vec<SweepRow>> {
    if seqs.is_empty() {
        return Err(Error::InvalidInput("no sequences to sweep".into()));
    }
    lengths_s
        .iter()
        .map(|&len_s| {
            let samples = (len_s * TARGET_RATE).round() as usize;
            if let Some(short) = seqs.iter().find(|s| s.len() < samples) {
                return Err(Error::TooShort(format!(
                    "sequence of {} samples cannot be cut to {len_s} s",
                    short.len()
                )));
            }
            let cut: Vec<_> = seqs.iter().map(|s| s.truncated(samples)).collect();
            let acc = evaluate_contrastive(model, &cut, cfg)?;
            Ok(SweepRow {
                length_s: len_s,
                tokens: model.config.encoder.output_len(samples).unwrap_or(0),
                sequences: acc.len(),
                mean_accuracy: acc.iter().sum::<f64>() / acc.len() as f64,
            })
        })
        .collect()
}

/// Comma-separated table with a header row.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("length_s,tokens,sequences,mean_accuracy\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.6}\n",
            r.length_s, r.tokens, r.sequences, r.mean_accuracy
        ));
    }
    s
}
