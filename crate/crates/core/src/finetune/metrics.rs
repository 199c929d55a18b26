use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Balanced accuracy: mean per-class recall.
    Bac,
    /// Area under the ROC curve (binary only).
    Auroc,
    Accuracy,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Bac => "bac",
            MetricKind::Auroc => "auroc",
            MetricKind::Accuracy => "accuracy",
        }
    }

    pub fn chance(self, num_classes: usize) -> f64 {
        match self {
            MetricKind::Auroc => 0.5,
            _ => 1.0 / num_classes.max(1) as f64,
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::InvalidInput(format!(
            "{a} predictions for {b} labels"
        )));
    }
    Ok(())
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(preds.len(), labels.len())?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean recall over the classes that occur in `labels`.
pub fn balanced_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(preds.len(), labels.len())?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut hits = vec![0usize; k];
    let mut counts = vec![0usize; k];
    for (&p, &l) in preds.iter().zip(labels) {
        counts[l] += 1;
        hits[l] += usize::from(p == l);
    }
    let recalls: Vec<f64> = counts
        .iter()
        .zip(&hits)
        .filter(|(c, _)| **c > 0)
        .map(|(&c, &h)| h as f64 / c as f64)
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Rank-statistic AUROC with mid-ranks for ties, so tied pairs earn half
/// credit.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), positive.len())?;
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput(
            "AUROC is undefined with a single class".into(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("AUROC scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps every quantity an exact integer.
    let mut twice_rank_sum_pos: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the mid-rank of i..=j is (i + j + 2) / 2.
        let twice_mid = (i + j + 2) as u64;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| positive[k]).count() as u64;
        twice_rank_sum_pos += twice_mid * pos_in_tie;
        i = j + 1;
    }
    let np = n_pos as u64;
    let twice_u = twice_rank_sum_pos - np * (np + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Metric from per-example class probabilities. AUROC scores the positive
/// class (index 1).
pub fn metric(probs: &[Vec<f64>], labels: &[usize], kind: MetricKind) -> Result<f64> {
    check_lengths(probs.len(), labels.len())?;
    match kind {
        MetricKind::Auroc => {
            if probs.iter().any(|p| p.len() != 2) {
                return Err(Error::InvalidInput(
                    "AUROC needs binary probabilities".into(),
                ));
            }
            let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
            let pos: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
            auroc(&scores, &pos)
        }
        MetricKind::Bac | MetricKind::Accuracy => {
            let preds: Vec<usize> = probs
                .iter()
                .map(|p| {
                    p.iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map_or(0, |(i, _)| i)
                })
                .collect();
            if kind == MetricKind::Bac {
                balanced_accuracy(&preds, labels)
            } else {
                accuracy(&preds, labels)
            }
        }
    }
}

/// Rescales so chance is 0 and perfect is 1; below-chance values clip to 0.
pub fn normalize_metric(value: f64, kind: MetricKind, num_classes: usize) -> f64 {
    let chance = kind.chance(num_classes);
    ((value - chance) / (1.0 - chance)).max(0.0)
}

/// Percentile bootstrap interval of the mean.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    values: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if values.is_empty() || resamples == 0 {
        return Err(Error::InvalidInput(
            "bootstrap needs values and resamples".into(),
        ));
    }
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let idx = |q: f64| ((q * (resamples - 1) as f64).round() as usize).min(resamples - 1);
    Ok((means[idx(tail)], means[idx(1.0 - tail)]))
}
