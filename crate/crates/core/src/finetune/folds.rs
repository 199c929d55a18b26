use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::DatasetDescriptor;
use crate::encoder::BendrSequence;
use crate::error::{Error, Result};
use crate::model::{BendrModel, ModelConfig};
use crate::optim::{adam_step, lr_schedule, AdamConfig, AdamState};
use crate::preprocess::StandardizedSequence;
use crate::rng::{derive, SeededRng};
use crate::tensor::{no_grad, Tensor};

use super::metrics::{bootstrap_ci, metric, normalize_metric, MetricKind};
use super::regularize::{balance_sampler, Regularization};
use super::variant::{build_variant, FinetuneModel, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub variant: Variant,
    pub targets: usize,
    pub metric: MetricKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    pub folds: usize,
    /// The highest-numbered subjects, kept out of every fold's training set
    /// and tested by every fold.
    pub held_out_subjects: usize,
    pub regularization: Regularization,
    pub bootstrap: usize,
    pub confidence: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            variant: Variant::LinearFrozenEncoder,
            targets: 2,
            metric: MetricKind::Bac,
            batch_size: 8,
            epochs: 10,
            peak_lr: 1e-4,
            warmup_frac: 0.1,
            weight_decay: 0.01,
            folds: 5,
            held_out_subjects: 0,
            regularization: Regularization::default(),
            bootstrap: 1000,
            confidence: 0.95,
        }
    }
}

impl FinetuneConfig {
    pub fn from_descriptor(d: &DatasetDescriptor, variant: Variant) -> Self {
        Self {
            variant,
            targets: d.targets,
            metric: d.metric,
            batch_size: d.batch_size,
            epochs: d.epochs,
            peak_lr: d.learning_rate,
            folds: d.folds,
            held_out_subjects: d.held_out_subjects,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets < 2 || self.batch_size == 0 || self.epochs == 0 || self.folds == 0 {
            return Err(Error::Config(
                "fine-tuning needs ≥2 targets and positive batch size, epochs and folds".into(),
            ));
        }
        if self.metric == MetricKind::Auroc && self.targets != 2 {
            return Err(Error::Config("AUROC needs exactly 2 targets".into()));
        }
        if !(self.peak_lr > 0.0) || !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::Config("invalid learning-rate schedule".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) || self.bootstrap == 0 {
            return Err(Error::Config("invalid bootstrap settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<u32>,
    pub test: Vec<u32>,
}

/// Subject-grouped folds: leave-one-subject-out when `folds` equals the
/// subject count, otherwise contiguous near-equal groups of the sorted
/// subjects with the remainder going to the earliest groups.
pub fn fold_splits(subjects: &[u32], folds: usize) -> Result<Vec<FoldSplit>> {
    let subjects: Vec<u32> = subjects
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if folds == 0 || subjects.len() < folds {
        return Err(Error::InvalidInput(format!(
            "{} subjects cannot form {folds} folds",
            subjects.len()
        )));
    }
    let (base, rem) = (subjects.len() / folds, subjects.len() % folds);
    let mut start = 0;
    let mut out = Vec::with_capacity(folds);
    for fold in 0..folds {
        let len = base + usize::from(fold < rem);
        let test = subjects[start..start + len].to_vec();
        let train: Vec<u32> = subjects
            .iter()
            .copied()
            .filter(|s| !test.contains(s))
            .collect();
        assert!(train.iter().all(|s| !test.contains(s)));
        out.push(FoldSplit { fold, train, test });
        start += len;
    }
    Ok(out)
}

/// A trial with its encoder output precomputed when the encoder is frozen.
pub struct Prepared<'a> {
    pub seq: &'a StandardizedSequence,
    pub label: usize,
    cached: Option<BendrSequence>,
}

impl Prepared<'_> {
    pub fn bendr(&self, model: &FinetuneModel) -> Result<BendrSequence> {
        match &self.cached {
            Some(b) => Ok(b.clone()),
            None => model.encoder.encode(self.seq),
        }
    }
}

fn label_of(seq: &StandardizedSequence, targets: usize) -> Result<usize> {
    match seq.source.label {
        Some(l) if (l as usize) < targets => Ok(l as usize),
        Some(l) => Err(Error::InvalidInput(format!(
            "label {l} out of range for {targets} targets"
        ))),
        None => Err(Error::InvalidInput(format!(
            "unlabelled trial from subject {}",
            seq.source.subject
        ))),
    }
}

pub fn prepare<'a>(
    model: &FinetuneModel,
    seqs: &[&'a StandardizedSequence],
    targets: usize,
) -> Result<Vec<Prepared<'a>>> {
    let frozen = model.variant.encoder_frozen();
    let _guard = frozen.then(no_grad);
    seqs.iter()
        .map(|&seq| {
            Ok(Prepared {
                seq,
                label: label_of(seq, targets)?,
                cached: if frozen {
                    Some(model.encoder.encode(seq)?)
                } else {
                    None
                },
            })
        })
        .collect()
}

/// Forward and backward over one batch; gradients are left on the
/// parameters. Returns the mean cross-entropy.
pub fn finetune_step(
    model: &FinetuneModel,
    batch: &[&Prepared<'_>],
    reg: &Regularization,
    rng: &mut SeededRng,
) -> Result<f64> {
    let logits = batch
        .iter()
        .map(|p| model.classify(&p.bendr(model)?, Some((reg, &mut *rng))))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = batch.iter().map(|p| p.label).collect();
    let loss = Tensor::concat_rows(&logits)?.cross_entropy(&labels)?;
    loss.backward()?;
    Ok(loss.item())
}

/// Class probabilities without regularization or gradient tracking.
pub fn predict(model: &FinetuneModel, items: &[Prepared<'_>]) -> Result<Vec<Vec<f64>>> {
    let _guard = no_grad();
    items
        .iter()
        .map(|p| {
            Ok(model
                .classify(&p.bendr(model)?, None)?
                .softmax_rows()?
                .to_vec())
        })
        .collect()
}

/// Trains for `cfg.epochs` balanced epochs and returns the mean loss of each
/// epoch. `on_step` sees the model after every backward pass, before the
/// update.
pub fn train_model(
    model: &FinetuneModel,
    train: &[Prepared<'_>],
    cfg: &FinetuneConfig,
    rng: &mut SeededRng,
    mut on_step: impl FnMut(&FinetuneModel) -> Result<()>,
) -> Result<Vec<f64>> {
    let labels: Vec<usize> = train.iter().map(|p| p.label).collect();
    let params = model.trainable_parameters();
    let mut adam = AdamState::new(AdamConfig {
        weight_decay: cfg.weight_decay,
        ..Default::default()
    });
    let per_epoch = balance_sampler(&labels, cfg.targets, rng)?.len();
    let total = cfg.epochs * per_epoch.div_ceil(cfg.batch_size);
    let mut step = 0;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let order = balance_sampler(&labels, cfg.targets, rng)?;
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &train[i]).collect();
            model.parameters().iter().for_each(|(_, p)| p.zero_grad());
            let loss = finetune_step(model, &batch, &cfg.regularization, rng)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            on_step(model)?;
            adam_step(
                &params,
                &mut adam,
                lr_schedule(step, total, cfg.warmup_frac, cfg.peak_lr),
            )?;
            sum += loss;
            batches += 1;
            step += 1;
        }
        epoch_losses.push(sum / batches as f64);
    }
    model.parameters().iter().for_each(|(_, p)| p.zero_grad());
    Ok(epoch_losses)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub fold: usize,
    pub subject: u32,
    /// True for the fixed held-out test subjects.
    pub held_out: bool,
    pub metric: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub variant: Variant,
    pub kind: MetricKind,
    pub num_classes: usize,
    pub rows: Vec<ReportRow>,
    /// Mean over subjects, each subject averaged over the folds testing it.
    pub mean: f64,
    pub mean_normalized: f64,
    pub ci: (f64, f64),
    pub ci_normalized: (f64, f64),
}

impl MetricsReport {
    /// CSV with a comment header, one row per fold and test subject, and a
    /// final summary row.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "# variant {}; metric {}; {} classes; final-epoch model of each fold\n",
            self.variant as u8,
            self.kind.name(),
            self.num_classes
        );
        s.push_str("fold,subject,split,metric,normalized,ci_low,ci_high\n");
        for r in &self.rows {
            let split = if r.held_out { "held_out" } else { "test" };
            let _ = writeln!(
                s,
                "{},{},{split},{:.6},{:.6},,",
                r.fold, r.subject, r.metric, r.normalized
            );
        }
        let _ = writeln!(
            s,
            "all,all,summary,{:.6},{:.6},{:.6},{:.6}",
            self.mean, self.mean_normalized, self.ci.0, self.ci.1
        );
        s
    }

    /// Mean metric per subject across folds.
    pub fn subject_means(&self) -> BTreeMap<u32, f64> {
        let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc.entry(r.subject).or_default();
            e.0 += r.metric;
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect()
    }
}

/// Cross-validated fine-tuning of `cfg.variant` over labelled trials.
pub fn run_folds(
    data: &[StandardizedSequence],
    pretrained: Option<&BendrModel>,
    model_config: &ModelConfig,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<MetricsReport> {
    cfg.validate()?;
    let subjects: Vec<u32> = data
        .iter()
        .map(|s| s.source.subject)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if subjects.len() <= cfg.held_out_subjects {
        return Err(Error::InvalidInput(format!(
            "{} subjects leave none for training after holding out {}",
            subjects.len(),
            cfg.held_out_subjects
        )));
    }
    let (pool, held) = subjects.split_at(subjects.len() - cfg.held_out_subjects);
    let splits = fold_splits(pool, cfg.folds)?;
    let of = |ids: &[u32]| -> Vec<&StandardizedSequence> {
        data.iter()
            .filter(|s| ids.contains(&s.source.subject))
            .collect()
    };

    let mut rows = Vec::new();
    for split in &splits {
        let mut rng = derive(seed, 100 + split.fold as u64);
        let model = build_variant(pretrained, cfg.variant, model_config, cfg.targets, &mut rng)?;
        let train = prepare(&model, &of(&split.train), cfg.targets)?;
        train_model(&model, &train, cfg, &mut rng, |_| Ok(()))?;
        for (&subject, held_out) in split
            .test
            .iter()
            .map(|s| (s, false))
            .chain(held.iter().map(|s| (s, true)))
        {
            let items = prepare(&model, &of(&[subject]), cfg.targets)?;
            let probs = predict(&model, &items)?;
            let labels: Vec<usize> = items.iter().map(|p| p.label).collect();
            let m = metric(&probs, &labels, cfg.metric)?;
            rows.push(ReportRow {
                fold: split.fold,
                subject,
                held_out,
                metric: m,
                normalized: normalize_metric(m, cfg.metric, cfg.targets),
            });
        }
    }
    summarize(rows, cfg, seed)
}

fn summarize(rows: Vec<ReportRow>, cfg: &FinetuneConfig, seed: u64) -> Result<MetricsReport> {
    let mut report = MetricsReport {
        variant: cfg.variant,
        kind: cfg.metric,
        num_classes: cfg.targets,
        rows,
        mean: 0.0,
        mean_normalized: 0.0,
        ci: (0.0, 0.0),
        ci_normalized: (0.0, 0.0),
    };
    let means: Vec<f64> = report.subject_means().into_values().collect();
    let mut rng = derive(seed, 7);
    report.mean = means.iter().sum::<f64>() / means.len() as f64;
    report.ci = bootstrap_ci(&means, cfg.bootstrap, cfg.confidence, &mut rng)?;
    let norm = |v: f64| normalize_metric(v, cfg.metric, cfg.targets);
    report.mean_normalized = norm(report.mean);
    report.ci_normalized = (norm(report.ci.0), norm(report.ci.1));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loso_and_grouped() {
        let nine: Vec<u32> = (1..=9).collect();
        let s = fold_splits(&nine, 9).unwrap();
        assert_eq!(s.len(), 9);
        assert!(s.iter().all(|f| f.test.len() == 1 && f.train.len() == 8));

        let ten: Vec<u32> = (0..10).collect();
        let s = fold_splits(&ten, 5).unwrap();
        assert!(s.iter().all(|f| f.test.len() == 2));
        let tested: BTreeSet<u32> = s.iter().flat_map(|f| f.test.clone()).collect();
        assert_eq!(tested.len(), 10);
        for f in &s {
            assert!(f.train.iter().all(|x| !f.test.contains(x)));
        }

        let s = fold_splits(&ten, 4).unwrap();
        let sizes: Vec<usize> = s.iter().map(|f| f.test.len()).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
        assert!(fold_splits(&ten, 11).is_err());
    }

    fn report(metrics: &[(u32, f64)]) -> MetricsReport {
        let rows = metrics
            .iter()
            .enumerate()
            .map(|(i, &(subject, m))| ReportRow {
                fold: i,
                subject,
                held_out: false,
                metric: m,
                normalized: normalize_metric(m, MetricKind::Bac, 2),
            })
            .collect();
        summarize(rows, &FinetuneConfig::default(), 3).unwrap()
    }

    #[test]
    fn summary_and_table() {
        let r = report(&[(1, 0.9), (2, 0.7), (3, 0.8), (3, 0.6)]);
        assert_eq!(r.subject_means()[&3], 0.7);
        assert!((r.mean - 0.7666666666666667).abs() < 1e-12);
        assert!(r.ci.0 <= r.mean && r.mean <= r.ci.1);
        let t = r.to_table();
        assert!(t.starts_with("# variant 6; metric bac"));
        assert!(t.contains("final-epoch"));
        assert!(t.lines().last().unwrap().starts_with("all,all,summary,"));
        assert_eq!(t.lines().count(), 2 + 4 + 1);
    }

    #[test]
    fn bootstrap_seeds_overlap() {
        let vals: Vec<(u32, f64)> = (0..12).map(|i| (i, 0.6 + 0.02 * i as f64)).collect();
        let a = report(&vals);
        let rows = a.rows.clone();
        let b = summarize(rows, &FinetuneConfig::default(), 99).unwrap();
        assert!(a.ci.0 <= b.ci.1 && b.ci.0 <= a.ci.1);
    }

    #[test]
    fn descriptor_preset() {
        let d = crate::data::preset("ERN").unwrap();
        let c = FinetuneConfig::from_descriptor(&d, Variant::Full);
        assert_eq!((c.batch_size, c.epochs, c.held_out_subjects), (32, 15, 10));
        assert_eq!(c.metric, MetricKind::Auroc);
        c.validate().unwrap();
    }
}
