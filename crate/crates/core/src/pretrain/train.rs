use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::model::{state_dict, BendrModel};
use crate::optim::{adam_step, lr_schedule, AdamConfig, AdamState};
use crate::preprocess::StandardizedSequence;
use crate::rng::{derive, SeededRng};
use crate::tensor::Tensor;

use super::loss::contrastive_loss;
use super::mask::sample_mask_spans;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub p_mask: f64,
    pub span: usize,
    pub temperature: f64,
    pub distractors: usize,
    pub penalty_weight: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    /// Write a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: usize,
    /// Seed for the distractor draws of the evaluation protocol.
    pub eval_seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            p_mask: 0.065,
            span: 10,
            temperature: 0.1,
            distractors: 20,
            penalty_weight: 1.0,
            batch_size: 4,
            steps: 2000,
            peak_lr: 5e-4,
            warmup_frac: 0.05,
            weight_decay: 0.01,
            checkpoint_every: 0,
            eval_seed: 0x5eed,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.p_mask > 0.0 && self.p_mask < 1.0) {
            return fail("p_mask must lie in (0, 1)");
        }
        if !(self.temperature > 0.0) {
            return fail("temperature must be positive");
        }
        if self.span == 0 || self.distractors == 0 || self.batch_size == 0 {
            return fail("span, distractors and batch_size must be positive");
        }
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return fail("warmup_frac must lie in (0, 1)");
        }
        if !(self.peak_lr >= 0.0) {
            return fail("peak_lr must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub contrastive: f64,
    pub penalty: f64,
    /// Masked-position accuracy on the training batch.
    pub accuracy: f64,
}

impl StepRecord {
    pub fn log_line(&self) -> String {
        format!(
            "step={} lr={:.6e} loss={:.6} contrastive={:.6} penalty={:.6} accuracy={:.4}",
            self.step, self.lr, self.loss, self.contrastive, self.penalty, self.accuracy
        )
    }
}

/// Where a run writes its artifacts, and the config text echoed into
/// checkpoints.
#[derive(Debug, Clone, Default)]
pub struct RunOutputs {
    pub log: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub config_echo: String,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub history: Vec<StepRecord>,
    pub adam: AdamState,
}

/// Forward and backward for one batch; gradients are left on the
/// parameters.
pub fn pretrain_step(
    model: &BendrModel,
    batch: &[&StandardizedSequence],
    cfg: &PretrainConfig,
    rng: &mut SeededRng,
) -> Result<StepRecord> {
    let mut totals = Vec::with_capacity(batch.len());
    let (mut contrastive, mut penalty) = (0.0, 0.0);
    let (mut correct, mut masked) = (0, 0);
    for seq in batch {
        let b = model.encoder.encode(seq)?;
        let plan = loop {
            let p = sample_mask_spans(b.len(), cfg.p_mask, cfg.span, rng)?;
            if !p.is_empty() {
                break p;
            }
        };
        let plan = plan.with_distractors(cfg.distractors, rng)?;
        let ctx = model.context.contextualize(&b, &plan.masked, Some(rng))?;
        let parts = contrastive_loss(&ctx, &b, &plan, cfg.temperature, cfg.penalty_weight)?;
        contrastive += parts.contrastive.item();
        penalty += parts.penalty.item();
        correct += parts.correct;
        masked += parts.masked;
        totals.push(parts.total.reshape(&[1, 1])?);
    }
    let n = batch.len() as f64;
    let loss = Tensor::concat_rows(&totals)?.mean()?;
    loss.backward()?;
    Ok(StepRecord {
        step: 0,
        lr: 0.0,
        loss: loss.item(),
        contrastive: contrastive / n,
        penalty: penalty / n,
        accuracy: correct as f64 / masked.max(1) as f64,
    })
}

fn save(model: &BendrModel, adam: &AdamState, step: usize, out: &RunOutputs) -> Result<()> {
    if let Some(path) = &out.checkpoint {
        Checkpoint {
            step: step as u64,
            config: out.config_echo.clone(),
            params: state_dict(&model.parameters()),
            adam: Some(adam.clone()),
        }
        .save(path)?;
    }
    Ok(())
}

/// Masked contrastive pretraining over `data`, sampling batches uniformly.
/// A numerical failure writes the last good parameters to the checkpoint
/// path and returns [`Error::Diverged`].
pub fn pretrain_loop(
    model: &BendrModel,
    data: &[StandardizedSequence],
    cfg: &PretrainConfig,
    seed: u64,
    out: &RunOutputs,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("no pretraining sequences".into()));
    }
    let params = model.parameters();
    let mut adam = AdamState::new(AdamConfig {
        weight_decay: cfg.weight_decay,
        ..Default::default()
    });
    let mut rng = derive(seed, 1);
    let mut log = match &out.log {
        Some(p) => Some(OpenOptions::new().create(true).append(true).open(p)?),
        None => None,
    };
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let lr = lr_schedule(step, cfg.steps, cfg.warmup_frac, cfg.peak_lr);
        params.iter().for_each(|(_, p)| p.zero_grad());
        let batch: Vec<&StandardizedSequence> = (0..cfg.batch_size)
            .map(|_| &data[rng.random_range(0..data.len())])
            .collect();
        let outcome = pretrain_step(model, &batch, cfg, &mut rng)
            .and_then(|rec| adam_step(&params, &mut adam, lr).map(|_| rec));
        let mut rec = match outcome {
            Ok(rec) if rec.loss.is_finite() => rec,
            Ok(rec) => return diverged(model, &adam, step, rec.loss, out),
            Err(e) if e.is_numerical() => return diverged(model, &adam, step, f64::NAN, out),
            Err(e) => return Err(e),
        };
        rec.step = step;
        rec.lr = lr;
        if let Some(f) = log.as_mut() {
            writeln!(f, "{}", rec.log_line())?;
        }
        history.push(rec);
        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
            save(model, &adam, step + 1, out)?;
        }
    }
    params.iter().for_each(|(_, p)| p.zero_grad());
    save(model, &adam, cfg.steps, out)?;
    Ok(PretrainOutcome { history, adam })
}

fn diverged(
    model: &BendrModel,
    adam: &AdamState,
    step: usize,
    loss: f64,
    out: &RunOutputs,
) -> Result<PretrainOutcome> {
    save(model, adam, step, out)?;
    Err(Error::Diverged { step, loss })
}
