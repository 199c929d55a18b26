//! Masked contrastive pretraining and the contrastive evaluation protocol.

mod eval;
mod loss;
mod mask;
mod train;

pub use eval::{evaluate_contrastive, length_sweep, sweep_table, SweepRow};
pub use loss::{candidate_accuracy, contrastive_logits, contrastive_loss, LossParts};
pub use mask::{evaluation_starts, sample_distractors, sample_mask_spans, MaskPlan};
pub use train::{
    pretrain_loop, pretrain_step, PretrainConfig, PretrainOutcome, RunOutputs, StepRecord,
};
