//! Transfer of pretrained components to labelled downstream tasks.

mod folds;
mod metrics;
mod regularize;
mod variant;

pub use folds::{
    finetune_step, fold_splits, predict, prepare, run_folds, train_model, FinetuneConfig,
    FoldSplit, MetricsReport, Prepared, ReportRow,
};
pub use metrics::{
    accuracy, auroc, balanced_accuracy, bootstrap_ci, metric, normalize_metric, MetricKind,
};
pub use regularize::{balance_sampler, regularize_sequence, Regularization};
pub use variant::{
    build_variant, pool_bendr, pool_segments, ClassifierHead, FinetuneModel, Variant, POOL_SEGMENTS,
};
