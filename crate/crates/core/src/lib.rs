//! Self-supervised pretraining and transfer for raw EEG.
//!
//! The pipeline mirrors a wav2vec-2.0-style setup adapted to multi-channel
//! EEG:
//!
//! ```text
//! EDF / synthetic sessions
//!   │  data::edf, data::synthetic
//!   ├─ preprocess      channel map → resample → low-pass → chunk → scale
//!   ├─ encoder         6 strided conv blocks (GroupNorm, GELU), ×96 downsampling
//!   ├─ contextualizer  conv position encoding, start token, T-Fixup transformer
//!   ├─ pretrain        span masking + contrastive loss over 20 distractors
//!   └─ finetune        six transfer variants, balanced sampling, folds, metrics
//! ```
//!
//! Everything is built on the small autodiff engine in [`tensor`].

// `!(x > 0.0)` is how range checks here reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod contextualizer;
pub mod data;
pub mod encoder;
pub mod error;
pub mod finetune;
pub mod model;
pub mod optim;
pub mod preprocess;
pub mod pretrain;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
