//! Behaviour of the pretraining objective at initialization and under
//! training.

use bendr::contextualizer::ContextConfig;
use bendr::data::{generate_synthetic_session, SyntheticSpec};
use bendr::encoder::EncoderConfig;
use bendr::model::{BendrModel, ModelConfig};
use bendr::preprocess::{build_dataset, PreprocessConfig, RecordingInput, StandardizedSequence};
use bendr::pretrain::{pretrain_loop, pretrain_step, PretrainConfig, RunOutputs};
use bendr::rng::seeded;

fn sequences(n: u32, window_s: f64) -> Vec<StandardizedSequence> {
    let spec = SyntheticSpec::pretraining(window_s * 2.0);
    let inputs: Vec<RecordingInput> = (0..n)
        .map(|i| RecordingInput {
            path: format!("s{i}"),
            subject: i,
            session: 0,
            data: generate_synthetic_session(&spec, 40 + i as u64).unwrap(),
        })
        .collect();
    let cfg = PreprocessConfig {
        window_s,
        stride_s: window_s,
        ..Default::default()
    };
    build_dataset(&inputs, &cfg).unwrap().1
}

/// With 512-dim random representations the 21 candidate similarities are
/// nearly equal, so the loss starts close to ln 21.
#[test]
fn full_width_starts_near_uniform() {
    let seqs = sequences(1, 20.0);
    let model = BendrModel::init(&ModelConfig::default(), &mut seeded(0)).unwrap();
    let batch: Vec<&StandardizedSequence> = seqs.iter().collect();
    let rec = pretrain_step(&model, &batch, &PretrainConfig::default(), &mut seeded(1)).unwrap();
    assert!(
        (rec.contrastive - 21f64.ln()).abs() < 0.5,
        "initial loss {}",
        rec.contrastive
    );
}

#[test]
fn one_sequence_is_memorized() {
    let config = ModelConfig {
        encoder: EncoderConfig {
            width: 32,
            norm_groups: 8,
            ..Default::default()
        },
        context: ContextConfig {
            bendr_dim: 32,
            model_dim: 32,
            layers: 1,
            heads: 2,
            ff_dim: 64,
            pos_groups: 8,
            ..Default::default()
        },
    };
    let seqs = sequences(1, 20.0);
    let model = BendrModel::init(&config, &mut seeded(2)).unwrap();
    let cfg = PretrainConfig {
        steps: 200,
        batch_size: 1,
        peak_lr: 1e-3,
        ..Default::default()
    };
    let out = pretrain_loop(&model, &seqs[..1], &cfg, 3, &RunOutputs::default()).unwrap();
    let tail: Vec<f64> = out.history[180..].iter().map(|r| r.contrastive).collect();
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    eprintln!(
        "first {:.3} last-20 mean {mean:.3}",
        out.history[0].contrastive
    );
    assert!(mean < 21f64.ln(), "final loss {mean}");
    assert!(out.history.iter().all(|r| r.loss.is_finite()));
}
