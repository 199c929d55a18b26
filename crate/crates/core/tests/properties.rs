//! Cross-module invariants.

use bendr::checkpoint::Checkpoint;
use bendr::contextualizer::{ContextConfig, TransformerParams};
use bendr::data::{
    generate_synthetic_session, parse_edf, synthetic_trials, write_edf, SyntheticSpec,
};
use bendr::encoder::{BendrSequence, EncoderConfig, EncoderParams};
use bendr::finetune::{
    build_variant, pool_bendr, pool_segments, prepare, train_model, FinetuneConfig, Regularization,
    Variant,
};
use bendr::model::{load_state, state_dict, BendrModel, ModelConfig};
use bendr::preprocess::{StandardizedSequence, TrialWindow};
use bendr::pretrain::{sample_mask_spans, MaskPlan};
use bendr::rng::seeded;
use bendr::tensor::no_grad;
use bendr::Tensor;
use proptest::prelude::*;

fn small_encoder() -> EncoderConfig {
    EncoderConfig {
        in_channels: 3,
        width: 8,
        norm_groups: 4,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Rotating a periodic input by one receptive field rotates the tokens
    /// by one position: every block sees identical windows and the
    /// normalization statistics are unchanged.
    #[test]
    fn encoder_is_shift_covariant(seed in 0u64..1000, tokens in 3usize..8) {
        let cfg = small_encoder();
        let mut rng = seeded(seed);
        let enc = EncoderParams::init(&cfg, &mut rng).unwrap();
        let len = tokens * cfg.downsampling();
        let x = Tensor::randn(&[3, len], 1.0, &mut rng);
        let rotated: Vec<f64> = {
            let d = x.data();
            (0..3)
                .flat_map(|c| (0..len).map(move |i| (c, (i + 96) % len)))
                .map(|(c, i)| d[c * len + i])
                .collect()
        };
        let _g = no_grad();
        let a = enc.forward(&x).unwrap();
        let b = enc.forward(&Tensor::new(rotated, &[3, len]).unwrap()).unwrap();
        let (a, b) = (a.to_vec(), b.to_vec());
        for c in 0..cfg.width {
            for t in 0..tokens {
                let want = a[c * tokens + (t + 1) % tokens];
                prop_assert!((b[c * tokens + t] - want).abs() < 1e-9);
            }
        }
    }

    /// Each pooled feature is the mean of its segment: the gradient is
    /// 1/len on the segment's entries, and permuting tokens inside a
    /// segment changes nothing.
    #[test]
    fn pooling_segments(seed in 0u64..1000, c in 1usize..4, t in 4usize..40) {
        let mut rng = seeded(seed);
        let x = Tensor::randn(&[c, t], 1.0, &mut rng);
        x.set_requires_grad(true);
        let pooled = pool_bendr(&BendrSequence::new(x.clone())).unwrap();
        pooled.sum().unwrap().backward().unwrap();
        let grad = x.grad().unwrap();
        let segs = pool_segments(t);
        let mut col = 0;
        for len in &segs {
            for i in col..col + len {
                for ch in 0..c {
                    prop_assert!((grad[ch * t + i] - 1.0 / *len as f64).abs() < 1e-12);
                }
            }
            col += len;
        }

        let mut perm = x.to_vec();
        let mut start = 0;
        for len in &segs {
            for ch in 0..c {
                perm[ch * t + start..ch * t + start + len].reverse();
            }
            start += len;
        }
        let again = pool_bendr(&BendrSequence::new(Tensor::new(perm, &[c, t]).unwrap())).unwrap();
        for (p, q) in pooled.to_vec().iter().zip(again.to_vec()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_plans_are_well_formed(seed in 0u64..10_000, len in 20usize..200) {
        let mut rng = seeded(seed);
        let plan = sample_mask_spans(len, 0.065, 10, &mut rng)
            .unwrap()
            .with_distractors(20, &mut rng)
            .unwrap();
        let mut want: Vec<usize> = plan
            .starts
            .iter()
            .flat_map(|&s| s..(s + 10).min(len))
            .collect();
        want.sort_unstable();
        want.dedup();
        prop_assert_eq!(&plan.masked, &want);
        for (t, d) in plan.masked.iter().zip(&plan.distractors) {
            prop_assert_eq!(d.len(), 20);
            prop_assert!(d.iter().all(|&j| j != *t && j < len));
        }
    }

    #[test]
    fn edf_round_trip_is_bit_exact(seed in 0u64..500) {
        let spec = SyntheticSpec { duration_s: 6.0, ..Default::default() };
        let session = generate_synthetic_session(&spec, seed).unwrap();
        let bytes = write_edf(&session).unwrap();
        let back = parse_edf(&bytes).unwrap();
        prop_assert_eq!(write_edf(&back).unwrap(), bytes);
    }
}

#[test]
fn layer_drop_rate_matches_probability() {
    let cfg = ContextConfig {
        bendr_dim: 4,
        model_dim: 8,
        layers: 4,
        heads: 2,
        ff_dim: 8,
        pos_kernel: 3,
        pos_groups: 2,
        layer_drop: 0.2,
        ..Default::default()
    };
    let mut rng = seeded(3);
    let ctx = TransformerParams::init(&cfg, &mut rng).unwrap();
    let b = BendrSequence::new(Tensor::randn(&[4, 6], 1.0, &mut rng));
    let _g = no_grad();
    let runs = 5000;
    let mut skipped = 0;
    for _ in 0..runs {
        skipped += ctx
            .contextualize(&b, &[], Some(&mut rng))
            .unwrap()
            .skipped_layers
            .len();
    }
    let rate = skipped as f64 / (runs * 4) as f64;
    // Binomial standard deviation is about 0.003 here.
    assert!((rate - 0.2).abs() < 0.015, "skip rate {rate}");

    let eval = ctx.contextualize(&b, &[], None).unwrap();
    assert!(eval.skipped_layers.is_empty());
}

fn tiny_trials() -> Vec<StandardizedSequence> {
    let window = TrialWindow {
        start_s: 0.0,
        length_s: 2.0,
        classes: vec!["alpha".into(), "beta".into()],
    };
    synthetic_trials(&SyntheticSpec::downstream(8, 2.0), 2, 11, window).unwrap()
}

fn frozen_names(variant: Variant) -> Vec<String> {
    let pretrained = BendrModel::init(&ModelConfig::desk(), &mut seeded(4)).unwrap();
    let model = build_variant(
        Some(&pretrained),
        variant,
        &pretrained.config,
        2,
        &mut seeded(5),
    )
    .unwrap();
    let trials = tiny_trials();
    let refs: Vec<&StandardizedSequence> = trials.iter().collect();
    let prepared = prepare(&model, &refs, 2).unwrap();
    let cfg = FinetuneConfig {
        variant,
        batch_size: 2,
        epochs: 4,
        regularization: Regularization {
            time_p: 0.3,
            channel_p: 0.3,
            ..Default::default()
        },
        ..Default::default()
    };
    let frozen: Vec<(String, Tensor)> = model
        .parameters()
        .into_iter()
        .filter(|(_, t)| !t.requires_grad())
        .collect();
    let trainable = model.trainable_parameters();
    let mut steps = 0;
    let mut moved = false;
    train_model(&model, &prepared, &cfg, &mut seeded(6), |_| {
        steps += 1;
        for (name, t) in &frozen {
            assert_eq!(
                t.grad_norm(),
                0.0,
                "{name} received a gradient at step {steps}"
            );
        }
        moved |= trainable.iter().any(|(_, t)| t.grad_norm() > 0.0);
        Ok(())
    })
    .unwrap();
    assert!(steps >= 16, "only {steps} steps");
    assert!(moved);
    assert!(model.mask_vector.grad().is_none());
    frozen.into_iter().map(|(n, _)| n).collect()
}

#[test]
fn frozen_encoder_with_transformer() {
    let names = frozen_names(Variant::FullFrozenEncoder);
    assert!(names.iter().any(|n| n.starts_with("encoder.")));
    assert!(names.contains(&"context.mask_vector".to_string()));
    assert!(names.contains(&"context.output.weight".to_string()));
    assert!(!names.contains(&"context.input.weight".to_string()));
}

#[test]
fn frozen_encoder_with_linear_head() {
    let names = frozen_names(Variant::LinearFrozenEncoder);
    assert!(names.iter().all(|n| n.starts_with("encoder.")));
    assert!(!names.is_empty());
}

#[test]
fn checkpoint_round_trip_forward_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = BendrModel::init(&ModelConfig::desk(), &mut seeded(8)).unwrap();
    Checkpoint {
        step: 3,
        config: "seed = 1\n".into(),
        params: state_dict(&model.parameters()),
        adam: None,
    }
    .save(&path)
    .unwrap();
    let loaded = BendrModel::init(&ModelConfig::desk(), &mut seeded(99)).unwrap();
    let ckpt = Checkpoint::load(&path).unwrap();
    assert_eq!(ckpt.step, 3);
    load_state(&loaded.parameters(), &ckpt.params).unwrap();

    let trials = tiny_trials();
    let _g = no_grad();
    let forward = |m: &BendrModel| {
        let b = m.encoder.encode(&trials[0]).unwrap();
        let plan = MaskPlan::from_starts(b.len(), 2, vec![1]).unwrap();
        let ctx = m.context.contextualize(&b, &plan.masked, None).unwrap();
        (b.vectors.to_vec(), ctx.outputs.to_vec())
    };
    let (a, b) = (forward(&model), forward(&loaded));
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.0), bits(&b.0));
    assert_eq!(bits(&a.1), bits(&b.1));
}
