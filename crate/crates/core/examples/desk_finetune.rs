//! Fine-tunes transfer variants on synthetic two-class trials.
//!
//! `cargo run --release --example desk_finetune -- [checkpoint] [variants...]`
//!
//! Without a checkpoint a freshly initialized desk model stands in for the
//! pretrained one.

use std::time::Instant;

use bendr::cli::load_model;
use bendr::config::desk_finetune;
use bendr::data::{synthetic_trials, SyntheticSpec};
use bendr::finetune::{run_folds, FinetuneConfig, Variant};
use bendr::model::{BendrModel, ModelConfig};
use bendr::preprocess::TrialWindow;
use bendr::rng::seeded;

fn main() -> bendr::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (model, rest) = match args.first().filter(|a| a.parse::<u8>().is_err()) {
        Some(path) => (load_model(path.as_ref())?.0, &args[1..]),
        None => (
            BendrModel::init(&ModelConfig::desk(), &mut seeded(7))?,
            &args[..],
        ),
    };
    let variants: Vec<u8> = if rest.is_empty() {
        vec![6, 2]
    } else {
        rest.iter().filter_map(|a| a.parse().ok()).collect()
    };

    let window = TrialWindow {
        start_s: 0.0,
        length_s: 4.0,
        classes: vec!["alpha".into(), "beta".into()],
    };
    let trials = synthetic_trials(&SyntheticSpec::downstream(20, 4.0), 10, 500, window)?;
    println!("{} trials", trials.len());

    for v in variants {
        let base = desk_finetune();
        let env = |k: &str| std::env::var(k).ok().and_then(|v| v.parse::<f64>().ok());
        let cfg = FinetuneConfig {
            variant: Variant::try_from(v)?,
            epochs: env("EPOCHS").map_or(base.epochs, |e| e as usize),
            peak_lr: env("LR").unwrap_or(base.peak_lr),
            ..base
        };
        let t0 = Instant::now();
        let report = run_folds(&trials, Some(&model), &model.config, &cfg, 3)?;
        println!(
            "variant {v}: bac {:.4} normalized {:.4} ci {:.4}..{:.4} in {:.1}s",
            report.mean,
            report.mean_normalized,
            report.ci.0,
            report.ci.1,
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
