//! Pretrains the desk-scale model on synthetic sessions and reports held-out
//! contrastive accuracy and the length sweep.
//!
//! `cargo run --release --example desk_pretrain -- [steps] [batch] [lr]`

use std::time::Instant;

use bendr::data::{generate_synthetic_session, SyntheticSpec};
use bendr::model::{BendrModel, ModelConfig};
use bendr::preprocess::{build_dataset, PreprocessConfig, RecordingInput};
use bendr::pretrain::{
    evaluate_contrastive, length_sweep, pretrain_loop, sweep_table, PretrainConfig, RunOutputs,
};
use bendr::rng::seeded;

fn corpus(
    sessions: u32,
    seconds: f64,
    seed0: u64,
) -> bendr::Result<Vec<bendr::preprocess::StandardizedSequence>> {
    let spec = SyntheticSpec::pretraining(seconds);
    let inputs = (0..sessions)
        .map(|i| {
            Ok(RecordingInput {
                path: format!("synthetic-{i}"),
                subject: i,
                session: 0,
                data: generate_synthetic_session(&spec, seed0 + i as u64)?,
            })
        })
        .collect::<bendr::Result<Vec<_>>>()?;
    Ok(build_dataset(&inputs, &PreprocessConfig::default())?.1)
}

fn main() -> bendr::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let batch = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4);
    let lr = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(5e-4);

    let train = corpus(8, 300.0, 100)?;
    let held_out = corpus(4, 300.0, 900)?;
    println!(
        "train sequences {}, held-out {}",
        train.len(),
        held_out.len()
    );

    let model = BendrModel::init(&ModelConfig::desk(), &mut seeded(7))?;
    let cfg = PretrainConfig {
        steps,
        batch_size: batch,
        peak_lr: lr,
        ..Default::default()
    };
    let before = evaluate_contrastive(&model, &held_out, &cfg)?;
    println!(
        "untrained accuracy {:.4}",
        before.iter().sum::<f64>() / before.len() as f64
    );

    let t0 = Instant::now();
    let out = pretrain_loop(&model, &train, &cfg, 11, &RunOutputs::default())?;
    for r in out.history.iter().step_by((steps / 20).max(1)) {
        println!("{}", r.log_line());
    }
    println!("train time {:.1}s", t0.elapsed().as_secs_f64());
    let acc = evaluate_contrastive(&model, &held_out, &cfg)?;
    println!(
        "held-out accuracy {:.4}",
        acc.iter().sum::<f64>() / acc.len() as f64
    );
    let rows = length_sweep(&model, &held_out, &[20.0, 30.0, 40.0, 50.0, 60.0], &cfg)?;
    print!("{}", sweep_table(&rows));
    Ok(())
}
