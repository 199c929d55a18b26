//! Command-line front end. Each subcommand reads a [`RunConfig`], does its
//! work and writes artifacts under `--out`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::cache::{read_cache, write_cache};
use crate::data::{generate_synthetic_session, read_edf};
use crate::error::{Error, Result};
use crate::finetune::run_folds;
use crate::model::{load_state, BendrModel};
use crate::preprocess::{build_dataset, Manifest, RecordingInput, StandardizedSequence};
use crate::pretrain::{evaluate_contrastive, length_sweep, pretrain_loop, sweep_table, RunOutputs};
use crate::rng::{derive, seeded};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const CACHE_FILE: &str = "cache.bin";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "pretrain.log";
pub const REPORT_FILE: &str = "report.csv";
pub const EVALUATE_FILE: &str = "evaluate.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Parser)]
#[command(
    name = "bendr",
    version,
    about = "Masked contrastive pretraining and transfer for raw EEG"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Start from a named preset instead of (or beneath) a config file.
    #[arg(long, global = true)]
    pub preset: Option<String>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overrides the configured checkpoint.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Map, resample, filter, window and scale recordings into a cache.
    Preprocess,
    /// Masked contrastive pretraining.
    Pretrain,
    /// Cross-validated fine-tuning of one transfer variant.
    Finetune,
    /// Contrastive accuracy of a checkpoint on the evenly spaced mask.
    Evaluate,
    /// Contrastive accuracy against sequence length.
    Sweep,
    /// Print the resolved configuration.
    Config,
}

/// Resolves the run configuration: preset, then config file (which replaces
/// the preset entirely), then flag overrides.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => RunConfig::read(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(ck) = &cli.checkpoint {
        cfg.checkpoint = Some(ck.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command and returns the text to print on success.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = resolve(cli)?;
    let out = cli.out.as_path();
    if cli.command != Command::Config {
        std::fs::create_dir_all(out)?;
    }
    match cli.command {
        Command::Preprocess => cmd_preprocess(&cfg, out).map(|r| r.summary()),
        Command::Pretrain => cmd_pretrain(&cfg, out),
        Command::Finetune => cmd_finetune(&cfg, out),
        Command::Evaluate => cmd_evaluate(&cfg, out),
        Command::Sweep => cmd_sweep(&cfg, out),
        Command::Config => cfg.to_toml(),
    }
}

/// Exit status for a command result: 0 success, 2 numerical failure, 1 any
/// other error.
pub fn exit_code(result: &Result<String>) -> i32 {
    match result {
        Ok(_) => 0,
        Err(e) if e.is_numerical() => 2,
        Err(_) => 1,
    }
}

#[derive(Debug, Clone)]
pub struct PreprocessReport {
    pub manifest: PathBuf,
    pub manifest_hash: String,
    pub sequences: usize,
    pub recordings: usize,
    /// Inputs that could not be read, with the reason.
    pub failures: Vec<(PathBuf, String)>,
}

impl PreprocessReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} sequences from {} recordings\nmanifest {} (sha256 {})\n",
            self.sequences,
            self.recordings,
            self.manifest.display(),
            self.manifest_hash
        );
        for (p, why) in &self.failures {
            let _ = writeln!(s, "skipped {}: {why}", p.display());
        }
        s
    }
}

fn edf_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("edf")))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Two-pass preprocessing into `out/cache.bin` and `out/manifest.toml`.
/// Unreadable recordings are reported and skipped. With EDF inputs each file
/// is one subject, numbered in path order.
pub fn cmd_preprocess(cfg: &RunConfig, out: &Path) -> Result<PreprocessReport> {
    let mut failures = Vec::new();
    let inputs: Vec<RecordingInput> = match &cfg.synthetic {
        Some(src) => (0..src.sessions)
            .map(|i| {
                Ok(RecordingInput {
                    path: format!("synthetic-{i}"),
                    subject: i,
                    session: 0,
                    data: generate_synthetic_session(&src.spec, src.seed + i as u64)?,
                })
            })
            .collect::<Result<_>>()?,
        None => {
            let mut v = Vec::new();
            for (i, path) in edf_paths(&cfg.inputs)?.into_iter().enumerate() {
                match read_edf(&path) {
                    Ok(data) => v.push(RecordingInput {
                        path: path.display().to_string(),
                        subject: i as u32,
                        session: 0,
                        data,
                    }),
                    Err(e) => failures.push((path, e.to_string())),
                }
            }
            v
        }
    };
    if inputs.is_empty() {
        let why = failures
            .iter()
            .map(|(p, e)| format!("\n  {}: {e}", p.display()))
            .collect::<String>();
        return Err(Error::InvalidInput(format!("no readable recordings{why}")));
    }
    let (mut manifest, seqs) = build_dataset(&inputs, &cfg.preprocess)?;
    write_cache(out.join(CACHE_FILE), &seqs)?;
    manifest.cache = Some(CACHE_FILE.into());
    let path = out.join(MANIFEST_FILE);
    manifest.write(&path)?;
    Ok(PreprocessReport {
        manifest_hash: manifest.hash()?,
        manifest: path,
        sequences: seqs.len(),
        recordings: inputs.len(),
        failures,
    })
}

/// Reads the sequences behind the configured manifest, or `out/manifest.toml`.
pub fn load_sequences(cfg: &RunConfig, out: &Path) -> Result<Vec<StandardizedSequence>> {
    let path = cfg
        .manifest
        .clone()
        .unwrap_or_else(|| out.join(MANIFEST_FILE));
    let manifest = Manifest::read(&path)?;
    let cache = manifest
        .cache
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("{} names no cache", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let seqs = read_cache(dir.join(cache))?;
    if seqs.len() != manifest.sequences {
        return Err(Error::InvalidInput(format!(
            "manifest lists {} sequences, cache holds {}",
            manifest.sequences,
            seqs.len()
        )));
    }
    Ok(seqs)
}

/// Model and run configuration stored in a checkpoint.
pub fn load_model(path: &Path) -> Result<(BendrModel, RunConfig)> {
    let ck = Checkpoint::load(path)?;
    let run = RunConfig::from_toml(&ck.config)?;
    let model = BendrModel::init(&run.model, &mut seeded(0))?;
    load_state(&model.parameters(), &ck.params)?;
    Ok((model, run))
}

fn required_checkpoint(cfg: &RunConfig) -> Result<&Path> {
    cfg.checkpoint
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --checkpoint".into()))
}

pub fn cmd_pretrain(cfg: &RunConfig, out: &Path) -> Result<String> {
    let seqs = load_sequences(cfg, out)?;
    let model = match &cfg.checkpoint {
        Some(p) => load_model(p)?.0,
        None => BendrModel::init(&cfg.model, &mut derive(cfg.seed, 0))?,
    };
    let outputs = RunOutputs {
        log: Some(out.join(LOG_FILE)),
        checkpoint: Some(out.join(CHECKPOINT_FILE)),
        config_echo: RunConfig {
            model: model.config.clone(),
            ..cfg.clone()
        }
        .to_toml()?,
    };
    let _ = std::fs::remove_file(out.join(LOG_FILE));
    let outcome = pretrain_loop(&model, &seqs, &cfg.pretrain, cfg.seed, &outputs)?;
    let last = outcome
        .history
        .last()
        .map(|r| r.log_line())
        .unwrap_or_default();
    Ok(format!(
        "{} steps on {} sequences\nlast {last}\ncheckpoint {}\n",
        outcome.history.len(),
        seqs.len(),
        out.join(CHECKPOINT_FILE).display()
    ))
}

pub fn cmd_finetune(cfg: &RunConfig, out: &Path) -> Result<String> {
    let seqs = load_sequences(cfg, out)?;
    let pretrained = cfg.checkpoint.as_deref().map(load_model).transpose()?;
    let model_cfg = pretrained.as_ref().map_or(&cfg.model, |(m, _)| &m.config);
    let report = run_folds(
        &seqs,
        pretrained.as_ref().map(|(m, _)| m),
        model_cfg,
        &cfg.finetune,
        cfg.seed,
    )?;
    let table = report.to_table();
    std::fs::write(out.join(REPORT_FILE), &table)?;
    Ok(format!(
        "{} {:.4} (normalized {:.4}, {:.0}% CI {:.4}..{:.4})\nreport {}\n",
        report.kind.name(),
        report.mean,
        report.mean_normalized,
        cfg.finetune.confidence * 100.0,
        report.ci.0,
        report.ci.1,
        out.join(REPORT_FILE).display()
    ))
}

pub fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<String> {
    let (model, _) = load_model(required_checkpoint(cfg)?)?;
    let seqs = load_sequences(cfg, out)?;
    let acc = evaluate_contrastive(&model, &seqs, &cfg.pretrain)?;
    let mut table = String::from("sequence,subject,accuracy\n");
    for (i, (a, s)) in acc.iter().zip(&seqs).enumerate() {
        let _ = writeln!(table, "{i},{},{a:.6}", s.source.subject);
    }
    std::fs::write(out.join(EVALUATE_FILE), table)?;
    let mean = acc.iter().sum::<f64>() / acc.len().max(1) as f64;
    Ok(format!(
        "mean contrastive accuracy {mean:.4} over {} sequences\n",
        acc.len()
    ))
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<String> {
    let (model, _) = load_model(required_checkpoint(cfg)?)?;
    let seqs = load_sequences(cfg, out)?;
    let rows = length_sweep(&model, &seqs, &cfg.sweep_lengths_s, &cfg.pretrain)?;
    let table = sweep_table(&rows);
    std::fs::write(out.join(SWEEP_FILE), &table)?;
    Ok(table)
}
