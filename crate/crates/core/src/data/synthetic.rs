//! Class-conditional synthetic EEG.
//!
//! A session is a sequence of events. Each event draws a class, and for its
//! duration every channel carries that class's sinusoids (with a per-class
//! spatial gain, a per-event amplitude and phase) on top of 1/f noise.
//! Event onsets are recorded as annotations labelled with the class name.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::session::{Annotation, Channel, RawSession};
use crate::error::{Error, Result};
use crate::preprocess::{
    build_dataset, PreprocessConfig, RecordingInput, StandardizedSequence, TrialWindow,
};
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralComponent {
    pub frequency_hz: f64,
    pub amplitude_uv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub components: Vec<SpectralComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub channels: Vec<String>,
    pub sampling_rate: f64,
    pub duration_s: f64,
    pub classes: Vec<ClassSpec>,
    /// Event length range in seconds; equal bounds give fixed-length events.
    pub event_duration_s: (f64, f64),
    /// Standard deviation of the 1/f background, µV.
    pub noise_uv: f64,
    /// Per-event amplitude factor is drawn from `[1 - j, 1 + j]`.
    pub amplitude_jitter: f64,
    /// Deal classes in shuffled rounds so every class gets the same number
    /// of events (up to one round), instead of drawing each independently.
    pub balanced: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            channels: crate::preprocess::TARGET_CHANNELS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            sampling_rate: 256.0,
            duration_s: 60.0,
            classes: vec![
                ClassSpec {
                    label: "alpha".into(),
                    components: vec![SpectralComponent {
                        frequency_hz: 10.0,
                        amplitude_uv: 20.0,
                    }],
                },
                ClassSpec {
                    label: "beta".into(),
                    components: vec![SpectralComponent {
                        frequency_hz: 22.0,
                        amplitude_uv: 20.0,
                    }],
                },
            ],
            event_duration_s: (4.0, 12.0),
            noise_uv: 5.0,
            amplitude_jitter: 0.5,
            balanced: false,
        }
    }
}

impl SyntheticSpec {
    /// The desk-scale pretraining corpus: several rhythm classes with varied
    /// event lengths so that neighbouring context is informative.
    pub fn pretraining(duration_s: f64) -> Self {
        let class = |label: &str, comps: &[(f64, f64)]| ClassSpec {
            label: label.into(),
            components: comps
                .iter()
                .map(|&(f, a)| SpectralComponent {
                    frequency_hz: f,
                    amplitude_uv: a,
                })
                .collect(),
        };
        Self {
            duration_s,
            classes: vec![
                class("delta", &[(2.0, 30.0)]),
                class("theta", &[(6.0, 25.0)]),
                class("alpha", &[(10.0, 25.0)]),
                class("beta", &[(20.0, 15.0)]),
                class("mixed", &[(4.0, 15.0), (14.0, 15.0)]),
                class("gamma", &[(32.0, 10.0)]),
            ],
            event_duration_s: (2.0, 10.0),
            noise_uv: 4.0,
            amplitude_jitter: 0.6,
            ..Self::default()
        }
    }
}

impl SyntheticSpec {
    /// Two-class trial data for fine-tuning checks: fixed-length events of
    /// a 10 Hz or a 22 Hz rhythm, dealt evenly.
    pub fn downstream(trials: usize, trial_s: f64) -> Self {
        Self {
            duration_s: trials as f64 * trial_s,
            event_duration_s: (trial_s, trial_s),
            balanced: true,
            ..Self::default()
        }
    }
}

/// Labelled event-locked trials, one synthetic session per subject, all
/// scaled with one dataset-wide range.
pub fn synthetic_trials(
    spec: &SyntheticSpec,
    subjects: u32,
    seed: u64,
    window: TrialWindow,
) -> Result<Vec<StandardizedSequence>> {
    let inputs = (0..subjects)
        .map(|s| {
            Ok(RecordingInput {
                path: format!("synthetic-{s}"),
                subject: s,
                session: 0,
                data: generate_synthetic_session(spec, seed.wrapping_add(s as u64))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = PreprocessConfig {
        dataset: "synthetic".into(),
        trials: Some(window),
        ..Default::default()
    };
    Ok(build_dataset(&inputs, &cfg)?.1)
}

/// Voss–McCartney pink noise with unit variance.
fn pink_noise(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    const ROWS: usize = 12;
    let mut rows = [0.0f64; ROWS];
    for r in rows.iter_mut() {
        *r = StandardNormal.sample(rng);
    }
    let mut sum: f64 = rows.iter().sum();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let k = (i + 1).trailing_zeros() as usize;
        if k < ROWS {
            sum -= rows[k];
            rows[k] = StandardNormal.sample(rng);
            sum += rows[k];
        }
        let white: f64 = StandardNormal.sample(rng);
        out.push((sum + white) / ((ROWS + 1) as f64).sqrt());
    }
    out
}

/// Generates one session. Deterministic for a fixed `seed`.
pub fn generate_synthetic_session(spec: &SyntheticSpec, seed: u64) -> Result<RawSession> {
    if spec.channels.is_empty() {
        return Err(Error::InvalidInput("synthetic spec has no channels".into()));
    }
    if spec.classes.is_empty() {
        return Err(Error::InvalidInput("synthetic spec has no classes".into()));
    }
    if !(spec.sampling_rate > 0.0) || !(spec.duration_s > 0.0) {
        return Err(Error::InvalidInput(
            "synthetic spec needs positive rate and duration".into(),
        ));
    }
    let (ev_lo, ev_hi) = spec.event_duration_s;
    if !(ev_lo > 0.0 && ev_hi >= ev_lo) {
        return Err(Error::InvalidInput(format!(
            "invalid event duration range {:?}",
            spec.event_duration_s
        )));
    }
    let mut rng = rng::seeded(seed);
    let n = (spec.duration_s * spec.sampling_rate).round() as usize;
    let nc = spec.channels.len();

    // Spatial pattern per class and channel.
    let gains: Vec<Vec<f64>> = spec
        .classes
        .iter()
        .map(|_| (0..nc).map(|_| rng.random_range(0.3..1.2)).collect())
        .collect();

    let mut annotations = Vec::new();
    let mut events = Vec::new();
    let mut deck: Vec<usize> = Vec::new();
    let mut t = 0.0;
    while t < spec.duration_s {
        let len = if ev_hi > ev_lo {
            rng.random_range(ev_lo..ev_hi)
        } else {
            ev_lo
        };
        let class = if spec.balanced {
            if deck.is_empty() {
                deck = (0..spec.classes.len()).collect();
                deck.shuffle(&mut rng);
            }
            deck.pop().expect("refilled above")
        } else {
            rng.random_range(0..spec.classes.len())
        };
        let amp = 1.0 + spec.amplitude_jitter * rng.random_range(-1.0..=1.0);
        let phases: Vec<f64> = spec.classes[class]
            .components
            .iter()
            .map(|_| rng.random_range(0.0..TAU))
            .collect();
        let end = (t + len).min(spec.duration_s);
        annotations.push(Annotation {
            onset_s: t,
            duration_s: Some(end - t),
            label: spec.classes[class].label.clone(),
        });
        events.push((t, end, class, amp, phases));
        t += len;
    }

    let mut channels = Vec::with_capacity(nc);
    for (ci, label) in spec.channels.iter().enumerate() {
        let mut samples = pink_noise(n, &mut rng);
        samples.iter_mut().for_each(|v| *v *= spec.noise_uv);
        let lag = rng.random_range(-0.2..0.2);
        for (start, end, class, amp, phases) in &events {
            let i0 = (start * spec.sampling_rate).round() as usize;
            let i1 = ((end * spec.sampling_rate).round() as usize).min(n);
            let g = gains[*class][ci] * amp;
            for (comp, phase) in spec.classes[*class].components.iter().zip(phases) {
                let w = TAU * comp.frequency_hz / spec.sampling_rate;
                for (i, s) in samples.iter_mut().enumerate().take(i1).skip(i0) {
                    *s += g * comp.amplitude_uv * (w * i as f64 + phase + lag).sin();
                }
            }
        }
        channels.push(Channel::new(label.clone(), spec.sampling_rate, samples));
    }
    RawSession::new(channels, annotations)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_session() {
        let spec = SyntheticSpec::default();
        let a = generate_synthetic_session(&spec, 9).unwrap();
        let b = generate_synthetic_session(&spec, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_session(&spec, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_channel_list_is_rejected() {
        let spec = SyntheticSpec {
            channels: vec![],
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic_session(&spec, 0).is_err());
    }

    #[test]
    fn annotations_tile_the_session() {
        let spec = SyntheticSpec::default();
        let s = generate_synthetic_session(&spec, 3).unwrap();
        assert_eq!(s.annotations[0].onset_s, 0.0);
        let covered: f64 = s.annotations.iter().map(|a| a.duration_s.unwrap()).sum();
        assert!((covered - spec.duration_s).abs() < 1e-9);
        assert_eq!(s.channels[0].samples.len(), 60 * 256);
    }

    #[test]
    fn balanced_trials() {
        let spec = SyntheticSpec::downstream(20, 4.0);
        let window = TrialWindow {
            start_s: 0.0,
            length_s: 4.0,
            classes: vec!["alpha".into(), "beta".into()],
        };
        let trials = synthetic_trials(&spec, 2, 5, window).unwrap();
        assert_eq!(trials.len(), 40);
        let ones = trials.iter().filter(|t| t.source.label == Some(1)).count();
        assert_eq!(ones, 20);
        assert_eq!(trials[0].len(), 1024);
    }

    #[test]
    fn pink_noise_is_normalized() {
        let mut rng = rng::seeded(1);
        let x = pink_noise(200_000, &mut rng);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.25, "var {var}");
    }
}
