use serde::{Deserialize, Serialize};

use crate::data::{window_bounds, RawSession};
use crate::error::{Error, Result};

use super::channels::{map_channels, ChannelMap, TARGET_CHANNELS};
use super::filter::FirDesign;
use super::manifest::{Manifest, RecordingEntry, MISSING};
use super::resample::{resample_with, ResampleOptions, TARGET_RATE};
use super::scale::{scale_sequence, ScaleMode, SequenceSource, StandardizedSequence};

/// Epoching around annotated events instead of fixed windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialWindow {
    /// Offset of the window start relative to the event onset.
    pub start_s: f64,
    pub length_s: f64,
    /// Annotation labels in class-index order; other annotations are ignored.
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub dataset: String,
    pub window_s: f64,
    pub stride_s: f64,
    pub scale_mode: ScaleMode,
    pub antialias_above_hz: f64,
    pub antialias_cutoff_hz: f64,
    pub fir: FirDesign,
    pub trials: Option<TrialWindow>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            dataset: "dataset".into(),
            window_s: 60.0,
            stride_s: 60.0,
            scale_mode: ScaleMode::Sequence,
            antialias_above_hz: 512.0,
            antialias_cutoff_hz: 120.0,
            fir: FirDesign::default(),
            trials: None,
        }
    }
}

impl PreprocessConfig {
    fn resample_options(&self) -> ResampleOptions {
        ResampleOptions {
            antialias_above_hz: self.antialias_above_hz,
            antialias_cutoff_hz: self.antialias_cutoff_hz,
            design: self.fir,
        }
    }
}

/// A session reduced to the 19 target rows at 256 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRecording {
    pub rows: Vec<Option<Vec<f64>>>,
    pub len: usize,
    pub map: ChannelMap,
    pub native_rate: f64,
}

impl TargetRecording {
    pub fn extremes(&self) -> (f64, f64) {
        self.rows
            .iter()
            .flatten()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    fn window(&self, start: usize, len: usize) -> Vec<Option<&[f64]>> {
        self.rows
            .iter()
            .map(|r| r.as_deref().map(|r| &r[start..start + len]))
            .collect()
    }
}

/// Channel mapping plus rate harmonization for one session.
pub fn harmonize(session: &RawSession, cfg: &PreprocessConfig) -> Result<TargetRecording> {
    let map = map_channels(session)?;
    if map.present() == 0 {
        return Err(Error::ChannelMap(
            "no source channel matches a target electrode".into(),
        ));
    }
    let opts = cfg.resample_options();
    let mut rows: Vec<Option<Vec<f64>>> = Vec::with_capacity(TARGET_CHANNELS.len());
    let mut native_rate = 0.0f64;
    for a in map.assignment {
        rows.push(match a {
            Some(src) => {
                let ch = &session.channels[src];
                native_rate = native_rate.max(ch.sampling_rate);
                Some(resample_with(&ch.samples, ch.sampling_rate, &opts)?)
            }
            None => None,
        });
    }
    let len = rows.iter().flatten().map(Vec::len).min().unwrap_or(0);
    rows.iter_mut().flatten().for_each(|r| r.truncate(len));
    Ok(TargetRecording {
        rows,
        len,
        map,
        native_rate,
    })
}

/// One input recording with its provenance.
#[derive(Debug, Clone)]
pub struct RecordingInput {
    pub path: String,
    pub subject: u32,
    pub session: u32,
    pub data: RawSession,
}

fn seconds_to_samples(s: f64) -> usize {
    (s * TARGET_RATE).round() as usize
}

/// Fixed-length windows of a harmonized recording.
pub fn window_sequences(
    rec: &TargetRecording,
    cfg: &PreprocessConfig,
    dataset_range: f64,
    source: &SequenceSource,
) -> Result<Vec<StandardizedSequence>> {
    let window = seconds_to_samples(cfg.window_s);
    let stride = seconds_to_samples(cfg.stride_s);
    if window == 0 || stride == 0 {
        return Err(Error::Config("window and stride must be positive".into()));
    }
    window_bounds(rec.len, window, stride)
        .into_iter()
        .map(|r| {
            let src = SequenceSource {
                start_sample: r.start as u64,
                ..source.clone()
            };
            scale_sequence(
                &rec.window(r.start, r.len()),
                dataset_range,
                cfg.scale_mode,
                src,
            )
        })
        .collect()
}

/// Event-locked trials; events whose window falls outside the recording are
/// dropped.
pub fn trial_sequences(
    rec: &TargetRecording,
    annotations: &[crate::data::Annotation],
    trials: &TrialWindow,
    cfg: &PreprocessConfig,
    dataset_range: f64,
    source: &SequenceSource,
) -> Result<Vec<StandardizedSequence>> {
    let len = seconds_to_samples(trials.length_s);
    if len == 0 {
        return Err(Error::Config("trial length must be positive".into()));
    }
    let mut out = Vec::new();
    for ann in annotations {
        let Some(class) = trials.classes.iter().position(|c| *c == ann.label) else {
            continue;
        };
        let start = ((ann.onset_s + trials.start_s) * TARGET_RATE).round();
        if start < 0.0 || start as usize + len > rec.len {
            continue;
        }
        let start = start as usize;
        let src = SequenceSource {
            label: Some(class as u32),
            start_sample: start as u64,
            ..source.clone()
        };
        out.push(scale_sequence(
            &rec.window(start, len),
            dataset_range,
            cfg.scale_mode,
            src,
        )?);
    }
    Ok(out)
}

/// Two passes over a dataset: the global range scan, then standardized
/// sequence emission. Returns the manifest describing both.
pub fn build_dataset(
    inputs: &[RecordingInput],
    cfg: &PreprocessConfig,
) -> Result<(Manifest, Vec<StandardizedSequence>)> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("no recordings to preprocess".into()));
    }
    let recs = inputs
        .iter()
        .map(|i| harmonize(&i.data, cfg))
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = recs
        .iter()
        .map(TargetRecording::extremes)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
            (lo.min(a), hi.max(b))
        });
    let dataset_range = hi - lo;
    if !(dataset_range > 0.0) || !dataset_range.is_finite() {
        return Err(Error::InvalidInput(format!(
            "dataset range {dataset_range} is not positive; every recording is constant"
        )));
    }

    let mut sequences = Vec::new();
    let mut entries = Vec::with_capacity(inputs.len());
    for (input, rec) in inputs.iter().zip(&recs) {
        let source = SequenceSource {
            dataset: cfg.dataset.clone(),
            subject: input.subject,
            session: input.session,
            label: None,
            start_sample: 0,
        };
        let seqs = match &cfg.trials {
            Some(t) => {
                trial_sequences(rec, &input.data.annotations, t, cfg, dataset_range, &source)?
            }
            None => window_sequences(rec, cfg, dataset_range, &source)?,
        };
        entries.push(RecordingEntry {
            path: input.path.clone(),
            subject: input.subject,
            session: input.session,
            native_rate_hz: rec.native_rate,
            channels: rec
                .map
                .assignment
                .iter()
                .map(|a| match a {
                    Some(i) => input.data.channels[*i].label.clone(),
                    None => MISSING.to_string(),
                })
                .collect(),
            sequences: seqs.len(),
        });
        sequences.extend(seqs);
    }
    let manifest = Manifest {
        dataset: cfg.dataset.clone(),
        dataset_range_uv: dataset_range,
        target_rate_hz: TARGET_RATE,
        window_s: cfg.window_s,
        stride_s: cfg.stride_s,
        scale_mode: cfg.scale_mode,
        sequences: sequences.len(),
        cache: None,
        recordings: entries,
    };
    Ok((manifest, sequences))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Annotation, Channel};

    fn session(labels: &[&str], rate: f64, seconds: f64) -> RawSession {
        let n = (rate * seconds) as usize;
        let channels = labels
            .iter()
            .enumerate()
            .map(|(c, l)| {
                let samples = (0..n)
                    .map(|i| ((i as f64 / rate) * (3.0 + c as f64)).sin() * (10.0 + c as f64))
                    .collect();
                Channel::new(*l, rate, samples)
            })
            .collect();
        RawSession::new(channels, vec![]).unwrap()
    }

    #[test]
    fn windows_at_256_with_missing_rows() {
        let s = session(&["Fp1", "Cz", "EOG"], 160.0, 125.0);
        let cfg = PreprocessConfig::default();
        let input = RecordingInput {
            path: "a.edf".into(),
            subject: 1,
            session: 0,
            data: s,
        };
        let (manifest, seqs) = build_dataset(&[input], &cfg).unwrap();
        assert_eq!(seqs.len(), 2);
        for s in &seqs {
            assert_eq!((s.channels(), s.len()), (20, 15360));
            assert!(s.row(1).iter().all(|&v| v == 0.0));
            let hi = s
                .row(0)
                .iter()
                .chain(s.row(9))
                .copied()
                .fold(f64::MIN, f64::max);
            assert_eq!(hi, 1.0);
        }
        assert_eq!(manifest.recordings[0].channels[9], "Cz");
        assert_eq!(manifest.recordings[0].channels[1], MISSING);
        assert_eq!(manifest.recordings[0].native_rate_hz, 160.0);
    }

    #[test]
    fn trial_epochs_carry_labels() {
        let mut s = session(&["C3", "C4"], 256.0, 20.0);
        s.annotations = vec![
            Annotation {
                onset_s: 2.0,
                duration_s: Some(4.0),
                label: "T1".into(),
            },
            Annotation {
                onset_s: 8.0,
                duration_s: Some(4.0),
                label: "T2".into(),
            },
            Annotation {
                onset_s: 12.0,
                duration_s: Some(4.0),
                label: "T0".into(),
            },
            Annotation {
                onset_s: 19.0,
                duration_s: Some(4.0),
                label: "T1".into(),
            },
        ];
        let cfg = PreprocessConfig {
            trials: Some(TrialWindow {
                start_s: -0.5,
                length_s: 4.0,
                classes: vec!["T1".into(), "T2".into()],
            }),
            ..Default::default()
        };
        let input = RecordingInput {
            path: "t".into(),
            subject: 0,
            session: 0,
            data: s,
        };
        let (_, seqs) = build_dataset(&[input], &cfg).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].source.label, Some(0));
        assert_eq!(seqs[1].source.label, Some(1));
        assert_eq!(seqs[0].source.start_sample, 384);
        assert_eq!(seqs[0].len(), 1024);
    }

    #[test]
    fn no_matching_channels() {
        let s = session(&["EOG", "EMG"], 256.0, 2.0);
        assert!(matches!(
            harmonize(&s, &PreprocessConfig::default()),
            Err(Error::ChannelMap(_))
        ));
    }
}
