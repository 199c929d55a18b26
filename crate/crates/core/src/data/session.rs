use std::collections::HashSet;

use crate::error::{Error, Result};

/// Per-signal calibration and text fields as stored in an EDF header.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMeta {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefiltering: String,
    pub samples_per_record: usize,
    pub reserved: String,
}

impl SignalMeta {
    /// Digital → physical.
    pub fn to_physical(&self, digital: i16) -> f64 {
        let gain =
            (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min) as f64;
        self.physical_min + (digital as f64 - self.digital_min as f64) * gain
    }

    /// Physical → digital, rounding to nearest and clamping to the digital range.
    pub fn to_digital(&self, physical: f64) -> i16 {
        let scale =
            (self.digital_max - self.digital_min) as f64 / (self.physical_max - self.physical_min);
        let d = ((physical - self.physical_min) * scale + self.digital_min as f64).round();
        d.clamp(self.digital_min as f64, self.digital_max as f64) as i16
    }

    /// Physical size of one quantization step.
    pub fn resolution(&self) -> f64 {
        (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min) as f64
    }
}

/// Recording-level EDF header fields.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient: String,
    pub recording: String,
    pub start_date: String,
    pub start_time: String,
    pub reserved: String,
    pub num_records: usize,
    pub record_duration_s: f64,
}

impl Default for EdfHeader {
    fn default() -> Self {
        Self {
            version: "0".into(),
            patient: "X X X X".into(),
            recording: "Startdate X X X X".into(),
            start_date: "01.01.00".into(),
            start_time: "00.00.00".into(),
            reserved: String::new(),
            num_records: 0,
            record_duration_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub label: String,
    pub sampling_rate: f64,
    /// Physical units (µV for EEG).
    pub samples: Vec<f64>,
    /// Calibration the channel was read with, if it came from EDF.
    pub edf: Option<SignalMeta>,
}

impl Channel {
    pub fn new(label: impl Into<String>, sampling_rate: f64, samples: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            sampling_rate,
            samples,
            edf: None,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub onset_s: f64,
    pub duration_s: Option<f64>,
    pub label: String,
}

/// A parsed multi-channel recording.
///
/// Channels keep their native rate; harmonizing rates is a preprocessing step.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSession {
    pub channels: Vec<Channel>,
    pub annotations: Vec<Annotation>,
    pub header: Option<EdfHeader>,
}

impl RawSession {
    pub fn new(channels: Vec<Channel>, annotations: Vec<Annotation>) -> Result<Self> {
        let s = Self {
            channels,
            annotations,
            header: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::InvalidInput("session has no channels".into()));
        }
        let mut seen = HashSet::new();
        for ch in &self.channels {
            if !(ch.sampling_rate > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "channel `{}` has sampling rate {}",
                    ch.label, ch.sampling_rate
                )));
            }
            if !seen.insert(ch.label.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate channel label `{}`",
                    ch.label
                )));
            }
        }
        if let Some(rate) = self.sampling_rate() {
            let len = self.channels[0].samples.len();
            if self.channels.iter().any(|c| c.samples.len() != len) {
                return Err(Error::InvalidInput(
                    "channels sharing a sampling rate must have equal length".into(),
                ));
            }
            debug_assert!(rate > 0.0);
        }
        Ok(())
    }

    pub fn channel_labels(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.label.as_str()).collect()
    }

    /// The common sampling rate, or `None` when channels differ.
    pub fn sampling_rate(&self) -> Option<f64> {
        let first = self.channels.first()?.sampling_rate;
        self.channels
            .iter()
            .all(|c| c.sampling_rate == first)
            .then_some(first)
    }

    pub fn duration_s(&self) -> f64 {
        self.channels
            .iter()
            .map(Channel::duration_s)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn channel(&self, label: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.label == label)
    }
}
