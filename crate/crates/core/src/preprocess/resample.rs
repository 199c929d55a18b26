use crate::error::{Error, Result};

use super::filter::{lowpass_with, FirDesign};

pub const TARGET_RATE: f64 = 256.0;

/// Integer stage chosen before the nearest-neighbour step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegerStage {
    /// Repeat every sample `k` times (`k = 1` is a no-op).
    Repeat(usize),
    /// Keep every `d`-th sample.
    Decimate(usize),
}

impl IntegerStage {
    pub fn rate(self, native: f64) -> f64 {
        match self {
            IntegerStage::Repeat(k) => native * k as f64,
            IntegerStage::Decimate(d) => native / d as f64,
        }
    }

    fn apply(self, x: &[f64]) -> Vec<f64> {
        match self {
            IntegerStage::Repeat(k) => x.iter().flat_map(|&v| std::iter::repeat_n(v, k)).collect(),
            IntegerStage::Decimate(d) => x.iter().step_by(d).copied().collect(),
        }
    }
}

/// The whole multiple bringing `native` nearest to 256 Hz; ties go to the
/// higher rate.
pub fn integer_stage(native: f64) -> IntegerStage {
    let mut candidates = Vec::with_capacity(4);
    if native < TARGET_RATE {
        let k = (TARGET_RATE / native).floor().max(1.0) as usize;
        candidates.extend([IntegerStage::Repeat(k), IntegerStage::Repeat(k + 1)]);
    } else {
        let d = (native / TARGET_RATE).floor().max(1.0) as usize;
        candidates.push(if d == 1 {
            IntegerStage::Repeat(1)
        } else {
            IntegerStage::Decimate(d)
        });
        candidates.push(IntegerStage::Decimate(d + 1));
    }
    candidates
        .into_iter()
        .min_by(|a, b| {
            let (ra, rb) = (a.rate(native), b.rate(native));
            let (da, db) = ((ra - TARGET_RATE).abs(), (rb - TARGET_RATE).abs());
            if (da - db).abs() <= 1e-9 * TARGET_RATE {
                rb.total_cmp(&ra)
            } else {
                da.total_cmp(&db)
            }
        })
        .expect("two candidates")
}

/// Resampling settings shared by every signal of a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleOptions {
    /// Low-pass before decimating signals above this rate.
    pub antialias_above_hz: f64,
    pub antialias_cutoff_hz: f64,
    pub design: FirDesign,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        Self {
            antialias_above_hz: 512.0,
            antialias_cutoff_hz: 120.0,
            design: FirDesign::default(),
        }
    }
}

/// Brings a signal at `native_rate` to exactly 256 Hz.
pub fn resample(x: &[f64], native_rate: f64) -> Result<Vec<f64>> {
    resample_with(x, native_rate, &ResampleOptions::default())
}

pub fn resample_with(x: &[f64], native_rate: f64, opts: &ResampleOptions) -> Result<Vec<f64>> {
    if !(native_rate > 0.0) || !native_rate.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sampling rate {native_rate} must be positive"
        )));
    }
    if native_rate == TARGET_RATE {
        return Ok(x.to_vec());
    }
    let filtered;
    let x = if native_rate > opts.antialias_above_hz {
        filtered = lowpass_with(x, opts.antialias_cutoff_hz, native_rate, &opts.design)?;
        &filtered[..]
    } else {
        x
    };
    let stage = integer_stage(native_rate);
    let mid = stage.apply(x);
    let mid_rate = stage.rate(native_rate);
    let out_len = (x.len() as f64 * TARGET_RATE / native_rate).round() as usize;
    if mid.is_empty() {
        return Ok(Vec::new());
    }
    let step = mid_rate / TARGET_RATE;
    Ok((0..out_len)
        .map(|j| {
            let src = ((j as f64 * step).round() as usize).min(mid.len() - 1);
            mid[src]
        })
        .collect())
}
