use std::ops::Range;

use super::session::RawSession;
use crate::error::{Error, Result};

/// Sample ranges of fixed-length windows; the trailing remainder is dropped.
pub fn window_bounds(n_samples: usize, window: usize, stride: usize) -> Vec<Range<usize>> {
    if window == 0 || stride == 0 || n_samples < window {
        return Vec::new();
    }
    (0..=(n_samples - window) / stride)
        .map(|i| i * stride..i * stride + window)
        .collect()
}

/// One window cut from a session: per-channel samples at the session rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionWindow {
    pub start_sample: usize,
    pub sampling_rate: f64,
    pub channels: Vec<Vec<f64>>,
}

impl SessionWindow {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Slices a uniformly sampled session into windows of `window_s` seconds
/// every `stride_s` seconds.
pub fn chunk_sequence(
    session: &RawSession,
    window_s: f64,
    stride_s: f64,
) -> Result<Vec<SessionWindow>> {
    let rate = session.sampling_rate().ok_or_else(|| {
        Error::InvalidInput("chunking needs a single sampling rate; resample first".into())
    })?;
    if !(window_s > 0.0 && stride_s > 0.0) {
        return Err(Error::InvalidInput(format!(
            "window {window_s} s and stride {stride_s} s must be positive"
        )));
    }
    let window = (window_s * rate).round() as usize;
    let stride = (stride_s * rate).round() as usize;
    let n = session.channels[0].samples.len();
    Ok(window_bounds(n, window, stride)
        .into_iter()
        .map(|r| SessionWindow {
            start_sample: r.start,
            sampling_rate: rate,
            channels: session
                .channels
                .iter()
                .map(|c| c.samples[r.clone()].to_vec())
                .collect(),
        })
        .collect())
}
