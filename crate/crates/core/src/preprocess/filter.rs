use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Windowed-sinc low-pass design parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FirDesign {
    /// Transition band width as a fraction of the cutoff, centred on it.
    pub transition_frac: f64,
    /// Hamming window main-lobe constant: taps ≈ factor · rate / transition.
    pub window_factor: f64,
}

impl Default for FirDesign {
    fn default() -> Self {
        Self {
            transition_frac: 0.4,
            window_factor: 3.3,
        }
    }
}

impl FirDesign {
    pub fn num_taps(&self, cutoff: f64, rate: f64) -> usize {
        let n = (self.window_factor * rate / (self.transition_frac * cutoff)).ceil() as usize;
        n.max(3) | 1
    }

    /// Hamming-windowed sinc taps, normalized to unit DC gain.
    pub fn taps(&self, cutoff: f64, rate: f64) -> Result<Vec<f64>> {
        check_cutoff(cutoff, rate)?;
        let n = self.num_taps(cutoff, rate);
        let fc = cutoff / rate;
        let mid = (n / 2) as f64;
        let mut h: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 - mid;
                let sinc = if t == 0.0 {
                    2.0 * fc
                } else {
                    (2.0 * std::f64::consts::PI * fc * t).sin() / (std::f64::consts::PI * t)
                };
                let w =
                    0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
                sinc * w
            })
            .collect();
        let sum: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v /= sum);
        Ok(h)
    }
}

fn check_cutoff(cutoff: f64, rate: f64) -> Result<()> {
    if !(rate > 0.0) || !(cutoff > 0.0) || cutoff >= rate / 2.0 {
        return Err(Error::InvalidInput(format!(
            "low-pass cutoff {cutoff} Hz must lie in (0, {}) for rate {rate} Hz",
            rate / 2.0
        )));
    }
    Ok(())
}

fn fir_forward(h: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            let kmax = n.min(h.len() - 1);
            (0..=kmax).map(|k| h[k] * x[n - k]).sum()
        })
        .collect()
}

/// Zero-phase forward–backward FIR filtering with odd-reflection padding of
/// the edges, so a constant input passes through unchanged.
pub fn filtfilt(h: &[f64], x: &[f64]) -> Vec<f64> {
    if x.len() < 2 || h.is_empty() {
        return x.to_vec();
    }
    let pad = (3 * h.len()).min(x.len() - 1);
    let (first, last) = (x[0], x[x.len() - 1]);
    let mut ext = Vec::with_capacity(x.len() + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[x.len() - 1 - i]));
    let mut y = fir_forward(h, &ext);
    y.reverse();
    let mut y = fir_forward(h, &y);
    y.reverse();
    y[pad..pad + x.len()].to_vec()
}

pub fn lowpass_with(x: &[f64], cutoff: f64, rate: f64, design: &FirDesign) -> Result<Vec<f64>> {
    let h = design.taps(cutoff, rate)?;
    Ok(filtfilt(&h, x))
}

pub fn lowpass(x: &[f64], cutoff: f64, rate: f64) -> Result<Vec<f64>> {
    lowpass_with(x, cutoff, rate, &FirDesign::default())
}
