use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of rows in a standardized sequence: 19 electrodes plus the
/// relative-amplitude channel.
pub const STANDARD_CHANNELS: usize = 20;
pub const AMPLITUDE_ROW: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// One min/max over all present channels jointly.
    #[default]
    Sequence,
    /// Each present channel scaled to its own extremes.
    PerChannel,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceSource {
    pub dataset: String,
    pub subject: u32,
    pub session: u32,
    pub label: Option<u32>,
    pub start_sample: u64,
}

/// A `20 × L` unitless window ready for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedSequence {
    /// Row-major `rows × cols`.
    pub data: Vec<f64>,
    rows: usize,
    cols: usize,
    pub source: SequenceSource,
    /// Dataset-wide `max − min` in µV used for the amplitude channel.
    pub dataset_range: f64,
}

impl StandardizedSequence {
    pub fn from_parts(
        data: Vec<f64>,
        rows: usize,
        cols: usize,
        source: SequenceSource,
        dataset_range: f64,
    ) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "sequence data does not match shape"
        );
        Self {
            data,
            rows,
            cols,
            source,
            dataset_range,
        }
    }

    pub fn channels(&self) -> usize {
        self.rows
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.cols == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn amplitude(&self) -> f64 {
        self.data[AMPLITUDE_ROW * self.cols]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.data.clone(), &[self.rows, self.cols])
            .expect("standardized sequences hold finite values")
    }

    /// The first `len` samples of every row.
    pub fn truncated(&self, len: usize) -> Self {
        let len = len.min(self.cols);
        let data = (0..self.rows)
            .flat_map(|r| self.row(r)[..len].iter().copied())
            .collect();
        Self {
            data,
            rows: self.rows,
            cols: len,
            source: self.source.clone(),
            dataset_range: self.dataset_range,
        }
    }
}

fn extremes<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Option<(f64, f64)> {
    let mut any = false;
    let (lo, hi) = rows
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            any = true;
            (lo.min(v), hi.max(v))
        });
    any.then_some((lo, hi))
}

/// `2(x − min)/(max − min) − 1`, written so that the extremes land exactly
/// on ±1.
fn affine(v: f64, lo: f64, hi: f64) -> f64 {
    let r = hi - lo;
    ((v - lo) - (hi - v)) / r
}

/// Scales one window of the 19 target rows (µV, `None` = missing electrode)
/// into a standardized sequence with the amplitude channel appended.
pub fn scale_sequence(
    rows: &[Option<&[f64]>],
    dataset_range: f64,
    mode: ScaleMode,
    source: SequenceSource,
) -> Result<StandardizedSequence> {
    if rows.len() != AMPLITUDE_ROW {
        return Err(Error::InvalidInput(format!(
            "expected {AMPLITUDE_ROW} electrode rows, got {}",
            rows.len()
        )));
    }
    if !(dataset_range > 0.0) {
        return Err(Error::InvalidInput(format!(
            "dataset range {dataset_range} must be positive"
        )));
    }
    let len = rows
        .iter()
        .flatten()
        .map(|r| r.len())
        .next()
        .ok_or_else(|| Error::InvalidInput("no electrode present in sequence".into()))?;
    if len == 0 || rows.iter().flatten().any(|r| r.len() != len) {
        return Err(Error::InvalidInput(
            "present rows must share a non-zero length".into(),
        ));
    }
    let (lo, hi) = extremes(rows.iter().flatten().copied()).expect("at least one row");
    let mut data = vec![0.0; STANDARD_CHANNELS * len];
    if hi > lo {
        for (i, row) in rows.iter().enumerate() {
            let Some(row) = row else { continue };
            let (rlo, rhi) = match mode {
                ScaleMode::Sequence => (lo, hi),
                ScaleMode::PerChannel => extremes(std::iter::once(*row)).expect("non-empty"),
            };
            let dst = &mut data[i * len..(i + 1) * len];
            if rhi > rlo {
                dst.iter_mut()
                    .zip(row.iter())
                    .for_each(|(d, &v)| *d = affine(v, rlo, rhi));
            }
        }
        let amp = (hi - lo) / dataset_range;
        data[AMPLITUDE_ROW * len..]
            .iter_mut()
            .for_each(|v| *v = amp);
    }
    Ok(StandardizedSequence::from_parts(
        data,
        STANDARD_CHANNELS,
        len,
        source,
        dataset_range,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows_with<'a>(present: &[(usize, &'a [f64])]) -> Vec<Option<&'a [f64]>> {
        let mut rows = vec![None; 19];
        for &(i, r) in present {
            rows[i] = Some(r);
        }
        rows
    }

    #[test]
    fn affine_map_reference_point() {
        let x = [-37.5, 0.0, 12.5];
        let s = scale_sequence(
            &rows_with(&[(0, &x)]),
            200.0,
            ScaleMode::Sequence,
            Default::default(),
        )
        .unwrap();
        assert_eq!(s.row(0), &[-1.0, 0.5, 1.0]);
        assert_eq!(s.amplitude(), 0.25);
        assert!(s.row(5).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fixed_point_when_already_scaled() {
        let x = [-1.0, 0.25, 1.0];
        let s = scale_sequence(
            &rows_with(&[(3, &x)]),
            8.0,
            ScaleMode::Sequence,
            Default::default(),
        )
        .unwrap();
        assert_eq!(s.row(3), &x);
        assert_eq!(s.amplitude(), 2.0 / 8.0);
    }

    #[test]
    fn constant_sequence_is_all_zero() {
        let x = [4.0; 6];
        let s = scale_sequence(
            &rows_with(&[(1, &x)]),
            8.0,
            ScaleMode::Sequence,
            Default::default(),
        )
        .unwrap();
        assert!(s.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn per_channel_mode_scales_rows_independently() {
        let a = [0.0, 10.0];
        let b = [0.0, 1.0];
        let s = scale_sequence(
            &rows_with(&[(0, &a), (1, &b)]),
            20.0,
            ScaleMode::PerChannel,
            Default::default(),
        )
        .unwrap();
        assert_eq!(s.row(0), &[-1.0, 1.0]);
        assert_eq!(s.row(1), &[-1.0, 1.0]);
        assert_eq!(s.amplitude(), 0.5);
    }

    #[test]
    fn invalid_inputs() {
        let x = [1.0, 2.0];
        assert!(scale_sequence(
            &rows_with(&[(0, &x)]),
            0.0,
            ScaleMode::Sequence,
            Default::default()
        )
        .is_err());
        assert!(scale_sequence(
            &rows_with(&[]),
            1.0,
            ScaleMode::Sequence,
            Default::default()
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn extremes_hit_unit_bounds(
            a in proptest::collection::vec(-500.0f64..500.0, 2..40),
            offset in -100.0f64..100.0,
        ) {
            let b: Vec<f64> = a.iter().rev().map(|v| v * 0.5 + offset).collect();
            let rows = rows_with(&[(2, &a), (9, &b)]);
            let s = scale_sequence(&rows, 5000.0, ScaleMode::Sequence, Default::default()).unwrap();
            let vals: Vec<f64> = [2usize, 9].iter().flat_map(|&i| s.row(i).to_vec()).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let spread = a.iter().chain(&b).copied().fold(f64::NEG_INFINITY, f64::max)
                - a.iter().chain(&b).copied().fold(f64::INFINITY, f64::min);
            if spread > 0.0 {
                prop_assert_eq!(hi, 1.0);
                prop_assert_eq!(lo, -1.0);
            }
            prop_assert!(vals.iter().all(|v| (-1.0..=1.0).contains(v)));
            for i in (0..19).filter(|i| *i != 2 && *i != 9) {
                prop_assert!(s.row(i).iter().all(|&v| v == 0.0));
            }
        }

        #[test]
        fn amplitude_invariant_to_joint_rescaling(
            a in proptest::collection::vec(-50.0f64..50.0, 3..30),
            gain in 0.01f64..100.0,
            shift in -1000.0f64..1000.0,
        ) {
            let scaled: Vec<f64> = a.iter().map(|v| v * gain + shift).collect();
            let s1 = scale_sequence(&rows_with(&[(0, &a)]), 300.0, ScaleMode::Sequence, Default::default()).unwrap();
            let s2 = scale_sequence(&rows_with(&[(0, &scaled)]), 300.0 * gain, ScaleMode::Sequence, Default::default()).unwrap();
            prop_assert!((s1.amplitude() - s2.amplitude()).abs() < 1e-9);
        }
    }
}
