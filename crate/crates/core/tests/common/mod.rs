//! Shared helpers for the integration tests.
#![allow(dead_code)]

pub mod ops;

use bendr::rng::SeededRng;
use bendr::{Result, Tensor};
use rand::Rng;

/// Step for central differences.
pub const FD_STEP: f64 = 1e-6;

pub fn param(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    let t = Tensor::randn(shape, 1.0, rng);
    t.set_requires_grad(true);
    t
}

pub fn shape2(rng: &mut SeededRng, max_r: usize, max_c: usize) -> [usize; 2] {
    [rng.random_range(1..=max_r), rng.random_range(1..=max_c)]
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`, with an absolute
/// floor so that two near-zero gradients compare as equal. Central
/// differences carry round-off near `1e-10 · |loss|`, so the floor sits well
/// above that.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b)).max(1e-4);
    norm(&diff) / scale
}

/// Compares reverse-mode gradients of `Σ w ⊙ f(inputs)` (fixed random `w`)
/// with central differences. Returns the largest relative error over the
/// inputs.
pub fn grad_check(
    inputs: &[Tensor],
    rng: &mut SeededRng,
    f: impl Fn(&[Tensor]) -> Result<Tensor>,
) -> Result<f64> {
    let probe = f(inputs)?;
    let w = Tensor::randn(probe.shape(), 1.0, rng);
    let loss_of = |xs: &[Tensor]| -> Result<Tensor> { f(xs)?.mul(&w)?.sum() };

    inputs.iter().for_each(Tensor::zero_grad);
    loss_of(inputs)?.backward()?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let mut worst = 0.0f64;
    for (k, t) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; t.numel()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = t.data()[i];
            t.data_mut()[i] = orig + FD_STEP;
            let up = loss_of(inputs)?.item();
            t.data_mut()[i] = orig - FD_STEP;
            let down = loss_of(inputs)?.item();
            t.data_mut()[i] = orig;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&analytic[k], &numeric));
    }
    inputs.iter().for_each(Tensor::zero_grad);
    Ok(worst)
}
