#![allow(dead_code)]

pub mod gradients;

use corenet_core::autodiff::{Tape, Tensor, Var};
use corenet_oracle::Arr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng, n: usize, a: f32) -> Vec<f32> {
    (0..n).map(|_| r.random_range(-a..a)).collect()
}

pub fn tensor(r: &mut ChaCha8Rng, shape: &[usize], a: f32) -> Tensor {
    Tensor::new(shape, uniform(r, shape.iter().product(), a)).unwrap()
}

pub fn f64s(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

pub fn arr(t: &Tensor) -> Arr {
    let (b, c, l) = t.dims3().unwrap();
    Arr::new(b, c, l, f64s(t.data()))
}

/// `Σ c_i · y_i` on the tape, for a fixed random projection `c`.
pub fn project(tape: &mut Tape, y: Var, c: &[f32]) -> Var {
    let shape = tape.value(y).shape().to_vec();
    let n = tape.value(y).numel();
    let cv = tape.constant(Tensor::new(&shape, c.to_vec()).unwrap());
    let m = tape.mul(y, cv).unwrap();
    let mean = tape.mean_all(m);
    tape.scale(mean, n as f32)
}

pub fn dot(y: &[f64], c: &[f32]) -> f64 {
    y.iter().zip(c).map(|(a, &b)| a * b as f64).sum()
}

/// Largest `|a − n| / max(|a|, |n|, floor)` between analytic and numeric gradients.
pub fn max_rel(analytic: &[f32], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| corenet_oracle::rel_err(a as f64, n, floor))
        .fold(0.0, f64::max)
}

/// Numeric gradient of `f` at `x` over every coordinate.
pub fn numeric_grad(x: &[f32], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut xs = f64s(x);
    (0..xs.len()).map(|i| corenet_oracle::central_diff(&mut xs, i, h, &mut f)).collect()
}

/// Numeric gradient over a subset of coordinates.
pub fn numeric_grad_at(x: &[f32], idx: &[usize], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut xs = f64s(x);
    idx.iter().map(|&i| corenet_oracle::central_diff(&mut xs, i, h, &mut f)).collect()
}
