//! Independent reference implementations for tests. Nothing here calls the
//! transform code under test.
#![allow(dead_code)]

use std::f64::consts::PI;

use freqreg::DenseTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> DenseTensor {
    let len = shape.iter().product();
    DenseTensor::new(shape.to_vec(), (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_shape(rng: &mut impl Rng, max_rank: usize, max_dim: usize) -> Vec<usize> {
    let rank = rng.random_range(1..=max_rank);
    (0..rank).map(|_| rng.random_range(1..=max_dim)).collect()
}

pub fn multi_index(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = flat % shape[a];
        flat /= shape[a];
    }
    idx
}

fn cos_product(x: &[usize], y: &[usize], shape: &[usize]) -> f64 {
    x.iter().zip(y).zip(shape).map(|((&xi, &yi), &d)| (PI / d as f64 * (yi as f64 + 0.5) * xi as f64).cos()).product()
}

/// `W(y) = sum_{|x|_1 < eps} T(x) prod_i cos(pi / D_i (y_i + 1/2) x_i)` by direct summation.
pub fn brute_idct(coeffs: &DenseTensor, epsilon: usize) -> Vec<f64> {
    let shape = coeffs.shape();
    let n = coeffs.len();
    (0..n)
        .map(|yf| {
            let y = multi_index(yf, shape);
            (0..n)
                .map(|xf| {
                    let x = multi_index(xf, shape);
                    if x.iter().sum::<usize>() >= epsilon {
                        return 0.0;
                    }
                    coeffs.data()[xf] * cos_product(&x, &y, shape)
                })
                .sum()
        })
        .collect()
}

/// Exact inverse of [`brute_idct`] at full threshold, by direct summation.
pub fn brute_dct(values: &DenseTensor) -> Vec<f64> {
    let shape = values.shape();
    let n = values.len();
    (0..n)
        .map(|xf| {
            let x = multi_index(xf, shape);
            let scale: f64 =
                x.iter().zip(shape).map(|(&xi, &d)| if xi == 0 { 1.0 / d as f64 } else { 2.0 / d as f64 }).product();
            scale * (0..n).map(|yf| values.data()[yf] * cos_product(&x, &multi_index(yf, shape), shape)).sum::<f64>()
        })
        .collect()
}

/// Number of index vectors with L1 norm below `epsilon`, by enumeration.
pub fn brute_count(shape: &[usize], epsilon: usize) -> usize {
    let n: usize = shape.iter().product();
    (0..n).filter(|&f| multi_index(f, shape).iter().sum::<usize>() < epsilon).count()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `|a - n| / max(|a|, |n|, floor)`
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Central difference of `f` at `x` along coordinate `i`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[i] += h;
    let mut m = x.to_vec();
    m[i] -= h;
    (f(&p) - f(&m)) / (2.0 * h)
}
