//! Central finite-difference check of frequency-tensor gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::freq_tensor::FrequencyTensor;
use crate::tensor::{check_shape, DenseTensor};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const PASS_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOutcome {
    /// Surviving coefficients compared against finite differences.
    pub checked: usize,
    pub max_rel_error: f64,
    /// Whether every truncated coefficient received exactly zero gradient.
    pub truncated_exact_zero: bool,
}

impl GradcheckOutcome {
    pub fn passed(&self) -> bool {
        self.truncated_exact_zero && self.max_rel_error < PASS_THRESHOLD
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Checks `backward` on a random tensor against the scalar loss
/// `L(W) = sum_y a_y * W_y + 0.5 * W_y^2 + 0.1 * sin(W_y)`, `W = reconstruct(T)`.
pub fn check_frequency_tensor(shape: &[usize], epsilon: usize, seed: u64, step: f64) -> Result<GradcheckOutcome> {
    let len = check_shape(shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let weights: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = FrequencyTensor::from_coefficients(DenseTensor::new(shape.to_vec(), coeffs)?, epsilon)?;

    let loss = |w: &DenseTensor| -> f64 {
        w.data().iter().zip(&weights).map(|(&v, &a)| a * v + 0.5 * v * v + 0.1 * v.sin()).sum()
    };
    let w = t.reconstruct();
    let grad_w: Vec<f64> = w.data().iter().zip(&weights).map(|(&v, &a)| a + v + 0.1 * v.cos()).collect();
    let analytic = t.backward(&DenseTensor::new(shape.to_vec(), grad_w)?)?;

    let mut max_rel_error = 0.0f64;
    let mut checked = 0;
    let mut truncated_exact_zero = true;
    let base = t.coefficient_tensor();
    for flat in 0..len {
        if !t.plan().keeps(flat, t.epsilon()) {
            truncated_exact_zero &= analytic.data()[flat] == 0.0;
            continue;
        }
        let mut plus = base.clone();
        plus.data_mut()[flat] += step;
        let mut minus = base.clone();
        minus.data_mut()[flat] -= step;
        let lp = loss(&FrequencyTensor::from_coefficients(plus, t.epsilon())?.reconstruct());
        let lm = loss(&FrequencyTensor::from_coefficients(minus, t.epsilon())?.reconstruct());
        let numeric = (lp - lm) / (2.0 * step);
        max_rel_error = max_rel_error.max(relative_error(analytic.data()[flat], numeric));
        checked += 1;
    }
    Ok(GradcheckOutcome { checked, max_rel_error, truncated_exact_zero })
}
