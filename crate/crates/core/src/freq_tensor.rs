//! Parameter tensors kept as truncated frequency coefficients.

use std::sync::Arc;

use rand::Rng;

use crate::dct::{basis_energy, dct_nd, idct_nd, idct_nd_adjoint};
use crate::error::{invalid, FreqError, Result};
use crate::tensor::{unravel, DenseTensor, MAX_RANK};
use crate::zigzag::ZigzagPlan;

/// Frequency-domain coefficients `T(x)` with an L1 truncation threshold.
///
/// Every coefficient with `|x|_1 >= epsilon` is stored as exactly zero, so
/// reconstruction is a plain inverse transform with no mask multiply.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTensor {
    plan: Arc<ZigzagPlan>,
    coeffs: Vec<f64>,
    epsilon: usize,
}

impl FrequencyTensor {
    /// Wraps raw coefficients, zeroing everything at or beyond `epsilon`.
    pub fn from_coefficients(coeffs: DenseTensor, epsilon: usize) -> Result<Self> {
        let plan = Arc::new(ZigzagPlan::build(coeffs.shape())?);
        Self::with_plan(plan, coeffs.into_data(), epsilon)
    }

    pub(crate) fn with_plan(plan: Arc<ZigzagPlan>, coeffs: Vec<f64>, epsilon: usize) -> Result<Self> {
        if epsilon < 1 {
            return Err(invalid("epsilon", "must be at least 1"));
        }
        if coeffs.len() != plan.total() {
            return Err(FreqError::Shape {
                shape: plan.shape().to_vec(),
                reason: format!("{} coefficients supplied", coeffs.len()),
            });
        }
        let epsilon = epsilon.min(plan.full_threshold());
        let mut t = Self { plan, coeffs, epsilon };
        t.enforce();
        Ok(t)
    }

    /// Forward-transforms a spatial tensor and truncates it.
    pub fn from_spatial(w: &DenseTensor, epsilon: usize) -> Result<Self> {
        let coeffs = dct_nd(w)?;
        Self::from_coefficients(coeffs, epsilon)
    }

    /// Draws the spatial tensor from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// then transforms and truncates it.
    pub fn init_uniform<R: Rng + ?Sized>(
        shape: Vec<usize>,
        fan_in: usize,
        epsilon: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = uniform_spatial(shape, fan_in, rng)?;
        Self::from_spatial(&w, epsilon)
    }

    /// Rebuilds a tensor from its surviving coefficients in canonical order.
    pub fn from_survivors(shape: &[usize], epsilon: usize, survivors: &[f64]) -> Result<Self> {
        let plan = Arc::new(ZigzagPlan::build(shape)?);
        if epsilon < 1 || epsilon > plan.full_threshold() {
            return Err(invalid("epsilon", format!("{epsilon} is outside [1, {}]", plan.full_threshold())));
        }
        let kept = plan.count(epsilon);
        if survivors.len() != kept {
            return Err(invalid("survivors", format!("expected {kept} coefficients, got {}", survivors.len())));
        }
        let mut coeffs = vec![0.0; plan.total()];
        for (&flat, &v) in plan.order()[..kept].iter().zip(survivors) {
            coeffs[flat] = v;
        }
        Ok(Self { plan, coeffs, epsilon })
    }

    pub fn shape(&self) -> &[usize] {
        self.plan.shape()
    }

    pub fn plan(&self) -> &ZigzagPlan {
        &self.plan
    }

    pub fn epsilon(&self) -> usize {
        self.epsilon
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn total(&self) -> usize {
        self.coeffs.len()
    }

    /// Number of stored coefficients, `counts[epsilon]`.
    pub fn nonzero_budget(&self) -> usize {
        self.plan.count(self.epsilon)
    }

    pub fn is_full(&self) -> bool {
        self.epsilon >= self.plan.full_threshold()
    }

    /// Surviving coefficients in canonical zigzag order.
    pub fn survivors(&self) -> Vec<f64> {
        self.plan.order()[..self.nonzero_budget()].iter().map(|&flat| self.coeffs[flat]).collect()
    }

    pub fn coefficient_tensor(&self) -> DenseTensor {
        DenseTensor::from_parts(self.shape().to_vec(), self.coeffs.clone())
    }

    /// Spatial tensor `W = IDCT_N(T)`.
    pub fn reconstruct(&self) -> DenseTensor {
        let t = DenseTensor::from_parts(self.shape().to_vec(), self.coeffs.clone());
        idct_nd(&t).expect("plan shape is valid")
    }

    /// Gradient of a loss with respect to the coefficients, given its
    /// gradient with respect to the reconstructed spatial tensor.
    pub fn backward(&self, grad_w: &DenseTensor) -> Result<DenseTensor> {
        if grad_w.shape() != self.shape() {
            return Err(FreqError::ShapeMismatch { expected: self.shape().to_vec(), actual: grad_w.shape().to_vec() });
        }
        let mut g = idct_nd_adjoint(grad_w)?;
        self.zero_truncated(g.data_mut());
        Ok(g)
    }

    /// Zeroes coefficients with `|x|_1 >= new_epsilon`. The threshold never grows.
    pub fn apply_truncation(&mut self, new_epsilon: usize) -> Result<()> {
        if new_epsilon < 1 {
            return Err(invalid("epsilon", "must be at least 1"));
        }
        let new_epsilon = new_epsilon.min(self.plan.full_threshold());
        if new_epsilon > self.epsilon {
            return Err(FreqError::ThresholdGrowth { current: self.epsilon, requested: new_epsilon });
        }
        self.epsilon = new_epsilon;
        self.enforce();
        Ok(())
    }

    pub fn truncated(&self, new_epsilon: usize) -> Result<Self> {
        let mut t = self.clone();
        t.apply_truncation(new_epsilon)?;
        Ok(t)
    }

    /// Zeroes entries of a coefficient-shaped buffer that this tensor truncates.
    pub fn zero_truncated(&self, buf: &mut [f64]) {
        if self.is_full() {
            return;
        }
        for (v, &n) in buf.iter_mut().zip(self.plan.norms()) {
            if n as usize >= self.epsilon {
                *v = 0.0;
            }
        }
    }

    /// `1 / prod_i energy(x_i)` for every coefficient.
    ///
    /// Scaling the coefficient gradient by this turns it into the forward
    /// transform of the spatial gradient, so a descent step on `T` moves `W`
    /// exactly as a spatial step would when nothing is truncated.
    pub fn inverse_basis_energy(&self) -> Vec<f64> {
        let shape = self.shape();
        let mut idx = [0usize; MAX_RANK];
        (0..self.total())
            .map(|flat| {
                unravel(flat, shape, &mut idx[..shape.len()]);
                let e: f64 = shape.iter().zip(&idx).map(|(&d, &x)| basis_energy(x, d)).product();
                1.0 / e
            })
            .collect()
    }

    /// Mutable access for optimizers. Callers must keep truncated entries at
    /// zero; [`FrequencyTensor::descend`] does this.
    pub(crate) fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    fn enforce(&mut self) {
        let eps = self.epsilon;
        if eps >= self.plan.full_threshold() {
            return;
        }
        for (v, &n) in self.coeffs.iter_mut().zip(self.plan.norms()) {
            if n as usize >= eps {
                *v = 0.0;
            }
        }
    }
}

pub(crate) fn uniform_spatial<R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Result<DenseTensor> {
    if fan_in == 0 {
        return Err(invalid("fan_in", "must be positive"));
    }
    let bound = 1.0 / (fan_in as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
    DenseTensor::new(shape, data)
}
