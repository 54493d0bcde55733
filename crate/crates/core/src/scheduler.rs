//! Dynamic tail truncation: the kept ratio decays geometrically toward a floor,
//! `beta_n = beta_{n-1} - gamma * (beta_{n-1} - floor)`.

use crate::error::{invalid, Result};
use crate::freq_tensor::FrequencyTensor;
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationSchedule {
    beta: f64,
    gamma: f64,
    epsilon_ratio: f64,
    epoch: usize,
}

impl TruncationSchedule {
    /// Starts at `beta = 1`.
    pub fn new(gamma: f64, epsilon_ratio: f64) -> Result<Self> {
        Self::starting_at(1.0, gamma, epsilon_ratio)
    }

    pub fn starting_at(beta: f64, gamma: f64, epsilon_ratio: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(invalid("gamma", format!("{gamma} is outside (0, 1)")));
        }
        if !(epsilon_ratio > 0.0 && epsilon_ratio <= 1.0) {
            return Err(invalid("epsilon_ratio", format!("{epsilon_ratio} is outside (0, 1]")));
        }
        if !(beta >= epsilon_ratio && beta <= 1.0) {
            return Err(invalid("beta", format!("{beta} is outside [{epsilon_ratio}, 1]")));
        }
        Ok(Self { beta, gamma, epsilon_ratio, epoch: 0 })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn epsilon_ratio(&self) -> f64 {
        self.epsilon_ratio
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn step(&mut self) {
        let next = self.beta - self.gamma * (self.beta - self.epsilon_ratio);
        // keep the floor invariant under rounding
        self.beta = next.max(self.epsilon_ratio);
        self.epoch += 1;
    }

    /// `floor + (1 - gamma)^n * (beta_0 - floor)`.
    pub fn closed_form(beta0: f64, gamma: f64, epsilon_ratio: f64, n: usize) -> f64 {
        epsilon_ratio + (1.0 - gamma).powi(n as i32) * (beta0 - epsilon_ratio)
    }

    /// Threshold for each tensor at the current ratio, never above its current one.
    pub fn thresholds_for<'a>(
        &self,
        tensors: impl IntoIterator<Item = &'a FrequencyTensor>,
        min_keep: usize,
    ) -> Result<Vec<usize>> {
        tensors
            .into_iter()
            .map(|t| {
                let floor = min_keep.clamp(1, t.total());
                let (eps, _) = t.plan().threshold_for_ratio(self.beta, floor)?;
                Ok(eps.min(t.epsilon()))
            })
            .collect()
    }

    pub fn thresholds_for_model(&self, model: &Model, min_keep: usize) -> Result<Vec<usize>> {
        self.thresholds_for(model.frequency_tensors(), min_keep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;

    #[test]
    fn one_step() {
        let mut s = TruncationSchedule::new(0.01, 0.01).unwrap();
        s.step();
        assert!((s.beta() - 0.9901).abs() < 1e-15);
        assert_eq!(s.epoch(), 1);
    }

    #[test]
    fn fixed_point() {
        let mut s = TruncationSchedule::starting_at(0.2, 0.3, 0.2).unwrap();
        s.step();
        assert_eq!(s.beta(), 0.2);
    }

    #[test]
    fn hundred_steps_match_closed_form() {
        let mut s = TruncationSchedule::new(0.01, 0.01).unwrap();
        for _ in 0..100 {
            s.step();
        }
        let expect = TruncationSchedule::closed_form(1.0, 0.01, 0.01, 100);
        assert!((s.beta() - expect).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TruncationSchedule::new(0.0, 0.01).is_err());
        assert!(TruncationSchedule::new(1.0, 0.01).is_err());
        assert!(TruncationSchedule::new(0.1, 0.0).is_err());
        assert!(TruncationSchedule::new(0.1, 1.5).is_err());
        assert!(TruncationSchedule::starting_at(0.05, 0.1, 0.1).is_err());
    }

    #[test]
    fn thresholds_follow_ratio() {
        let t = FrequencyTensor::from_coefficients(DenseTensor::zeros(vec![3, 3]).unwrap(), 99).unwrap();
        let s = TruncationSchedule::starting_at(0.34, 0.01, 0.01).unwrap();
        assert_eq!(s.thresholds_for([&t], 1).unwrap(), vec![2]);
        let full = TruncationSchedule::new(0.01, 0.01).unwrap();
        assert_eq!(full.thresholds_for([&t], 1).unwrap(), vec![5]);
        let small = t.truncated(2).unwrap();
        assert_eq!(full.thresholds_for([&small], 1).unwrap(), vec![2]);
    }
}
