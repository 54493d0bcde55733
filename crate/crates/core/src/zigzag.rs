//! Index ordering by L1 norm ("zigzag" shells) and the truncation masks built on it.

use crate::error::{invalid, Result};
use crate::tensor::{check_shape, unravel, DenseTensor, MAX_RANK};

/// Canonical ordering of every index vector of a shape.
///
/// Vectors are sorted by L1 norm, ties broken lexicographically. `counts[e]`
/// is the number of index vectors with norm strictly below `e`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZigzagPlan {
    shape: Vec<usize>,
    order: Vec<usize>,
    norms: Vec<u32>,
    counts: Vec<usize>,
}

impl ZigzagPlan {
    pub fn build(shape: &[usize]) -> Result<Self> {
        let total = check_shape(shape)?;
        let max_norm: usize = shape.iter().map(|d| d - 1).sum();

        let mut norms = Vec::with_capacity(total);
        let mut idx = [0usize; MAX_RANK];
        for flat in 0..total {
            unravel(flat, shape, &mut idx[..shape.len()]);
            norms.push(idx[..shape.len()].iter().sum::<usize>() as u32);
        }

        // Counting sort by norm; row-major scan order is already lexicographic.
        let mut shell_sizes = vec![0usize; max_norm + 1];
        for &n in &norms {
            shell_sizes[n as usize] += 1;
        }
        let mut counts = vec![0usize; max_norm + 2];
        for n in 0..=max_norm {
            counts[n + 1] = counts[n] + shell_sizes[n];
        }
        let mut cursor = counts[..=max_norm].to_vec();
        let mut order = vec![0usize; total];
        for (flat, &n) in norms.iter().enumerate() {
            order[cursor[n as usize]] = flat;
            cursor[n as usize] += 1;
        }

        Ok(Self { shape: shape.to_vec(), order, norms, counts })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn total(&self) -> usize {
        self.order.len()
    }

    /// Flat row-major offsets in canonical order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// L1 norm of the index vector at each flat offset.
    pub fn norms(&self) -> &[u32] {
        &self.norms
    }

    /// Smallest threshold that keeps every coefficient: `sum(D_i - 1) + 1`.
    pub fn full_threshold(&self) -> usize {
        self.counts.len() - 1
    }

    /// Number of index vectors with L1 norm `< epsilon`.
    pub fn count(&self, epsilon: usize) -> usize {
        self.counts[epsilon.min(self.full_threshold())]
    }

    /// Whether the coefficient at `flat` survives threshold `epsilon`.
    #[inline]
    pub fn keeps(&self, flat: usize, epsilon: usize) -> bool {
        (self.norms[flat] as usize) < epsilon
    }

    /// Binary tensor with ones where `|x|_1 < epsilon`.
    pub fn mask(&self, epsilon: usize) -> Result<DenseTensor> {
        if epsilon < 1 {
            return Err(invalid("epsilon", "must be at least 1"));
        }
        let data = self.norms.iter().map(|&n| if (n as usize) < epsilon { 1.0 } else { 0.0 }).collect();
        Ok(DenseTensor::from_parts(self.shape.clone(), data))
    }

    /// Largest threshold whose kept count stays within
    /// `max(min_keep, ceil(ratio * total))`. Returns `(epsilon, kept)`.
    pub fn threshold_for_ratio(&self, ratio: f64, min_keep: usize) -> Result<(usize, usize)> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(invalid("ratio", format!("{ratio} is outside (0, 1]")));
        }
        let total = self.total();
        if min_keep < 1 || min_keep > total {
            return Err(invalid("min_keep", format!("{min_keep} is outside [1, {total}]")));
        }
        let target = min_keep.max(ceil_fraction(ratio, total));
        // counts is non-decreasing; find the last threshold with count <= target.
        let above = self.counts[1..].partition_point(|&c| c <= target);
        let epsilon = above.max(1);
        Ok((epsilon, self.counts[epsilon]))
    }
}

/// `ceil(ratio * total)` with products like `0.07 * 100` not rounding up to 8.
fn ceil_fraction(ratio: f64, total: usize) -> usize {
    let exact = ratio * total as f64;
    let nearest = exact.round();
    if (exact - nearest).abs() <= 1e-9 * exact.max(1.0) {
        nearest as usize
    } else {
        exact.ceil() as usize
    }
}
