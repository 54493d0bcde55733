use crate::error::{FreqError, Result};

/// Maximum number of axes a tensor may carry.
pub const MAX_RANK: usize = 4;

/// Row-major real tensor with 1 to 4 axes.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(FreqError::Rank(shape.len()));
    }
    if shape.contains(&0) {
        return Err(FreqError::Shape { shape: shape.to_vec(), reason: "dimensions must be positive".into() });
    }
    Ok(shape.iter().product())
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(FreqError::Shape { shape, reason: format!("data length {} does not match", data.len()) });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FreqError::NonFinite(i));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = check_shape(&shape)?;
        Ok(Self { shape, data: vec![0.0; len] })
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Result<Self> {
        let len = check_shape(&shape)?;
        Ok(Self { shape, data: vec![value; len] })
    }

    /// Builds a tensor without validating finiteness. Shape must already be valid.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != self.data.len() {
            return Err(FreqError::ShapeMismatch { expected: self.shape, actual: shape });
        }
        Ok(Self { shape, data: self.data })
    }

    pub fn dot(&self, other: &DenseTensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(FreqError::ShapeMismatch { expected: self.shape.clone(), actual: other.shape.clone() });
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Row-major strides for the tensor's shape.
    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut out = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * shape[i + 1];
    }
    out
}

/// Decomposes a flat row-major offset into a multi-index.
pub(crate) fn unravel(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for axis in (0..shape.len()).rev() {
        out[axis] = flat % shape[axis];
        flat /= shape[axis];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(DenseTensor::zeros(vec![]), Err(FreqError::Rank(0)));
        assert_eq!(DenseTensor::zeros(vec![1, 1, 1, 1, 1]), Err(FreqError::Rank(5)));
        assert!(DenseTensor::zeros(vec![3, 0]).is_err());
        assert!(DenseTensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let err = DenseTensor::new(vec![3], vec![0.0, f64::NAN, 1.0]).unwrap_err();
        assert_eq!(err, FreqError::NonFinite(1));
    }

    #[test]
    fn strides_and_unravel() {
        assert_eq!(strides(&[2, 3, 4]), vec![12, 4, 1]);
        let mut idx = [0; 3];
        unravel(23, &[2, 3, 4], &mut idx);
        assert_eq!(idx, [1, 2, 3]);
    }
}
