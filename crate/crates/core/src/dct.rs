//! Separable cosine transforms.
//!
//! The inverse transform is a DCT-III whose DC term is not halved:
//!
//! ```text
//! W(y) = sum_x T(x) * cos(pi / D * (y + 1/2) * x)
//! ```
//!
//! The forward transform is its exact inverse, `T(0) = mean(W)` and
//! `T(x) = 2/D * sum_y W(y) * cos(...)` for `x >= 1`. The adjoint is the
//! transpose of the inverse and is what gradients flow through.
//!
//! Every N-D transform is applied one axis at a time as a dense product with a
//! cached `D x D` cosine matrix. All arithmetic is `f64`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{FreqError, Result};
use crate::tensor::{check_shape, DenseTensor};

/// `cos(pi / len * (y + 1/2) * x)`, with the angle reduced exactly in integers.
pub fn basis_value(y: usize, x: usize, len: usize) -> f64 {
    let period = 4 * len as u128;
    let m = ((2 * y as u128 + 1) * x as u128) % period;
    (PI * m as f64 / (2 * len) as f64).cos()
}

/// Squared norm of basis column `x`: `len` for the DC term, `len / 2` otherwise.
pub fn basis_energy(x: usize, len: usize) -> f64 {
    if x == 0 {
        len as f64
    } else {
        len as f64 / 2.0
    }
}

struct Basis {
    /// `inverse[y * len + x] = cos(pi / len * (y + 1/2) * x)`
    inverse: Vec<f64>,
    /// `forward[x * len + y] = inverse[y * len + x] / energy(x)`
    forward: Vec<f64>,
}

impl Basis {
    fn new(len: usize) -> Self {
        let mut inverse = vec![0.0; len * len];
        let mut forward = vec![0.0; len * len];
        for y in 0..len {
            for x in 0..len {
                let c = basis_value(y, x, len);
                inverse[y * len + x] = c;
                forward[x * len + y] = c / basis_energy(x, len);
            }
        }
        Self { inverse, forward }
    }
}

fn basis(len: usize) -> Arc<Basis> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Basis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard.entry(len).or_insert_with(|| Arc::new(Basis::new(len))).clone()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Inverse,
    Forward,
    Adjoint,
}

/// Row-major `len x len` operator matrix view: (data, row stride, col stride).
fn operator(basis: &Basis, len: usize, kind: Kind) -> (&[f64], isize, isize) {
    let n = len as isize;
    match kind {
        Kind::Inverse => (&basis.inverse, n, 1),
        Kind::Forward => (&basis.forward, n, 1),
        Kind::Adjoint => (&basis.inverse, 1, n),
    }
}

/// Applies the operator along `axis` of a row-major buffer with `shape`.
fn apply_axis(input: &[f64], shape: &[usize], axis: usize, kind: Kind, out: &mut [f64]) {
    let len = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let basis = basis(len);
    let (mat, mrs, mcs) = operator(&basis, len, kind);

    if inner == 1 {
        // out (outer x len) = in (outer x len) * op^T
        unsafe {
            matrixmultiply::dgemm(
                outer,
                len,
                len,
                1.0,
                input.as_ptr(),
                len as isize,
                1,
                mat.as_ptr(),
                mcs,
                mrs,
                0.0,
                out.as_mut_ptr(),
                len as isize,
                1,
            );
        }
        return;
    }

    let block = len * inner;
    for o in 0..outer {
        let src = &input[o * block..(o + 1) * block];
        let dst = &mut out[o * block..(o + 1) * block];
        // dst (len x inner) = op (len x len) * src (len x inner)
        unsafe {
            matrixmultiply::dgemm(
                len,
                len,
                inner,
                1.0,
                mat.as_ptr(),
                mrs,
                mcs,
                src.as_ptr(),
                inner as isize,
                1,
                0.0,
                dst.as_mut_ptr(),
                inner as isize,
                1,
            );
        }
    }
}

fn transform(input: &DenseTensor, kind: Kind) -> Result<DenseTensor> {
    let shape = input.shape().to_vec();
    check_shape(&shape)?;
    let mut cur = input.data().to_vec();
    let mut next = vec![0.0; cur.len()];
    for axis in 0..shape.len() {
        if shape[axis] == 1 {
            // 1x1 operators: inverse and adjoint are identity, forward divides by 1.
            continue;
        }
        apply_axis(&cur, &shape, axis, kind, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(DenseTensor::from_parts(shape, cur))
}

fn transform_1d(values: &[f64], kind: Kind) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(FreqError::Empty);
    }
    let t = DenseTensor::new(vec![values.len()], values.to_vec())?;
    Ok(transform(&t, kind)?.into_data())
}

/// Inverse transform of a coefficient vector.
pub fn idct_1d(coeffs: &[f64]) -> Result<Vec<f64>> {
    transform_1d(coeffs, Kind::Inverse)
}

/// Forward transform; exact inverse of [`idct_1d`].
pub fn dct_1d(values: &[f64]) -> Result<Vec<f64>> {
    transform_1d(values, Kind::Forward)
}

pub fn idct_nd(coeffs: &DenseTensor) -> Result<DenseTensor> {
    transform(coeffs, Kind::Inverse)
}

pub fn dct_nd(values: &DenseTensor) -> Result<DenseTensor> {
    transform(values, Kind::Forward)
}

/// Transpose of [`idct_nd`] applied to a cotangent in the spatial domain.
pub fn idct_nd_adjoint(cotangent: &DenseTensor) -> Result<DenseTensor> {
    transform(cotangent, Kind::Adjoint)
}
