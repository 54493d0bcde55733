//! Layers whose weights are reconstructed from frequency coefficients on each
//! optimizer step: `Z = IDCT(T_W) X + B`. Biases stay in the spatial domain.

use crate::error::{invalid, FreqError, Result};
use crate::freq_tensor::FrequencyTensor;
use crate::tensor::DenseTensor;

/// A layer weight, either frequency-regularized or a plain spatial tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Frequency(FrequencyTensor),
    Plain(DenseTensor),
}

impl Weight {
    pub fn shape(&self) -> &[usize] {
        match self {
            Weight::Frequency(t) => t.shape(),
            Weight::Plain(w) => w.shape(),
        }
    }

    pub fn total(&self) -> usize {
        self.shape().iter().product()
    }

    /// Stored parameter count: surviving coefficients, or every plain weight.
    pub fn kept(&self) -> usize {
        match self {
            Weight::Frequency(t) => t.nonzero_budget(),
            Weight::Plain(w) => w.len(),
        }
    }

    pub fn spatial(&self) -> DenseTensor {
        match self {
            Weight::Frequency(t) => t.reconstruct(),
            Weight::Plain(w) => w.clone(),
        }
    }

    /// Maps a spatial weight gradient onto the stored parameters.
    pub fn backward(&self, grad_w: DenseTensor) -> Result<DenseTensor> {
        match self {
            Weight::Frequency(t) => t.backward(&grad_w),
            Weight::Plain(w) => {
                if w.shape() != grad_w.shape() {
                    return Err(FreqError::ShapeMismatch {
                        expected: w.shape().to_vec(),
                        actual: grad_w.shape().to_vec(),
                    });
                }
                Ok(grad_w)
            }
        }
    }

    pub fn as_frequency(&self) -> Option<&FrequencyTensor> {
        match self {
            Weight::Frequency(t) => Some(t),
            Weight::Plain(_) => None,
        }
    }

    pub(crate) fn as_frequency_mut(&mut self) -> Option<&mut FrequencyTensor> {
        match self {
            Weight::Frequency(t) => Some(t),
            Weight::Plain(_) => None,
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        match self {
            Weight::Frequency(t) => t.coefficients_mut(),
            Weight::Plain(w) => w.data_mut(),
        }
    }
}

/// Gradients produced by a parameterized layer's backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub input: DenseTensor,
    /// Gradient with respect to the stored weight parameters (coefficients
    /// for frequency weights). Truncated coefficients are exactly zero.
    pub weight: DenseTensor,
    pub bias: Option<Vec<f64>>,
}

fn mismatch(expected: Vec<usize>, actual: &[usize]) -> FreqError {
    FreqError::ShapeMismatch { expected, actual: actual.to_vec() }
}

/// `c (m x n) = a (m x k) * b (k x n)` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weight: Weight,
    bias: Option<Vec<f64>>,
    spatial: Option<DenseTensor>,
    input: Option<DenseTensor>,
}

impl DenseLayer {
    /// `weight` has shape `(out, in)`.
    pub fn new(weight: Weight, bias: Option<Vec<f64>>) -> Result<Self> {
        let shape = weight.shape();
        if shape.len() != 2 {
            return Err(invalid("weight", format!("dense weight must be (out, in), got {shape:?}")));
        }
        if let Some(b) = &bias {
            if b.len() != shape[0] {
                return Err(invalid("bias", format!("length {} != out {}", b.len(), shape[0])));
            }
        }
        Ok(Self { weight, bias, spatial: None, input: None })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Weight, Option<&mut Vec<f64>>) {
        self.spatial = None;
        (&mut self.weight, self.bias.as_mut())
    }

    /// Reconstructed spatial weight for the current parameters.
    pub fn spatial_weight(&mut self) -> &DenseTensor {
        self.spatial.get_or_insert_with(|| self.weight.spatial())
    }

    /// `Z = X W^T + b` for `x` of shape `(batch, in)`.
    pub fn forward(&mut self, x: &DenseTensor) -> Result<DenseTensor> {
        let (inf, outf) = (self.in_features(), self.out_features());
        if x.rank() != 2 || x.shape()[1] != inf {
            return Err(mismatch(vec![x.shape()[0], inf], x.shape()));
        }
        let batch = x.shape()[0];
        let w = self.spatial_weight().data().to_vec();
        let mut z = vec![0.0; batch * outf];
        gemm(batch, inf, outf, x.data(), inf, 1, &w, 1, inf, &mut z);
        if let Some(b) = &self.bias {
            for row in z.chunks_mut(outf) {
                for (v, bb) in row.iter_mut().zip(b) {
                    *v += bb;
                }
            }
        }
        self.input = Some(x.clone());
        Ok(DenseTensor::from_parts(vec![batch, outf], z))
    }

    pub fn backward(&mut self, grad_z: &DenseTensor, name: &str) -> Result<LayerGrads> {
        let x = self.input.take().ok_or_else(|| FreqError::NoForwardState(name.to_string()))?;
        let (inf, outf) = (self.in_features(), self.out_features());
        let batch = x.shape()[0];
        if grad_z.shape() != [batch, outf] {
            return Err(mismatch(vec![batch, outf], grad_z.shape()));
        }
        let w = self.spatial_weight().data().to_vec();
        let g = grad_z.data();

        let mut gx = vec![0.0; batch * inf];
        gemm(batch, outf, inf, g, outf, 1, &w, inf, 1, &mut gx);

        let mut gw = vec![0.0; outf * inf];
        gemm(outf, batch, inf, g, 1, outf, x.data(), inf, 1, &mut gw);
        let weight = self.weight.backward(DenseTensor::from_parts(vec![outf, inf], gw))?;

        let bias = self.bias.as_ref().map(|_| {
            let mut gb = vec![0.0; outf];
            for row in g.chunks(outf) {
                for (a, v) in gb.iter_mut().zip(row) {
                    *a += v;
                }
            }
            gb
        });
        Ok(LayerGrads { input: DenseTensor::from_parts(vec![batch, inf], gx), weight, bias })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dLayer {
    weight: Weight,
    bias: Option<Vec<f64>>,
    stride: usize,
    padding: usize,
    spatial: Option<DenseTensor>,
    input: Option<DenseTensor>,
}

impl Conv2dLayer {
    /// `weight` has shape `(out_ch, in_ch, kh, kw)`.
    pub fn new(weight: Weight, bias: Option<Vec<f64>>, stride: usize, padding: usize) -> Result<Self> {
        let shape = weight.shape();
        if shape.len() != 4 {
            return Err(invalid("weight", format!("conv weight must be 4D, got {shape:?}")));
        }
        if stride == 0 {
            return Err(invalid("stride", "must be positive"));
        }
        if let Some(b) = &bias {
            if b.len() != shape[0] {
                return Err(invalid("bias", format!("length {} != out_ch {}", b.len(), shape[0])));
            }
        }
        Ok(Self { weight, bias, stride, padding, spatial: None, input: None })
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    /// `(out_ch, in_ch, kh, kw)`
    pub fn kernel_shape(&self) -> [usize; 4] {
        let s = self.weight.shape();
        [s[0], s[1], s[2], s[3]]
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Weight, Option<&mut Vec<f64>>) {
        self.spatial = None;
        (&mut self.weight, self.bias.as_mut())
    }

    pub fn spatial_weight(&mut self) -> &DenseTensor {
        self.spatial.get_or_insert_with(|| self.weight.spatial())
    }

    fn out_dim(&self, size: usize, k: usize) -> Result<usize> {
        let padded = size + 2 * self.padding;
        if padded < k || !(padded - k).is_multiple_of(self.stride) {
            return Err(invalid(
                "input",
                format!(
                    "size {size} with kernel {k}, padding {}, stride {} gives a non-integer output",
                    self.padding, self.stride
                ),
            ));
        }
        Ok((padded - k) / self.stride + 1)
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [oc, ic, kh, kw] = self.kernel_shape();
        if input.len() != 4 || input[1] != ic {
            return Err(mismatch(vec![input.first().copied().unwrap_or(1), ic, kh, kw], input));
        }
        Ok(vec![input[0], oc, self.out_dim(input[2], kh)?, self.out_dim(input[3], kw)?])
    }

    pub fn forward(&mut self, x: &DenseTensor) -> Result<DenseTensor> {
        let out_shape = self.output_shape(x.shape())?;
        let [oc, ic, kh, kw] = self.kernel_shape();
        let (batch, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
        let (oh, ow) = (out_shape[2], out_shape[3]);
        let (s, p) = (self.stride, self.padding as isize);
        let weight = self.spatial_weight().data().to_vec();
        let xd = x.data();
        let mut out = vec![0.0; batch * oc * oh * ow];

        for b in 0..batch {
            for o in 0..oc {
                let plane = &mut out[(b * oc + o) * oh * ow..(b * oc + o + 1) * oh * ow];
                if let Some(bias) = &self.bias {
                    plane.iter_mut().for_each(|v| *v = bias[o]);
                }
                for c in 0..ic {
                    let src = &xd[(b * ic + c) * h * w..(b * ic + c + 1) * h * w];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = weight[((o * ic + c) * kh + ky) * kw + kx];
                            for oy in 0..oh {
                                let iy = (oy * s + ky) as isize - p;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let row = &src[iy as usize * w..(iy as usize + 1) * w];
                                let dst = &mut plane[oy * ow..(oy + 1) * ow];
                                for (ox, d) in dst.iter_mut().enumerate() {
                                    let ix = (ox * s + kx) as isize - p;
                                    if ix >= 0 && ix < w as isize {
                                        *d += wv * row[ix as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        self.input = Some(x.clone());
        Ok(DenseTensor::from_parts(out_shape, out))
    }

    pub fn backward(&mut self, grad_z: &DenseTensor, name: &str) -> Result<LayerGrads> {
        let x = self.input.take().ok_or_else(|| FreqError::NoForwardState(name.to_string()))?;
        let out_shape = self.output_shape(x.shape())?;
        if grad_z.shape() != out_shape.as_slice() {
            return Err(mismatch(out_shape, grad_z.shape()));
        }
        let [oc, ic, kh, kw] = self.kernel_shape();
        let (batch, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
        let (oh, ow) = (out_shape[2], out_shape[3]);
        let (s, p) = (self.stride, self.padding as isize);
        let weight = self.spatial_weight().data().to_vec();
        let (xd, gd) = (x.data(), grad_z.data());
        let mut gx = vec![0.0; xd.len()];
        let mut gw = vec![0.0; weight.len()];

        for b in 0..batch {
            for o in 0..oc {
                let gplane = &gd[(b * oc + o) * oh * ow..(b * oc + o + 1) * oh * ow];
                for c in 0..ic {
                    let base = (b * ic + c) * h * w;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let widx = ((o * ic + c) * kh + ky) * kw + kx;
                            let wv = weight[widx];
                            let mut acc = 0.0;
                            for oy in 0..oh {
                                let iy = (oy * s + ky) as isize - p;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for ox in 0..ow {
                                    let ix = (ox * s + kx) as isize - p;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = base + iy as usize * w + ix as usize;
                                    let g = gplane[oy * ow + ox];
                                    acc += g * xd[xi];
                                    gx[xi] += g * wv;
                                }
                            }
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }

        let weight = self.weight.backward(DenseTensor::from_parts(vec![oc, ic, kh, kw], gw))?;
        let bias = self.bias.as_ref().map(|_| {
            let mut gb = vec![0.0; oc];
            for (i, plane) in gd.chunks(oh * ow).enumerate() {
                gb[i % oc] += plane.iter().sum::<f64>();
            }
            gb
        });
        Ok(LayerGrads { input: DenseTensor::from_parts(x.shape().to_vec(), gx), weight, bias })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    kind: ActivationKind,
    input: Option<DenseTensor>,
}

impl Activation {
    pub fn new(kind: ActivationKind) -> Self {
        Self { kind, input: None }
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    pub fn forward(&mut self, x: &DenseTensor) -> DenseTensor {
        let out = match self.kind {
            ActivationKind::Relu => {
                self.input = Some(x.clone());
                let data = x.data().iter().map(|&v| v.max(0.0)).collect();
                DenseTensor::from_parts(x.shape().to_vec(), data)
            }
            ActivationKind::Identity => x.clone(),
        };
        out
    }

    pub fn backward(&mut self, grad: &DenseTensor, name: &str) -> Result<DenseTensor> {
        match self.kind {
            ActivationKind::Identity => Ok(grad.clone()),
            ActivationKind::Relu => {
                let x = self.input.take().ok_or_else(|| FreqError::NoForwardState(name.to_string()))?;
                if x.shape() != grad.shape() {
                    return Err(mismatch(x.shape().to_vec(), grad.shape()));
                }
                let data = x.data().iter().zip(grad.data()).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
                Ok(DenseTensor::from_parts(x.shape().to_vec(), data))
            }
        }
    }
}

/// Collapses every axis after the batch axis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward(&mut self, x: &DenseTensor) -> DenseTensor {
        self.input_shape = Some(x.shape().to_vec());
        let batch = x.shape()[0];
        let rest = x.len() / batch;
        DenseTensor::from_parts(vec![batch, rest], x.data().to_vec())
    }

    pub fn backward(&mut self, grad: &DenseTensor, name: &str) -> Result<DenseTensor> {
        let shape = self.input_shape.take().ok_or_else(|| FreqError::NoForwardState(name.to_string()))?;
        grad.clone().reshape(shape)
    }
}

/// 2x2 max pooling with stride 2; odd trailing rows and columns are dropped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaxPool2x2 {
    state: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2x2 {
    pub fn forward(&mut self, x: &DenseTensor) -> Result<DenseTensor> {
        let s = x.shape();
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(invalid("input", format!("max pool needs (b, c, h >= 2, w >= 2), got {s:?}")));
        }
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let (oh, ow) = (h / 2, w / 2);
        let xd = x.data();
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for pl in 0..planes {
            let base = pl * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        self.state = Some((s.to_vec(), argmax));
        Ok(DenseTensor::from_parts(vec![s[0], s[1], oh, ow], out))
    }

    pub fn backward(&mut self, grad: &DenseTensor, name: &str) -> Result<DenseTensor> {
        let (shape, argmax) = self.state.take().ok_or_else(|| FreqError::NoForwardState(name.to_string()))?;
        if grad.len() != argmax.len() {
            return Err(mismatch(vec![argmax.len()], grad.shape()));
        }
        let mut gx = vec![0.0; shape.iter().product()];
        for (&i, &g) in argmax.iter().zip(grad.data()) {
            gx[i] += g;
        }
        Ok(DenseTensor::from_parts(shape, gx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dc_weight(shape: Vec<usize>, c: f64) -> Weight {
        let mut coeffs = DenseTensor::zeros(shape).unwrap();
        coeffs.data_mut()[0] = c;
        Weight::Frequency(FrequencyTensor::from_coefficients(coeffs, 1).unwrap())
    }

    #[test]
    fn dense_dc_weight() {
        let mut layer = DenseLayer::new(dc_weight(vec![1, 2], 0.75), Some(vec![0.0])).unwrap();
        let x = DenseTensor::new(vec![2, 2], vec![1.0, 0.0, 2.0, 3.0]).unwrap();
        let z = layer.forward(&x).unwrap();
        assert!((z.data()[0] - 0.75).abs() < 1e-15);
        assert!((z.data()[1] - 3.75).abs() < 1e-15);
    }

    #[test]
    fn dense_zero_input_gives_bias() {
        let mut layer = DenseLayer::new(dc_weight(vec![3, 2], 1.0), Some(vec![0.5, -1.0, 2.0])).unwrap();
        let z = layer.forward(&DenseTensor::zeros(vec![2, 2]).unwrap()).unwrap();
        assert_eq!(z.data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn dense_errors() {
        let mut layer = DenseLayer::new(dc_weight(vec![3, 2], 1.0), None).unwrap();
        assert!(layer.forward(&DenseTensor::zeros(vec![2, 3]).unwrap()).is_err());
        let g = DenseTensor::zeros(vec![2, 3]).unwrap();
        assert!(matches!(layer.backward(&g, "fc"), Err(FreqError::NoForwardState(_))));
        assert!(DenseLayer::new(dc_weight(vec![3, 2], 1.0), Some(vec![0.0; 2])).is_err());
    }

    #[test]
    fn dense_zero_grad() {
        let mut layer = DenseLayer::new(dc_weight(vec![3, 2], 1.0), Some(vec![0.0; 3])).unwrap();
        let x = DenseTensor::new(vec![1, 2], vec![0.3, -0.2]).unwrap();
        layer.forward(&x).unwrap();
        let g = layer.backward(&DenseTensor::zeros(vec![1, 3]).unwrap(), "fc").unwrap();
        assert!(g.input.data().iter().chain(g.weight.data()).all(|&v| v == 0.0));
        assert!(g.bias.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_one_by_one_dc_scales_pixels() {
        let mut layer = Conv2dLayer::new(dc_weight(vec![1, 1, 1, 1], 2.0), None, 1, 0).unwrap();
        let x = DenseTensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().data(), &[2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn conv_output_size_errors() {
        let layer = Conv2dLayer::new(dc_weight(vec![1, 1, 3, 3], 1.0), None, 2, 0).unwrap();
        assert!(layer.output_shape(&[1, 1, 6, 6]).is_err());
        assert_eq!(layer.output_shape(&[1, 1, 7, 7]).unwrap(), vec![1, 1, 3, 3]);
        assert!(layer.output_shape(&[1, 1, 2, 2]).is_err());
        assert!(layer.output_shape(&[1, 2, 7, 7]).is_err());
    }

    #[test]
    fn relu_and_pool() {
        let mut relu = Activation::new(ActivationKind::Relu);
        let x = DenseTensor::new(vec![1, 1, 2, 2], vec![-1.0, 2.0, 0.5, -3.0]).unwrap();
        let y = relu.forward(&x);
        assert_eq!(y.data(), &[0.0, 2.0, 0.5, 0.0]);
        let g = relu.backward(&DenseTensor::filled(vec![1, 1, 2, 2], 1.0).unwrap(), "r").unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 1.0, 0.0]);

        let mut pool = MaxPool2x2::default();
        let p = pool.forward(&x).unwrap();
        assert_eq!(p.data(), &[2.0]);
        let gp = pool.backward(&DenseTensor::filled(vec![1, 1, 1, 1], 5.0).unwrap(), "p").unwrap();
        assert_eq!(gp.data(), &[0.0, 5.0, 0.0, 0.0]);
    }
}
