//! Packed little-endian formats.
//!
//! Only the threshold is stored, never per-coefficient positions: survivors
//! are written in canonical zigzag order, which the shape and threshold
//! recover exactly.
//!
//! FRT1 tensor record:
//!
//! ```text
//! offset  size     field
//! 0       4        magic "FRT1"
//! 4       1        version (1)
//! 5       1        rank R (1..=4)
//! 6       4*R      dims, u32 each
//! 6+4R    4        epsilon, u32
//! 10+4R   1        dtype: 0 = f32, 1 = f16
//! 11+4R   8        count, u64 (= number of index vectors with |x|_1 < epsilon)
//! 19+4R   count*W  coefficients in zigzag order, W = 4 or 2
//! ```
//!
//! FRM1 model container:
//!
//! ```text
//! "FRM1" | version u8 | dtype u8 | input rank u8 | input dims u32*R | seed u64 | layer count u32
//! per layer:
//!   name length u16 | name bytes (UTF-8) | kind u8
//!   kind 0 (Linear), 1 (Conv2d):
//!     [Conv2d only] stride u32 | padding u32
//!     weight mode u8: 0 = frequency -> FRT1 record
//!                     1 = plain     -> rank u8 | dims u32*R | values (dtype)
//!     has bias u8 | [bias length u32 | f32 values]
//!   kind 2 ReLU, 3 Identity, 4 Flatten, 5 MaxPool2x2: no payload
//! ```

use half::f16;

use crate::error::{format_err, invalid, FreqError, Result};
use crate::freq_tensor::FrequencyTensor;
use crate::layers::{Activation, ActivationKind, Conv2dLayer, DenseLayer, Flatten, MaxPool2x2, Weight};
use crate::model::{Layer, Model, NamedLayer};
use crate::tensor::{DenseTensor, MAX_RANK};

pub const TENSOR_MAGIC: &[u8; 4] = b"FRT1";
pub const MODEL_MAGIC: &[u8; 4] = b"FRM1";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    Single,
    Half,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::Single => 4,
            Dtype::Half => 2,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Dtype::Single => 0,
            Dtype::Half => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Dtype::Single),
            1 => Ok(Dtype::Half),
            other => Err(format_err("dtype", format!("unknown tag {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::Single => "single",
            Dtype::Half => "half",
        }
    }

    /// Rounds a value the way storage in this dtype does.
    pub fn round(self, v: f64) -> f64 {
        match self {
            Dtype::Single => v as f32 as f64,
            Dtype::Half => f16::from_f64(v).to_f64(),
        }
    }

    fn write(self, out: &mut Vec<u8>, v: f64) {
        match self {
            Dtype::Single => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::Half => out.extend_from_slice(&f16::from_f64(v).to_le_bytes()),
        }
    }
}

/// Header fields of an FRT1 record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorHeader {
    pub shape: Vec<usize>,
    pub epsilon: usize,
    pub dtype: Dtype,
    pub count: u64,
}

impl TensorHeader {
    pub fn encoded_len(&self) -> usize {
        tensor_header_len(self.shape.len())
    }
}

pub fn tensor_header_len(rank: usize) -> usize {
    19 + 4 * rank
}

fn to_u32(v: usize, field: &'static str) -> Result<u32> {
    u32::try_from(v).map_err(|_| invalid(field, format!("{v} does not fit in u32")))
}

fn write_tensor(out: &mut Vec<u8>, t: &FrequencyTensor, dtype: Dtype) -> Result<()> {
    let shape = t.shape();
    if shape.len() > MAX_RANK {
        return Err(FreqError::Rank(shape.len()));
    }
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(FORMAT_VERSION);
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&to_u32(d, "dims")?.to_le_bytes());
    }
    out.extend_from_slice(&to_u32(t.epsilon(), "epsilon")?.to_le_bytes());
    out.push(dtype.tag());
    let survivors = t.survivors();
    out.extend_from_slice(&(survivors.len() as u64).to_le_bytes());
    for v in survivors {
        dtype.write(out, v);
    }
    Ok(())
}

pub fn pack_tensor(t: &FrequencyTensor, dtype: Dtype) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(tensor_header_len(t.shape().len()) + t.nonzero_budget() * dtype.width());
    write_tensor(&mut out, t, dtype)?;
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            format_err(
                field,
                format!("truncated: need {n} bytes at offset {}, have {}", self.pos, self.bytes.len() - self.pos),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &'static str) -> Result<u16> {
        let b = self.take(2, field)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        let b = self.take(8, field)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != expected {
            return Err(format_err(
                "magic",
                format!("found {:?}, expected {:?}", String::from_utf8_lossy(m), String::from_utf8_lossy(expected)),
            ));
        }
        let version = self.u8("version")?;
        if version != FORMAT_VERSION {
            return Err(format_err("version", format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let rank = self.u8("rank")? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(format_err("rank", format!("{rank} is outside 1..=4")));
        }
        let dims = (0..rank).map(|_| self.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims.contains(&0) {
            return Err(format_err("dims", format!("{dims:?} contains a zero")));
        }
        Ok(dims)
    }

    fn values(&mut self, n: usize, dtype: Dtype, field: &'static str) -> Result<Vec<f64>> {
        let bytes =
            self.take(n.checked_mul(dtype.width()).ok_or_else(|| format_err(field, "count overflows"))?, field)?;
        let vals: Vec<f64> = match dtype {
            Dtype::Single => bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect(),
            Dtype::Half => bytes.chunks_exact(2).map(|b| f16::from_le_bytes([b[0], b[1]]).to_f64()).collect(),
        };
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(format_err(field, format!("non-finite value at position {i}")));
        }
        Ok(vals)
    }

    fn header(&mut self) -> Result<TensorHeader> {
        self.magic(TENSOR_MAGIC)?;
        let shape = self.dims()?;
        let epsilon = self.u32("epsilon")? as usize;
        let dtype = Dtype::from_tag(self.u8("dtype")?)?;
        let count = self.u64("count")?;
        Ok(TensorHeader { shape, epsilon, dtype, count })
    }

    fn tensor(&mut self) -> Result<(FrequencyTensor, Dtype)> {
        let h = self.header()?;
        let plan = crate::zigzag::ZigzagPlan::build(&h.shape)?;
        if h.epsilon < 1 || h.epsilon > plan.full_threshold() {
            return Err(format_err("epsilon", format!("{} is outside [1, {}]", h.epsilon, plan.full_threshold())));
        }
        let expected = plan.count(h.epsilon) as u64;
        if h.count != expected {
            return Err(format_err(
                "count",
                format!("{} does not match {expected} coefficients for epsilon {}", h.count, h.epsilon),
            ));
        }
        let survivors = self.values(h.count as usize, h.dtype, "coefficients")?;
        Ok((FrequencyTensor::from_survivors(&h.shape, h.epsilon, &survivors)?, h.dtype))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(format_err("length", format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

/// Reads only the FRT1 header fields.
pub fn inspect_tensor(bytes: &[u8]) -> Result<TensorHeader> {
    Reader::new(bytes).header()
}

pub fn unpack_tensor(bytes: &[u8]) -> Result<FrequencyTensor> {
    unpack_tensor_with_dtype(bytes).map(|(t, _)| t)
}

pub fn unpack_tensor_with_dtype(bytes: &[u8]) -> Result<(FrequencyTensor, Dtype)> {
    let mut r = Reader::new(bytes);
    let t = r.tensor()?;
    r.finish()?;
    Ok(t)
}

const KIND_DENSE: u8 = 0;
const KIND_CONV: u8 = 1;
const KIND_RELU: u8 = 2;
const KIND_IDENTITY: u8 = 3;
const KIND_FLATTEN: u8 = 4;
const KIND_MAXPOOL: u8 = 5;

fn write_weight(out: &mut Vec<u8>, w: &Weight, dtype: Dtype) -> Result<()> {
    match w {
        Weight::Frequency(t) => {
            out.push(0);
            write_tensor(out, t, dtype)
        }
        Weight::Plain(p) => {
            out.push(1);
            out.push(p.rank() as u8);
            for &d in p.shape() {
                out.extend_from_slice(&to_u32(d, "dims")?.to_le_bytes());
            }
            for &v in p.data() {
                dtype.write(out, v);
            }
            Ok(())
        }
    }
}

fn write_bias(out: &mut Vec<u8>, bias: Option<&[f64]>) -> Result<()> {
    match bias {
        None => out.push(0),
        Some(b) => {
            out.push(1);
            out.extend_from_slice(&to_u32(b.len(), "bias")?.to_le_bytes());
            for &v in b {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(())
}

pub fn pack_model(model: &Model, dtype: Dtype) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.push(FORMAT_VERSION);
    out.push(dtype.tag());
    let input = model.input_shape();
    if input.is_empty() || input.len() > MAX_RANK {
        return Err(FreqError::Rank(input.len()));
    }
    out.push(input.len() as u8);
    for &d in input {
        out.extend_from_slice(&to_u32(d, "input dims")?.to_le_bytes());
    }
    out.extend_from_slice(&model.seed().to_le_bytes());
    out.extend_from_slice(&to_u32(model.layers().len(), "layer count")?.to_le_bytes());
    for l in model.layers() {
        let name = l.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| invalid("name", "longer than 65535 bytes"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        match &l.layer {
            Layer::Dense(d) => {
                out.push(KIND_DENSE);
                write_weight(&mut out, d.weight(), dtype)?;
                write_bias(&mut out, d.bias())?;
            }
            Layer::Conv2d(c) => {
                out.push(KIND_CONV);
                out.extend_from_slice(&to_u32(c.stride(), "stride")?.to_le_bytes());
                out.extend_from_slice(&to_u32(c.padding(), "padding")?.to_le_bytes());
                write_weight(&mut out, c.weight(), dtype)?;
                write_bias(&mut out, c.bias())?;
            }
            Layer::Activation(a) => out.push(match a.kind() {
                ActivationKind::Relu => KIND_RELU,
                ActivationKind::Identity => KIND_IDENTITY,
            }),
            Layer::Flatten(_) => out.push(KIND_FLATTEN),
            Layer::MaxPool2x2(_) => out.push(KIND_MAXPOOL),
        }
    }
    Ok(out)
}

/// File length [`pack_model`] produces, computed from the accounting alone.
pub fn packed_model_len(model: &Model, dtype: Dtype) -> usize {
    let header = 4 + 1 + 1 + 1 + 4 * model.input_shape().len() + 8 + 4;
    let layers: usize = model
        .layers()
        .iter()
        .map(|l| {
            let descriptor = 2 + l.name.len() + 1;
            let (weight, bias, extra) = match &l.layer {
                Layer::Dense(d) => (Some(d.weight()), d.bias(), 0),
                Layer::Conv2d(c) => (Some(c.weight()), c.bias(), 8),
                _ => (None, None, 0),
            };
            let weight = weight.map_or(0, |w| {
                1 + match w {
                    Weight::Frequency(t) => tensor_header_len(t.shape().len()) + t.nonzero_budget() * dtype.width(),
                    Weight::Plain(p) => 1 + 4 * p.rank() + p.len() * dtype.width(),
                }
            });
            let bias = match (&l.layer, bias) {
                (Layer::Dense(_) | Layer::Conv2d(_), Some(b)) => 1 + 4 + 4 * b.len(),
                (Layer::Dense(_) | Layer::Conv2d(_), None) => 1,
                _ => 0,
            };
            descriptor + extra + weight + bias
        })
        .sum();
    header + layers
}

impl<'a> Reader<'a> {
    fn weight(&mut self, dtype: Dtype) -> Result<Weight> {
        match self.u8("weight mode")? {
            0 => Ok(Weight::Frequency(self.tensor()?.0)),
            1 => {
                let shape = self.dims()?;
                let n = shape.iter().product();
                let vals = self.values(n, dtype, "weights")?;
                Ok(Weight::Plain(DenseTensor::new(shape, vals)?))
            }
            other => Err(format_err("weight mode", format!("unknown mode {other}"))),
        }
    }

    fn bias(&mut self) -> Result<Option<Vec<f64>>> {
        match self.u8("bias flag")? {
            0 => Ok(None),
            1 => {
                let n = self.u32("bias length")? as usize;
                Ok(Some(self.values(n, Dtype::Single, "bias")?))
            }
            other => Err(format_err("bias flag", format!("unknown flag {other}"))),
        }
    }
}

pub fn unpack_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let dtype = Dtype::from_tag(r.u8("dtype")?)?;
    let input = r.dims()?;
    let seed = r.u64("seed")?;
    let count = r.u32("layer count")? as usize;
    if count == 0 {
        return Err(format_err("layer count", "model has no layers"));
    }
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let name =
            std::str::from_utf8(r.take(len, "name")?).map_err(|e| format_err("name", e.to_string()))?.to_string();
        let mismatch = |e: FreqError| format_err("descriptor", format!("layer `{name}`: {e}"));
        let layer = match r.u8("kind")? {
            KIND_DENSE => {
                let w = r.weight(dtype)?;
                let b = r.bias()?;
                Layer::Dense(DenseLayer::new(w, b).map_err(mismatch)?)
            }
            KIND_CONV => {
                let stride = r.u32("stride")? as usize;
                let padding = r.u32("padding")? as usize;
                let w = r.weight(dtype)?;
                let b = r.bias()?;
                Layer::Conv2d(Conv2dLayer::new(w, b, stride, padding).map_err(mismatch)?)
            }
            KIND_RELU => Layer::Activation(Activation::new(ActivationKind::Relu)),
            KIND_IDENTITY => Layer::Activation(Activation::new(ActivationKind::Identity)),
            KIND_FLATTEN => Layer::Flatten(Flatten::default()),
            KIND_MAXPOOL => Layer::MaxPool2x2(MaxPool2x2::default()),
            other => return Err(format_err("kind", format!("unknown layer kind {other}"))),
        };
        layers.push(NamedLayer { name, layer });
    }
    r.finish()?;
    Model::new(layers, input, seed).map_err(|e| format_err("descriptor", e.to_string()))
}

/// Container dtype of an FRM1 file.
pub fn model_dtype(bytes: &[u8]) -> Result<Dtype> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    Dtype::from_tag(r.u8("dtype")?)
}
