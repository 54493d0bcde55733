//! JSON interchange for FRT1 tensors and FRM1 models, used by `pack` and `unpack`.
//!
//! Coefficient lists are the stored survivors in zigzag order, so a document
//! produced by `unpack` packs back to identical bytes.

use serde::{Deserialize, Serialize};

use crate::error::{format_err, FreqError, Result};
use crate::freq_tensor::FrequencyTensor;
use crate::layers::{Activation, ActivationKind, Conv2dLayer, DenseLayer, Flatten, MaxPool2x2, Weight};
use crate::model::{Layer, Model, NamedLayer};
use crate::serialize::{self, Dtype};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtypeName {
    Single,
    Half,
}

impl From<Dtype> for DtypeName {
    fn from(d: Dtype) -> Self {
        match d {
            Dtype::Single => DtypeName::Single,
            Dtype::Half => DtypeName::Half,
        }
    }
}

impl From<DtypeName> for Dtype {
    fn from(d: DtypeName) -> Self {
        match d {
            DtypeName::Single => Dtype::Single,
            DtypeName::Half => Dtype::Half,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDoc {
    pub shape: Vec<usize>,
    pub epsilon: usize,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum WeightDoc {
    Frequency(TensorDoc),
    Plain { shape: Vec<usize>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDoc {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format")]
pub enum Document {
    /// A packed frequency tensor.
    #[serde(rename = "FRT1")]
    Tensor {
        dtype: DtypeName,
        #[serde(flatten)]
        tensor: TensorDoc,
    },
    /// A spatial tensor to be forward-transformed and truncated at `epsilon`.
    #[serde(rename = "spatial")]
    Spatial { dtype: DtypeName, shape: Vec<usize>, epsilon: usize, values: Vec<f64> },
    #[serde(rename = "FRM1")]
    Model { dtype: DtypeName, input_shape: Vec<usize>, seed: u64, layers: Vec<LayerDoc> },
}

fn tensor_doc(t: &FrequencyTensor) -> TensorDoc {
    TensorDoc { shape: t.shape().to_vec(), epsilon: t.epsilon(), coefficients: t.survivors() }
}

fn weight_doc(w: &Weight) -> WeightDoc {
    match w {
        Weight::Frequency(t) => WeightDoc::Frequency(tensor_doc(t)),
        Weight::Plain(p) => WeightDoc::Plain { shape: p.shape().to_vec(), values: p.data().to_vec() },
    }
}

fn weight_from_doc(doc: WeightDoc) -> Result<Weight> {
    Ok(match doc {
        WeightDoc::Frequency(t) => {
            Weight::Frequency(FrequencyTensor::from_survivors(&t.shape, t.epsilon, &t.coefficients)?)
        }
        WeightDoc::Plain { shape, values } => Weight::Plain(DenseTensor::new(shape, values)?),
    })
}

/// Decodes an FRT1 or FRM1 file into a document.
pub fn from_packed(bytes: &[u8]) -> Result<Document> {
    match bytes.get(..4) {
        Some(m) if m == serialize::TENSOR_MAGIC => {
            let (t, dtype) = serialize::unpack_tensor_with_dtype(bytes)?;
            Ok(Document::Tensor { dtype: dtype.into(), tensor: tensor_doc(&t) })
        }
        Some(m) if m == serialize::MODEL_MAGIC => {
            let dtype = serialize::model_dtype(bytes)?;
            let model = serialize::unpack_model(bytes)?;
            Ok(model_document(&model, dtype))
        }
        _ => Err(format_err("magic", "neither FRT1 nor FRM1")),
    }
}

pub fn model_document(model: &Model, dtype: Dtype) -> Document {
    let layers = model
        .layers()
        .iter()
        .map(|l| {
            let mut doc = LayerDoc {
                name: l.name.clone(),
                kind: l.layer.kind_name().to_string(),
                stride: None,
                padding: None,
                weight: l.layer.weight().map(weight_doc),
                bias: None,
            };
            match &l.layer {
                Layer::Dense(d) => doc.bias = d.bias().map(<[f64]>::to_vec),
                Layer::Conv2d(c) => {
                    doc.stride = Some(c.stride());
                    doc.padding = Some(c.padding());
                    doc.bias = c.bias().map(<[f64]>::to_vec);
                }
                _ => {}
            }
            doc
        })
        .collect();
    Document::Model { dtype: dtype.into(), input_shape: model.input_shape().to_vec(), seed: model.seed(), layers }
}

fn layer_from_doc(doc: LayerDoc) -> Result<NamedLayer> {
    let missing = |what: &str| format_err("document", format!("layer `{}` is missing {what}", doc.name));
    let layer = match doc.kind.as_str() {
        "Linear" => {
            let w = weight_from_doc(doc.weight.clone().ok_or_else(|| missing("weight"))?)?;
            Layer::Dense(DenseLayer::new(w, doc.bias.clone())?)
        }
        "Conv2d" => {
            let w = weight_from_doc(doc.weight.clone().ok_or_else(|| missing("weight"))?)?;
            Layer::Conv2d(Conv2dLayer::new(w, doc.bias.clone(), doc.stride.unwrap_or(1), doc.padding.unwrap_or(0))?)
        }
        "ReLU" => Layer::Activation(Activation::new(ActivationKind::Relu)),
        "Identity" => Layer::Activation(Activation::new(ActivationKind::Identity)),
        "Flatten" => Layer::Flatten(Flatten::default()),
        "MaxPool2x2" => Layer::MaxPool2x2(MaxPool2x2::default()),
        other => return Err(format_err("document", format!("unknown layer kind `{other}`"))),
    };
    Ok(NamedLayer { name: doc.name, layer })
}

/// Encodes a document as an FRT1 or FRM1 file.
pub fn to_packed(doc: Document) -> Result<Vec<u8>> {
    match doc {
        Document::Tensor { dtype, tensor } => {
            let t = FrequencyTensor::from_survivors(&tensor.shape, tensor.epsilon, &tensor.coefficients)?;
            serialize::pack_tensor(&t, dtype.into())
        }
        Document::Spatial { dtype, shape, epsilon, values } => {
            let t = FrequencyTensor::from_spatial(&DenseTensor::new(shape, values)?, epsilon)?;
            serialize::pack_tensor(&t, dtype.into())
        }
        Document::Model { dtype, input_shape, seed, layers } => {
            let layers = layers.into_iter().map(layer_from_doc).collect::<Result<Vec<_>>>()?;
            let model = Model::new(layers, input_shape, seed)?;
            serialize::pack_model(&model, dtype.into())
        }
    }
}

pub fn parse(json: &str) -> Result<Document> {
    serde_json::from_str(json).map_err(|e| FreqError::Format { field: "document", reason: e.to_string() })
}

pub fn render(doc: &Document) -> String {
    serde_json::to_string_pretty(doc).expect("documents always serialize")
}
