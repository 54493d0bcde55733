//! Sequential models, the reference architectures, and parameter accounting.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, FreqError, Result};
use crate::freq_tensor::{uniform_spatial, FrequencyTensor};
use crate::layers::{Activation, ActivationKind, Conv2dLayer, DenseLayer, Flatten, LayerGrads, MaxPool2x2, Weight};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Conv2d(Conv2dLayer),
    Activation(Activation),
    Flatten(Flatten),
    MaxPool2x2(MaxPool2x2),
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "Linear",
            Layer::Conv2d(_) => "Conv2d",
            Layer::Activation(a) => match a.kind() {
                ActivationKind::Relu => "ReLU",
                ActivationKind::Identity => "Identity",
            },
            Layer::Flatten(_) => "Flatten",
            Layer::MaxPool2x2(_) => "MaxPool2x2",
        }
    }

    pub fn weight(&self) -> Option<&Weight> {
        match self {
            Layer::Dense(l) => Some(l.weight()),
            Layer::Conv2d(l) => Some(l.weight()),
            _ => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut Weight, Option<&mut Vec<f64>>)> {
        match self {
            Layer::Dense(l) => Some(l.params_mut()),
            Layer::Conv2d(l) => Some(l.params_mut()),
            _ => None,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |reason: String| FreqError::Shape { shape: input.to_vec(), reason };
        match self {
            Layer::Dense(l) => {
                if input.len() != 1 || input[0] != l.in_features() {
                    return Err(bad(format!("dense layer expects {} features", l.in_features())));
                }
                Ok(vec![l.out_features()])
            }
            Layer::Conv2d(l) => {
                let mut full = vec![1];
                full.extend_from_slice(input);
                Ok(l.output_shape(&full)?[1..].to_vec())
            }
            Layer::Activation(_) => Ok(input.to_vec()),
            Layer::Flatten(_) => Ok(vec![input.iter().product()]),
            Layer::MaxPool2x2(_) => {
                if input.len() != 3 || input[1] < 2 || input[2] < 2 {
                    return Err(bad("max pool expects (c, h >= 2, w >= 2)".into()));
                }
                Ok(vec![input[0], input[1] / 2, input[2] / 2])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedLayer {
    pub name: String,
    pub layer: Layer,
}

/// How layer weights are parameterized when a model is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Frequency,
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<NamedLayer>,
    input_shape: Vec<usize>,
    seed: u64,
}

/// Weight-count accounting for one layer or a whole model. Biases are excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterCount {
    pub total: usize,
    pub kept: usize,
}

impl ParameterCount {
    /// `kept / total`
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            return 1.0;
        }
        self.kept as f64 / self.total as f64
    }

    /// `total / kept`, rounded to the nearest integer.
    pub fn reduction(&self) -> u64 {
        if self.kept == 0 {
            return 0;
        }
        (self.total as f64 / self.kept as f64).round() as u64
    }
}

impl Model {
    /// `input_shape` excludes the batch axis.
    pub fn new(layers: Vec<NamedLayer>, input_shape: Vec<usize>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("layers", "model has no layers"));
        }
        let mut names = HashSet::new();
        for l in &layers {
            if !names.insert(l.name.as_str()) {
                return Err(invalid("layers", format!("duplicate layer name `{}`", l.name)));
            }
        }
        let model = Self { layers, input_shape, seed };
        model.output_shape()?;
        Ok(model)
    }

    pub fn layers(&self) -> &[NamedLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [NamedLayer] {
        &mut self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-sample output shape, checking that every layer composes.
    pub fn output_shape(&self) -> Result<Vec<usize>> {
        self.layers.iter().try_fold(self.input_shape.clone(), |shape, l| l.layer.output_shape(&shape))
    }

    pub fn frequency_tensors(&self) -> impl Iterator<Item = &FrequencyTensor> {
        self.layers.iter().filter_map(|l| l.layer.weight().and_then(Weight::as_frequency))
    }

    /// Applies one threshold per frequency tensor, in layer order.
    pub fn apply_thresholds(&mut self, thresholds: &[usize]) -> Result<()> {
        let mut it = thresholds.iter();
        for l in &mut self.layers {
            if let Some((w, _)) = l.layer.params_mut() {
                if let Some(t) = w.as_frequency_mut() {
                    let eps = it.next().ok_or_else(|| invalid("thresholds", "too few thresholds"))?;
                    t.apply_truncation(*eps)?;
                }
            }
        }
        if it.next().is_some() {
            return Err(invalid("thresholds", "too many thresholds"));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &DenseTensor) -> Result<DenseTensor> {
        if x.shape().get(1..) != Some(self.input_shape.as_slice()) {
            let mut expected = vec![x.shape()[0]];
            expected.extend_from_slice(&self.input_shape);
            return Err(FreqError::ShapeMismatch { expected, actual: x.shape().to_vec() });
        }
        let mut cur = x.clone();
        for l in &mut self.layers {
            cur = match &mut l.layer {
                Layer::Dense(d) => d.forward(&cur)?,
                Layer::Conv2d(c) => c.forward(&cur)?,
                Layer::Activation(a) => a.forward(&cur),
                Layer::Flatten(f) => f.forward(&cur),
                Layer::MaxPool2x2(p) => p.forward(&cur)?,
            };
        }
        Ok(cur)
    }

    /// Backpropagates from the output gradient. Returns one entry per layer,
    /// `Some` for parameterized layers, plus the gradient at the model input.
    pub fn backward(&mut self, grad_out: &DenseTensor) -> Result<(Vec<Option<LayerGrads>>, DenseTensor)> {
        let mut grads = vec![None; self.layers.len()];
        let mut cur = grad_out.clone();
        for (i, l) in self.layers.iter_mut().enumerate().rev() {
            let name = l.name.as_str();
            cur = match &mut l.layer {
                Layer::Dense(d) => {
                    let g = d.backward(&cur, name)?;
                    let input = g.input.clone();
                    grads[i] = Some(g);
                    input
                }
                Layer::Conv2d(c) => {
                    let g = c.backward(&cur, name)?;
                    let input = g.input.clone();
                    grads[i] = Some(g);
                    input
                }
                Layer::Activation(a) => a.backward(&cur, name)?,
                Layer::Flatten(f) => f.backward(&cur, name)?,
                Layer::MaxPool2x2(p) => p.backward(&cur, name)?,
            };
        }
        Ok((grads, cur))
    }

    /// Per-layer weight counts for parameterized layers, in order.
    pub fn layer_counts(&self) -> Vec<(&str, &'static str, ParameterCount)> {
        self.layers
            .iter()
            .filter_map(|l| {
                l.layer.weight().map(|w| {
                    (l.name.as_str(), l.layer.kind_name(), ParameterCount { total: w.total(), kept: w.kept() })
                })
            })
            .collect()
    }

    /// Total weights, kept coefficients, and their ratio. Biases are not counted.
    pub fn count_parameters(&self) -> ParameterCount {
        self.layer_counts().iter().fold(ParameterCount { total: 0, kept: 0 }, |acc, (_, _, c)| ParameterCount {
            total: acc.total + c.total,
            kept: acc.kept + c.kept,
        })
    }
}

/// Names accepted by [`build_model`].
pub const MODEL_NAMES: [&str; 2] = ["mlp300", "lenet5-lite"];

enum Arch {
    Dense { inputs: usize, outputs: usize },
    Conv { in_ch: usize, out_ch: usize, k: usize },
    Relu,
    Pool,
    Flatten,
}

/// Builds a reference architecture with seeded initialization.
///
/// - `mlp300`: 784-300-100-10 with ReLU, 266,200 weights.
/// - `lenet5-lite`: conv 20@5x5, pool, conv 50@5x5, pool, 800-500-10 with
///   ReLU, 430,500 weights on 1x28x28 inputs.
///
/// The same seed gives the same spatial weights in both weight modes.
pub fn build_model(name: &str, seed: u64, mode: WeightMode) -> Result<Model> {
    use Arch::*;
    let arch: Vec<(&str, Arch)> = match name {
        "mlp300" => vec![
            ("flatten", Flatten),
            ("fc1", Dense { inputs: 784, outputs: 300 }),
            ("relu1", Relu),
            ("fc2", Dense { inputs: 300, outputs: 100 }),
            ("relu2", Relu),
            ("fc3", Dense { inputs: 100, outputs: 10 }),
        ],
        "lenet5-lite" => vec![
            ("conv1", Conv { in_ch: 1, out_ch: 20, k: 5 }),
            ("relu1", Relu),
            ("pool1", Pool),
            ("conv2", Conv { in_ch: 20, out_ch: 50, k: 5 }),
            ("relu2", Relu),
            ("pool2", Pool),
            ("flatten", Flatten),
            ("fc1", Dense { inputs: 800, outputs: 500 }),
            ("relu3", Relu),
            ("fc2", Dense { inputs: 500, outputs: 10 }),
        ],
        other => return Err(invalid("model", format!("unknown model `{other}`; expected one of {MODEL_NAMES:?}"))),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weight = |shape: Vec<usize>, fan_in: usize| -> Result<(Weight, Vec<f64>)> {
        let out = shape[0];
        let w = uniform_spatial(shape, fan_in, &mut rng)?;
        let b = uniform_spatial(vec![out], fan_in, &mut rng)?.into_data();
        let w = match mode {
            WeightMode::Frequency => Weight::Frequency(FrequencyTensor::from_spatial(&w, usize::MAX)?),
            WeightMode::Plain => Weight::Plain(w),
        };
        Ok((w, b))
    };

    let mut layers = Vec::with_capacity(arch.len());
    for (lname, a) in arch {
        let layer = match a {
            Dense { inputs, outputs } => {
                let (w, b) = weight(vec![outputs, inputs], inputs)?;
                Layer::Dense(DenseLayer::new(w, Some(b))?)
            }
            Conv { in_ch, out_ch, k } => {
                let (w, b) = weight(vec![out_ch, in_ch, k, k], in_ch * k * k)?;
                Layer::Conv2d(Conv2dLayer::new(w, Some(b), 1, 0)?)
            }
            Relu => Layer::Activation(Activation::new(ActivationKind::Relu)),
            Pool => Layer::MaxPool2x2(MaxPool2x2::default()),
            Flatten => Layer::Flatten(crate::layers::Flatten::default()),
        };
        layers.push(NamedLayer { name: lname.to_string(), layer });
    }
    Model::new(layers, vec![1, 28, 28], seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp300_weight_count() {
        let m = build_model("mlp300", 1, WeightMode::Frequency).unwrap();
        let c = m.count_parameters();
        assert_eq!(c.total, 784 * 300 + 300 * 100 + 100 * 10);
        assert_eq!(c.total, 266_200);
        assert_eq!(c.kept, c.total);
        assert_eq!(m.output_shape().unwrap(), vec![10]);
    }

    #[test]
    fn lenet5_lite_weight_count() {
        let m = build_model("lenet5-lite", 1, WeightMode::Plain).unwrap();
        let c = m.count_parameters();
        assert_eq!(c.total, 430_500);
        assert!((c.total as f64 - 431_000.0).abs() / 431_000.0 < 0.01);
        assert_eq!(m.output_shape().unwrap(), vec![10]);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = build_model("mlp300", 42, WeightMode::Frequency).unwrap();
        let b = build_model("mlp300", 42, WeightMode::Frequency).unwrap();
        assert_eq!(a, b);
        let c = build_model("mlp300", 43, WeightMode::Frequency).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn modes_share_spatial_weights() {
        let f = build_model("mlp300", 5, WeightMode::Frequency).unwrap();
        let p = build_model("mlp300", 5, WeightMode::Plain).unwrap();
        let wf = f.layers()[1].layer.weight().unwrap().spatial();
        let wp = p.layers()[1].layer.weight().unwrap().spatial();
        let err = wf.data().iter().zip(wp.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn unknown_model() {
        assert!(build_model("vgg", 0, WeightMode::Plain).is_err());
    }

    #[test]
    fn accounting_arithmetic() {
        let c = ParameterCount { total: 23_232, kept: 233 };
        assert_eq!(format!("{:.4}", c.rate() * 100.0), "1.0029");
        assert_eq!(c.reduction(), 100);
        let full = ParameterCount { total: 500, kept: 500 };
        assert_eq!(full.rate(), 1.0);
        assert_eq!(full.reduction(), 1);
    }

    #[test]
    fn duplicate_names_rejected() {
        let layers = vec![
            NamedLayer { name: "a".into(), layer: Layer::Flatten(Flatten::default()) },
            NamedLayer { name: "a".into(), layer: Layer::Flatten(Flatten::default()) },
        ];
        assert!(Model::new(layers, vec![4], 0).is_err());
        assert!(Model::new(vec![], vec![4], 0).is_err());
    }
}
