//! Mini-batch SGD with momentum, softmax cross-entropy, and per-epoch tail truncation.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{invalid, FreqError, Result};
use crate::layers::{LayerGrads, Weight};
use crate::model::Model;
use crate::scheduler::TruncationSchedule;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub gamma: f64,
    pub epsilon_ratio: f64,
    pub min_keep: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            gamma: 0.01,
            epsilon_ratio: 0.01,
            min_keep: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid("epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("momentum", "must be in [0, 1)"));
        }
        if self.min_keep == 0 {
            return Err(invalid("min_keep", "must be positive"));
        }
        TruncationSchedule::new(self.gamma, self.epsilon_ratio).map(|_| ())
    }
}

/// One line of the training report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub beta: f64,
    pub kept: usize,
    pub total: usize,
}

impl EpochRecord {
    pub fn rate(&self) -> f64 {
        self.kept as f64 / self.total.max(1) as f64
    }
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} loss={:.6} accuracy={:.4} beta={:.6} kept={} rate={:.4}%",
            self.epoch,
            self.loss,
            self.accuracy,
            self.beta,
            self.kept,
            self.rate() * 100.0
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Mean softmax cross-entropy over a batch and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &DenseTensor, labels: &[usize]) -> Result<(f64, DenseTensor)> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(FreqError::ShapeMismatch {
            expected: vec![labels.len(), logits.shape().get(1).copied().unwrap_or(0)],
            actual: logits.shape().to_vec(),
        });
    }
    let classes = logits.shape()[1];
    let batch = labels.len() as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for ((row, g), &label) in logits.data().chunks(classes).zip(grad.chunks_mut(classes)).zip(labels) {
        if label >= classes {
            return Err(invalid("labels", format!("label {label} outside [0, {classes})")));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln() + max;
        loss += log_sum - row[label];
        for (gi, v) in g.iter_mut().zip(row) {
            *gi = (v - log_sum).exp() / batch;
        }
        g[label] -= 1.0 / batch;
    }
    Ok((loss / batch, DenseTensor::from_parts(logits.shape().to_vec(), grad)))
}

fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) }).0
}

/// Class predictions for a batch of inputs.
pub fn predict(model: &mut Model, x: &DenseTensor) -> Result<Vec<usize>> {
    let logits = model.forward(x)?;
    let classes = logits.shape()[1];
    Ok(logits.data().chunks(classes).map(argmax).collect())
}

const EVAL_BATCH: usize = 500;

/// Top-1 accuracy and mean cross-entropy over the whole dataset.
pub fn evaluate(model: &mut Model, data: &LabeledDataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(FreqError::Empty);
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, labels) = data.gather(chunk);
        let logits = model.forward(&x)?;
        let (l, _) = softmax_cross_entropy(&logits, &labels)?;
        loss += l * chunk.len() as f64;
        let classes = logits.shape()[1];
        correct += logits.data().chunks(classes).zip(&labels).filter(|(row, &y)| argmax(row) == y).count();
    }
    Ok((correct as f64 / data.len() as f64, loss / data.len() as f64))
}

#[derive(Debug, Default)]
struct Slot {
    weight_velocity: Vec<f64>,
    bias_velocity: Vec<f64>,
    /// Per-coefficient step scale for frequency weights.
    scale: Option<Vec<f64>>,
}

/// SGD with heavy-ball momentum: `v = mu * v + g; p -= lr * v`.
///
/// Frequency coefficients step along `g / prod_i energy(x_i)`, which is the
/// forward transform of the spatial gradient. With nothing truncated, the
/// reconstructed weights then follow plain spatial SGD exactly.
#[derive(Debug)]
pub struct Sgd {
    learning_rate: f64,
    momentum: f64,
    slots: Vec<Option<Slot>>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self { learning_rate, momentum, slots: Vec::new() }
    }

    pub fn step(&mut self, model: &mut Model, grads: &[Option<LayerGrads>]) {
        if self.slots.len() < grads.len() {
            self.slots.resize_with(grads.len(), || None);
        }
        let (lr, mu) = (self.learning_rate, self.momentum);
        for ((layer, grad), slot) in model.layers_mut().iter_mut().zip(grads).zip(&mut self.slots) {
            let (Some(grad), Some((weight, bias))) = (grad, layer.layer.params_mut()) else {
                continue;
            };
            let slot = slot.get_or_insert_with(|| Slot {
                weight_velocity: vec![0.0; weight.total()],
                bias_velocity: bias.as_ref().map_or(Vec::new(), |b| vec![0.0; b.len()]),
                scale: weight.as_frequency().map(|t| t.inverse_basis_energy()),
            });

            let g = grad.weight.data();
            match &slot.scale {
                Some(scale) => {
                    for ((v, gi), s) in slot.weight_velocity.iter_mut().zip(g).zip(scale) {
                        *v = mu * *v + gi * s;
                    }
                }
                None => {
                    for (v, gi) in slot.weight_velocity.iter_mut().zip(g) {
                        *v = mu * *v + gi;
                    }
                }
            }
            if let Weight::Frequency(t) = &*weight {
                t.zero_truncated(&mut slot.weight_velocity);
            }
            for (p, v) in weight.values_mut().iter_mut().zip(&slot.weight_velocity) {
                *p -= lr * v;
            }

            if let (Some(bias), Some(gb)) = (bias, &grad.bias) {
                for ((p, v), gi) in bias.iter_mut().zip(&mut slot.bias_velocity).zip(gb) {
                    *v = mu * *v + gi;
                    *p -= lr * *v;
                }
            }
        }
    }
}

/// Trains `model` and returns it with a per-epoch report.
///
/// Each epoch shuffles with a ChaCha stream keyed by `(seed, epoch)`, runs
/// mini-batch SGD, steps the truncation schedule once, truncates every
/// frequency tensor to the new ratio, then evaluates on `data`.
pub fn train(mut model: Model, data: &LabeledDataset, config: &TrainConfig) -> Result<(Model, TrainReport)> {
    let report = train_with(&mut model, data, config, |_| {})?;
    Ok((model, report))
}

/// Like [`train`] but calls `on_epoch` after every epoch, e.g. to stream report lines.
pub fn train_with(
    model: &mut Model,
    data: &LabeledDataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(FreqError::Empty);
    }
    if data.sample_shape() != model.input_shape() {
        return Err(FreqError::ShapeMismatch {
            expected: model.input_shape().to_vec(),
            actual: data.sample_shape().to_vec(),
        });
    }
    let mut schedule = TruncationSchedule::new(config.gamma, config.epsilon_ratio)?;
    let mut sgd = Sgd::new(config.learning_rate, config.momentum);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let (x, labels) = data.gather(batch);
            let logits = model.forward(&x)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(FreqError::Divergence { epoch, step, loss });
            }
            let (grads, _) = model.backward(&grad)?;
            sgd.step(model, &grads);
        }

        schedule.step();
        let thresholds = schedule.thresholds_for_model(model, config.min_keep)?;
        model.apply_thresholds(&thresholds)?;

        let (accuracy, loss) = evaluate(model, data)?;
        if !loss.is_finite() {
            return Err(FreqError::Divergence { epoch, step: usize::MAX, loss });
        }
        let counts = model.count_parameters();
        let record =
            EpochRecord { epoch, loss, accuracy, beta: schedule.beta(), kept: counts.kept, total: counts.total };
        on_epoch(&record);
        report.epochs.push(record);
    }
    Ok(report)
}
