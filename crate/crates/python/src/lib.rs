//! Python bindings: transforms, zigzag plans, frequency tensors, the truncation
//! schedule, and model build/train/evaluate/pack.
//!
//! Tensors cross the boundary as a flat row-major `list[float]` plus a shape.

use std::path::PathBuf;

use freqreg::report::layer_table;
use freqreg::train::train_with;
use freqreg::{DenseTensor, Dtype, FreqError, WeightMode};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

create_exception!(freqreg_py, FreqRegError, PyValueError, "Raised for any freqreg failure.");

fn py_err(e: FreqError) -> PyErr {
    FreqRegError::new_err(e.to_string())
}

fn tensor(shape: Vec<usize>, values: Vec<f64>) -> PyResult<DenseTensor> {
    DenseTensor::new(shape, values).map_err(py_err)
}

fn dtype(name: &str) -> PyResult<Dtype> {
    match name {
        "single" => Ok(Dtype::Single),
        "half" => Ok(Dtype::Half),
        other => Err(FreqRegError::new_err(format!("dtype must be 'single' or 'half', got {other:?}"))),
    }
}

/// Full-threshold inverse transform of `coeffs` with the given shape.
#[pyfunction]
fn idct(coeffs: Vec<f64>, shape: Vec<usize>) -> PyResult<Vec<f64>> {
    Ok(freqreg::idct_nd(&tensor(shape, coeffs)?).map_err(py_err)?.into_data())
}

/// Forward transform; exact inverse of [`idct`].
#[pyfunction]
fn dct(values: Vec<f64>, shape: Vec<usize>) -> PyResult<Vec<f64>> {
    Ok(freqreg::dct_nd(&tensor(shape, values)?).map_err(py_err)?.into_data())
}

/// Transpose of [`idct`].
#[pyfunction]
fn idct_adjoint(cotangent: Vec<f64>, shape: Vec<usize>) -> PyResult<Vec<f64>> {
    Ok(freqreg::idct_nd_adjoint(&tensor(shape, cotangent)?).map_err(py_err)?.into_data())
}

#[pyclass(name = "ZigzagPlan", frozen)]
struct PyZigzagPlan(freqreg::ZigzagPlan);

#[pymethods]
impl PyZigzagPlan {
    #[new]
    fn new(shape: Vec<usize>) -> PyResult<Self> {
        freqreg::ZigzagPlan::build(&shape).map(Self).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.0.shape().to_vec()
    }

    #[getter]
    fn total(&self) -> usize {
        self.0.total()
    }

    #[getter]
    fn full_threshold(&self) -> usize {
        self.0.full_threshold()
    }

    /// Flat indices in zigzag order.
    fn order(&self) -> Vec<usize> {
        self.0.order().to_vec()
    }

    /// Number of coefficients kept at threshold `epsilon`.
    fn count(&self, epsilon: usize) -> usize {
        self.0.count(epsilon)
    }

    fn mask(&self, epsilon: usize) -> PyResult<Vec<bool>> {
        Ok(self.0.mask(epsilon).map_err(py_err)?.data().iter().map(|&m| m != 0.0).collect())
    }

    /// `(epsilon, kept)` for the largest threshold keeping at most `ratio` of the tensor.
    #[pyo3(signature = (ratio, min_keep = 1))]
    fn threshold_for_ratio(&self, ratio: f64, min_keep: usize) -> PyResult<(usize, usize)> {
        self.0.threshold_for_ratio(ratio, min_keep).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("ZigzagPlan(shape={:?}, total={})", self.0.shape(), self.0.total())
    }
}

#[pyclass(name = "FrequencyTensor")]
struct PyFrequencyTensor(freqreg::FrequencyTensor);

#[pymethods]
impl PyFrequencyTensor {
    /// Wraps DCT coefficients; everything at or past `epsilon` is zeroed.
    #[staticmethod]
    fn from_coefficients(coeffs: Vec<f64>, shape: Vec<usize>, epsilon: usize) -> PyResult<Self> {
        freqreg::FrequencyTensor::from_coefficients(tensor(shape, coeffs)?, epsilon).map(Self).map_err(py_err)
    }

    /// Forward-transforms spatial weights, then truncates at `epsilon`.
    #[staticmethod]
    fn from_spatial(values: Vec<f64>, shape: Vec<usize>, epsilon: usize) -> PyResult<Self> {
        freqreg::FrequencyTensor::from_spatial(&tensor(shape, values)?, epsilon).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn unpack(data: &[u8]) -> PyResult<Self> {
        freqreg::unpack_tensor(data).map(Self).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.0.shape().to_vec()
    }

    #[getter]
    fn epsilon(&self) -> usize {
        self.0.epsilon()
    }

    #[getter]
    fn kept(&self) -> usize {
        self.0.nonzero_budget()
    }

    #[getter]
    fn total(&self) -> usize {
        self.0.total()
    }

    fn coefficients(&self) -> Vec<f64> {
        self.0.coefficients().to_vec()
    }

    /// Surviving coefficients in zigzag order.
    fn survivors(&self) -> Vec<f64> {
        self.0.survivors()
    }

    /// Spatial weights.
    fn reconstruct(&self) -> Vec<f64> {
        self.0.reconstruct().into_data()
    }

    /// Coefficient gradient for a spatial gradient; zero past the threshold.
    fn backward(&self, grad: Vec<f64>) -> PyResult<Vec<f64>> {
        let g = tensor(self.0.shape().to_vec(), grad)?;
        Ok(self.0.backward(&g).map_err(py_err)?.into_data())
    }

    /// Lowers the threshold in place; raising it is an error.
    fn apply_truncation(&mut self, epsilon: usize) -> PyResult<()> {
        self.0.apply_truncation(epsilon).map_err(py_err)
    }

    #[pyo3(signature = (dtype = "single"))]
    fn pack<'py>(&self, py: Python<'py>, dtype: &str) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = freqreg::pack_tensor(&self.0, self::dtype(dtype)?).map_err(py_err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    fn __repr__(&self) -> String {
        format!(
            "FrequencyTensor(shape={:?}, epsilon={}, kept={}/{})",
            self.0.shape(),
            self.0.epsilon(),
            self.0.nonzero_budget(),
            self.0.total()
        )
    }
}

#[pyclass(name = "TruncationSchedule")]
struct PyTruncationSchedule(freqreg::TruncationSchedule);

#[pymethods]
impl PyTruncationSchedule {
    #[new]
    #[pyo3(signature = (gamma = 0.01, epsilon_ratio = 0.01, beta = 1.0))]
    fn new(gamma: f64, epsilon_ratio: f64, beta: f64) -> PyResult<Self> {
        freqreg::TruncationSchedule::starting_at(beta, gamma, epsilon_ratio).map(Self).map_err(py_err)
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta()
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.0.epoch()
    }

    fn step(&mut self) -> f64 {
        self.0.step();
        self.0.beta()
    }

    #[staticmethod]
    fn closed_form(beta0: f64, gamma: f64, epsilon_ratio: f64, n: usize) -> f64 {
        freqreg::TruncationSchedule::closed_form(beta0, gamma, epsilon_ratio, n)
    }
}

#[pyclass(name = "Dataset", frozen)]
struct PyDataset(freqreg::LabeledDataset);

#[pymethods]
impl PyDataset {
    /// Seeded Gaussian clusters reshaped to `1 x 28 x 28` when `dim == 784`.
    #[staticmethod]
    #[pyo3(signature = (samples = 2000, seed = 0, num_classes = 10, dim = 784))]
    fn synthetic(samples: usize, seed: u64, num_classes: usize, dim: usize) -> PyResult<Self> {
        let data = freqreg::synthetic_blobs(num_classes, samples / num_classes.max(1), dim, seed).map_err(py_err)?;
        let data = if dim == 784 { data.with_sample_shape(1, 28, 28).map_err(py_err)? } else { data };
        Ok(Self(data))
    }

    #[staticmethod]
    fn load_idx(images: PathBuf, labels: PathBuf) -> PyResult<Self> {
        freqreg::load_idx(&images, &labels).map(Self).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn sample_shape(&self) -> Vec<usize> {
        self.0.sample_shape().to_vec()
    }

    fn labels(&self) -> Vec<usize> {
        self.0.labels().to_vec()
    }
}

#[pyclass(name = "EpochRecord", frozen, get_all)]
struct PyEpochRecord {
    epoch: usize,
    loss: f64,
    accuracy: f64,
    beta: f64,
    kept: usize,
    total: usize,
}

#[pymethods]
impl PyEpochRecord {
    fn __repr__(&self) -> String {
        freqreg::train::EpochRecord {
            epoch: self.epoch,
            loss: self.loss,
            accuracy: self.accuracy,
            beta: self.beta,
            kept: self.kept,
            total: self.total,
        }
        .to_string()
    }
}

#[pyclass(name = "Model")]
struct PyModel(freqreg::Model);

#[pymethods]
impl PyModel {
    /// `name` is `"mlp300"` or `"lenet5-lite"`.
    #[staticmethod]
    #[pyo3(signature = (name = "mlp300", seed = 0, plain = false))]
    fn build(name: &str, seed: u64, plain: bool) -> PyResult<Self> {
        let mode = if plain { WeightMode::Plain } else { WeightMode::Frequency };
        freqreg::build_model(name, seed, mode).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn unpack(data: &[u8]) -> PyResult<Self> {
        freqreg::unpack_model(data).map(Self).map_err(py_err)
    }

    #[pyo3(signature = (
        dataset, epochs = 10, batch_size = 64, learning_rate = 0.01, momentum = 0.9,
        gamma = 0.01, epsilon_ratio = 0.01, min_keep = 1, seed = 0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        dataset: &PyDataset,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        momentum: f64,
        gamma: f64,
        epsilon_ratio: f64,
        min_keep: usize,
        seed: u64,
    ) -> PyResult<Vec<PyEpochRecord>> {
        let config =
            freqreg::TrainConfig { epochs, batch_size, learning_rate, momentum, gamma, epsilon_ratio, min_keep, seed };
        let model = &mut self.0;
        let data = &dataset.0;
        let report = py.detach(|| train_with(model, data, &config, |_| {})).map_err(py_err)?;
        Ok(report
            .epochs
            .iter()
            .map(|r| PyEpochRecord {
                epoch: r.epoch,
                loss: r.loss,
                accuracy: r.accuracy,
                beta: r.beta,
                kept: r.kept,
                total: r.total,
            })
            .collect())
    }

    /// `(accuracy, mean loss)`.
    fn evaluate(&mut self, dataset: &PyDataset) -> PyResult<(f64, f64)> {
        freqreg::evaluate(&mut self.0, &dataset.0).map_err(py_err)
    }

    /// `(total, kept)` weight counts, biases excluded.
    fn count_parameters(&self) -> (usize, usize) {
        let c = self.0.count_parameters();
        (c.total, c.kept)
    }

    fn report(&self) -> String {
        layer_table(&self.0)
    }

    fn layer_names(&self) -> Vec<String> {
        self.0.layers().iter().map(|l| l.name.clone()).collect()
    }

    #[pyo3(signature = (dtype = "single"))]
    fn pack<'py>(&self, py: Python<'py>, dtype: &str) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = freqreg::pack_model(&self.0, self::dtype(dtype)?).map_err(py_err)?;
        Ok(PyBytes::new(py, &bytes))
    }
}

#[pymodule]
fn freqreg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FreqRegError", m.py().get_type::<FreqRegError>())?;
    m.add_function(wrap_pyfunction!(idct, m)?)?;
    m.add_function(wrap_pyfunction!(dct, m)?)?;
    m.add_function(wrap_pyfunction!(idct_adjoint, m)?)?;
    m.add_class::<PyZigzagPlan>()?;
    m.add_class::<PyFrequencyTensor>()?;
    m.add_class::<PyTruncationSchedule>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyEpochRecord>()?;
    m.add_class::<PyModel>()?;
    Ok(())
}
