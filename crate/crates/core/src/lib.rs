//! Frequency-domain regularization of network parameters.
//!
//! Weights are stored as cosine-transform coefficients, truncated to the
//! low-frequency corner `|x|_1 < epsilon`, and reconstructed with an N-D
//! inverse transform whenever a layer needs its spatial kernel. Packed models
//! keep only shapes, thresholds, and surviving coefficients.

pub mod cli;
pub mod data;
pub mod dct;
pub mod document;
pub mod error;
pub mod freq_tensor;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod report;
pub mod scheduler;
pub mod serialize;
pub mod tensor;
pub mod train;
pub mod zigzag;

pub use data::{load_idx, synthetic_blobs, LabeledDataset};
pub use dct::{dct_1d, dct_nd, idct_1d, idct_nd, idct_nd_adjoint};
pub use error::{FreqError, Result};
pub use freq_tensor::FrequencyTensor;
pub use layers::{Activation, ActivationKind, Conv2dLayer, DenseLayer, LayerGrads, Weight};
pub use model::{build_model, Layer, Model, NamedLayer, ParameterCount, WeightMode};
pub use scheduler::TruncationSchedule;
pub use serialize::{pack_model, pack_tensor, unpack_model, unpack_tensor, Dtype};
pub use tensor::DenseTensor;
pub use train::{evaluate, train, train_with, EpochRecord, TrainConfig, TrainReport};
pub use zigzag::ZigzagPlan;
