//! Attention-pooled consensus network with a small reverse-mode autodiff engine.

pub mod checkpoint;
pub mod graph;
pub mod model;
pub mod params;
pub mod tensor;
pub mod train;

pub use graph::{Activation, Graph, Var};
pub use model::{adam_step, cross_entropy_loss, Batch, Forward, ModelConfig, Prediction, RrccModel, Variant};
pub use params::{AdamConfig, Init, ParamId, ParamStore};
pub use tensor::Tensor;
pub use train::{train, train_resampled, EpochLog, Resampler, TrainReport, Trainer};
