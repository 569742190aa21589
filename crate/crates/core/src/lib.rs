//! Multi-read DNA sequence reconstruction under IDS noise and cluster
//! contamination: simulation, consensus baselines, an attention-pooled
//! neural reconstructor and the evaluation harness around them.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below pick the 64-bit instantiation used by default.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod contam;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod neural;
pub mod scalar;
pub mod seqcore;

pub use error::{Error, Result};

pub type Model = neural::RrccModel<f64>;
pub type Model32 = neural::RrccModel<f32>;
pub type Tensor = neural::Tensor<f64>;
pub type Graph = neural::Graph<f64>;
pub type ParamStore = neural::ParamStore<f64>;
pub type OneHot = seqcore::OneHotMatrix<f64>;
pub type ProbGrid = seqcore::BaseGrid<f64>;
