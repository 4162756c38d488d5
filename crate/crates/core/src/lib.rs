//! Sentiment classification core: deterministic text preparation, a
//! from-scratch LSTM classifier trained with backpropagation through time,
//! and the precision / recall / F1 / accuracy evaluation metrics.
//!
//! Model and metric code is generic over the scalar type. Training and
//! inference run on [`Scalar`] (`f32` or `f64`); the metric functions accept
//! any [`eval::MetricScalar`], which includes exact rationals.

pub mod error;
pub mod eval;
pub mod label;
pub mod model;
pub mod scalar;
pub mod synth;
pub mod textprep;

pub use error::{Error, Result};
pub use label::Sentiment;
pub use scalar::Scalar;

/// Double-precision model parameters, the default used by the pipeline.
pub type ModelParams = model::ModelParams<f64>;
/// Single-precision model parameters.
pub type ModelParams32 = model::ModelParams<f32>;
/// Gradient / optimizer-state container in double precision.
pub type Tensors = model::Tensors<f64>;
/// Inference bundle (parameters, vocabulary, cleaning rules) in double precision.
pub type SentimentModel = model::SentimentModel<f64>;
/// Evaluation report with `f64` metric values.
pub type EvalReport = eval::EvalReport<f64>;
