//! Conditional normalizing-flow trajectory forecasting.
//!
//! A recurrent motion encoder summarizes an observed track into a
//! conditioning vector. A stack of conditional coupling layers with
//! rational-quadratic spline transforms maps standard-normal noise onto
//! future relative displacements, so every predicted trajectory comes with
//! its exact log-likelihood and any query trajectory can be scored in one
//! inverse pass.
//!
//! Module map:
//!
//! * [`spline`]: element-wise monotonic rational-quadratic spline.
//! * [`flow`]: coupling layers, permutations, sampling and `log_prob`.
//! * [`encoder`]: GRU motion encoder.
//! * [`model`]: the full parameterized model (encoder + flow).
//! * [`training`]: noise injection, NLL, gradients, Adam, checkpoints.
//! * [`data`]: dataset IO, windowing, rotation and scaling augmentation.
//! * [`eval`]: displacement metrics, likelihood ranking, top-k prediction.
//! * [`synthetic`]: generators for the toy tasks used by tests and demos.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod flow;
pub mod model;
pub mod nn;
pub mod spline;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use model::FlowModel;

/// A 2D position or displacement.
pub type Point = [f64; 2];
