//! Freezing-of-gait detection lab.
//!
//! From-scratch machine learning for IMU gait data: dataset ingest and
//! preprocessing, tree/stacking classifiers with nested cross-validation,
//! exact Shapley attribution, a small neural kit (Conv1D -> LSTM -> dense)
//! with analytic gradients, and a federated-averaging simulator.
//!
//! Everything randomized is a pure function of `(inputs, seed)`.

pub mod data;
pub mod error;
pub mod eval;
pub mod explain;
pub mod fed;
pub mod nn;
pub mod model_io;
pub mod report;
pub mod stacking;
pub mod trees;

mod numeric;
mod rng;

pub use error::{Error, Result};
pub use numeric::hard_labels;
