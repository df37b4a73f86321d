//! Simulator-based explanation and repair of DNN failures.

pub mod clustering;
pub mod error;
pub mod evolution;
pub mod neural;
pub mod param_space;
pub mod pipeline;
pub mod retrain;
pub mod rules;
pub mod seed;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
