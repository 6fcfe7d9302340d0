//! Multi-task bi-LSTM sequence labeling for adverse drug reaction (ADR)
//! extraction, with adverse drug event (ADE) detection as auxiliary task.

pub mod cli;
pub mod embeddings;
pub mod features;
pub mod error;
pub mod eval;
pub mod network;
pub mod rng;
pub mod synth;
pub mod text;
pub mod trainer;
pub mod weak;

pub use error::{Error, Result};
