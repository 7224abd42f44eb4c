//! Sequence surrogates for simulation trajectories.
//!
//! Generates 1D diffusion databases, trains stacked-GRU encoder-decoder
//! models and feed-forward state-transition baselines on them, and runs the
//! accuracy, input-length, resolution-extrapolation and early-termination
//! studies.

pub mod cli;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod evaluation;
pub mod json;
pub mod models;
pub mod numerics;
pub mod sequence;
pub mod training;

pub use error::{Error, Result};
pub use sequence::SimulationSequence;
