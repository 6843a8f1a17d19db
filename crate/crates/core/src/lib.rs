//! Log-Gaussian gamma process regression.

pub mod cli;
pub mod error;
pub mod gp_core;
pub mod linearization;
pub mod model;
pub mod par;
pub mod rng;
pub mod sampler;
pub mod schemes;

pub use error::{Error, Result};
