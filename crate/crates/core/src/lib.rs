pub mod bottleneck;
pub mod cli;
pub mod diffusion;
pub mod error;
pub mod fluid;
mod linalg;
pub mod model;
pub mod parallel;
pub mod paths;
pub mod reflection;
pub mod scenarios;
pub mod simulator;
pub mod stochastic;
pub mod verify;

pub use error::{Error, Result};
