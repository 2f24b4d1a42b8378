pub mod cli;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod prob;
pub mod rng;
pub mod search;
pub mod simulators;

pub use error::{Error, Result};
