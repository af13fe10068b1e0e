//! FairGT: a fairness-aware graph transformer with spectral structure
//! encoding and sensitive-group hop tokens.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod graph;
pub mod hops;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod spectral;
pub mod synthetic;
pub mod train;

pub use error::{Error, ErrorClass, Result};
