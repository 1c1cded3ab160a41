pub mod autodiff;
pub mod data;
pub mod generator;
pub mod losses;
pub mod metrics;
pub mod perturbation;
mod error;
pub mod provenance;
pub mod scoring;
pub mod trainer;

pub use error::{Error, Result};
