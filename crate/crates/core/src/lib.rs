pub mod continual;
pub mod datagen;
pub mod diffcore;
mod error;
pub mod fieldmodels;
pub mod harness;
pub mod metrics;
mod seeds;
pub mod training;

pub use error::{Error, Result};
pub use seeds::derive_seed;
