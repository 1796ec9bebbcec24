pub mod error;
pub mod harness;
pub mod integrators;
pub mod kv;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod spectral;
pub mod system;

pub use error::{Error, Result};
