pub mod error;
pub mod eval;
pub mod features;
pub mod grid;
pub mod models;
pub mod nn;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
