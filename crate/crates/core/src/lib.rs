pub mod analytic;
pub mod engine;
pub mod error;
pub mod harness;
pub mod model;
pub mod search;
pub mod tracegen;

pub use error::{Error, Result};
