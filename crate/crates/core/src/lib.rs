pub mod cartan;
pub mod cli;
pub mod error;
pub mod generator;
pub mod json;
pub mod kak;
pub mod linalg;
pub mod partition;

pub use error::{Error, Result};
