pub mod data;
pub mod encoders;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod imaging;
pub mod nn;
pub mod predictor;
pub mod tokenizer;

pub use error::{Error, Result};
