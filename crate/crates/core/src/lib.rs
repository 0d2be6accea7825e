pub mod airmodel;
pub mod detectors;
pub mod error;
pub mod evaluate;
pub mod fusion;
pub mod neuralsc;
pub mod numerics;
pub mod simplified;

pub use error::{Error, Result};
