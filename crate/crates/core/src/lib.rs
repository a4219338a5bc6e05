pub mod alignment;
pub mod circuit;
pub mod cli;
pub mod encoding;
pub mod error;
pub mod linalg;
pub mod optim;
pub mod rl;
pub mod rng;
pub mod softu;
pub mod tasks;

pub use error::{Error, Result};
