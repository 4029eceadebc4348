pub mod checkpoint;
pub mod data;
pub mod error;
pub mod explain;
pub mod flow;
pub mod imageio;
pub mod nn;
pub mod pose;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Element, Tape, Tensor, Var};
