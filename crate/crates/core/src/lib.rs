pub mod analysis;
pub mod attention;
pub mod error;
pub mod harness;
pub mod nn;
pub mod srp;
pub mod tensor;

pub use error::{Error, Result, TensorError};
pub use tensor::{Graph, Scalar, Tensor, Var};
