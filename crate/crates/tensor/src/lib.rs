//! Dense tensor arithmetic with tape-based reverse-mode automatic
//! differentiation, supplying the kernels of the CIT network: convolution,
//! pooling, batch and layer normalization, attention, dropout, losses, plus
//! parameter storage, Adam, and the `CKPT` checkpoint format.

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod optim;
pub mod params;
mod scalar;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{BatchNormState, Graph, Mode, RunningStats, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{Gradients, ModelParams, ParamEntry};
pub use scalar::{Precision, Scalar};
pub use tensor::{numel, strides, Tensor};
