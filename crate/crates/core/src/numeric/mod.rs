//! Dense `f64` tensors, reverse-mode differentiation, optimization and
//! checkpoint I/O.

pub mod checkpoint;
pub mod gradcheck;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use params::{Adam, AdamConfig, Gradients, ParamId, ParamStore};
pub use rng::RngState;
pub use tape::{Backward, Tape, Var};
pub use tensor::Tensor;
