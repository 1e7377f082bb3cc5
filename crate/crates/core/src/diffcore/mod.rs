//! Minimal reverse-mode differentiation and optimization on dense `f64`
//! arrays. Everything trainable in the crate is built from these pieces.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, record, Recording};
pub use optim::{OptimizerKind, OptimizerState};
pub use params::ParamStore;
pub use tape::{Cmp, CustomOp, Gradients, Padding, Tape, Var};
pub use tensor::{Shape, Tensor};
