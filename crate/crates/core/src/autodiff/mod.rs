//! Minimal reverse-mode differentiation for dense ranking networks.

mod check;
mod params;
mod tape;
mod tensor;

pub use check::{gradient_check, GradCheckReport};
pub use params::{ParamId, Parameter, ParameterSet};
pub use tape::{softmax_values, Tape, Var};
pub use tensor::Tensor;
