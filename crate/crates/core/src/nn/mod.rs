//! Tensors, the differentiable layer set, Adam and gradient checking.

mod adam;
mod gradcheck;
mod kernels;
mod real;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradient_check, relative_error, GradCheckOptions, GradCheckReport, ParamCheck};
pub use real::Real;
pub use tape::{ActivationFn, BaseActivation, Fault, Tape, Var, CE_CLAMP};
pub use tensor::Tensor;
