//! A deliberately small dense-tensor engine with reverse-mode automatic
//! differentiation.
//!
//! Everything is `f64` and row-major. The operator set is exactly what the
//! rectification network, its losses and the differentiable warps need:
//! convolutions with circular horizontal padding, pixel (un)shuffle,
//! attention, normalization, bilinear grid sampling and a handful of
//! elementwise functions. Reductions run in a fixed order so that two
//! backward passes over identical inputs produce bit-identical gradients.

pub mod container;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod sample;
mod tensor;

pub use conv::{Conv2dOpts, PadMode};
pub use error::{Result, TensorError};
pub use sample::{HorizontalWrap, InterpTable};
pub use tensor::{grad_enabled, no_grad, numel, NoGradGuard, Tensor};
