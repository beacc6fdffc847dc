//! Offline ("Lightning") and online on-policy distillation over tabular
//! autoregressive policies.
//!
//! The response space of a fixed-horizon tabular policy is finite, so every
//! expectation in the distillation objectives can be computed exactly by
//! enumeration. The [`oracle`] does that; [`objectives`] builds advantages,
//! objectives and gradients on top of it; [`diagnostics`] turns the gradient
//! discrepancy bounds into numeric checks; [`pipeline`] runs the two-stage
//! SFT + offline distillation procedure and a standard online trainer.
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod instances;
pub mod objectives;
pub mod oracle;
pub mod pipeline;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
pub use policy::{GradientVector, InitSpec, PolicyShape, PromptSet, TabularPolicy, Trajectory, Vocab};
pub use rng::SeededRng;
