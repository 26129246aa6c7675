//! Dense tensors, reverse-mode autodiff, Adam and a finite-difference
//! gradient checker.

mod gradcheck;
mod graph;
mod optim;
mod params;
mod rng;
mod tensor;

pub use gradcheck::{grad_check, grad_check_with, rel_err, GradCheckEntry, GradCheckOptions};
pub use graph::{Gradients, Graph, Var};
pub use optim::{adam_step, clip_global_norm, global_norm, AdamConfig};
pub use params::ParamGroup;
pub use rng::{derive_seed, CounterRng};
pub use tensor::{DType, Mask, Tensor};
