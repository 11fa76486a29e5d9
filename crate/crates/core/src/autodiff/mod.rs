//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records operations as they execute; [`Tape::backward`] replays
//! them in reverse. Parameters live in a [`ParamSet`] and are bound onto a
//! fresh tape for every forward pass.

mod optim;
mod tape;
mod tensor;

pub use optim::{adam_step, sgd_step, AdamConfig, Param, ParamSet};
pub use tape::{Gradients, NormMode, NormStats, Tape, Var, BATCH_NORM_EPS};
pub use tensor::{matmul, matmul_nt, matmul_tn, SparseMatrix, Tensor};
