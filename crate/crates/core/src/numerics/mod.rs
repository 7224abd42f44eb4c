//! Dense arithmetic, activations, loss, Adam, seeded random streams and
//! finite-difference gradient verification. Everything here is `f64`.

mod activation;
mod grad_check;
mod matrix;
mod optim;
mod rng;

pub use activation::{mse, sigmoid, Activation};
pub use grad_check::{grad_check, grad_check_by_group, relative_deviation, GroupDeviation};
pub use matrix::{affine, dot, Matrix};
pub use optim::{adam_step, AdamState, ParamGroup};
pub use rng::RngStream;
