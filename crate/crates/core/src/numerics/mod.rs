//! Tensor arithmetic, reverse-mode gradients, initialisation and Adam.

mod activation;
mod adam;
mod init;
mod params;
pub mod rng;
mod tape;
mod tensor;

pub use activation::{activate, sigmoid, softplus, Activation, LEAK};
pub use adam::{AdamConfig, AdamState};
pub use init::{glorot_uniform, init_params};
pub use params::{ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
