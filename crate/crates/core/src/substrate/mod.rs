//! Differentiable building blocks: tensors, a reverse-mode tape, GRU and
//! dense layers, Adam, and a finite-difference gradient checker.

mod gradcheck;
mod layers;
mod params;
mod real;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, FdConfig, FdReport};
pub use layers::{dense_specs, gru_specs, Dense, Gru};
pub use params::{clip_global_norm, AdamConfig, Init, ParamStore};
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{argmax, cross_entropy, dense, embedding_lookup, softmax, Activation, Tensor, PROB_FLOOR};
