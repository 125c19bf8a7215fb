//! Dense `f64` tensors, a reverse-mode tape, Adam, and the checkpoint
//! container. Every learnable computation in the crate runs through here.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod params;
pub mod rng;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use params::{Bound, ParamStore};
pub use rng::DropoutKey;
pub use tape::{bce_value, sigmoid, Tape, Var, BCE_CLAMP};
pub use tensor::{matmul_raw, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("label must be 0 or 1, got {0}")]
    Label(f64),
    #[error("optimizer state error: {0}")]
    State(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
