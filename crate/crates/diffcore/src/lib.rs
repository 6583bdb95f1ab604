//! Dense-tensor reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable n-dimensional array; a [`Tape`] records every
//! primitive executed through it and replays the records in reverse to
//! accumulate gradients into `requires_grad` leaves. Training runs in f32;
//! gradient verification instantiates the same code with f64 (finite
//! differences are unreliable in single precision).
//!
//! A tape and the tensors produced under it are confined to one execution
//! context (`Rc` storage makes them `!Send`); independent tapes may run on
//! independent threads.

mod element;
mod error;
pub mod gradcheck;
pub mod init;
mod ops;
mod tape;
mod tensor;

pub use element::{lit, Element};
pub use error::TensorError;
pub use gradcheck::finite_diff_check;
pub use init::RngSeed;
pub use ops::resample::ResampleMode;
pub use tape::Tape;
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, TensorError>;
