//! Dense arithmetic, nonlinearities, losses and seeded randomness.

mod functions;
mod matrix;
pub mod rng;

pub use functions::{argmax, sigmoid, sigmoid_prime, softmax, softmax_cross_entropy};
pub use matrix::{affine, axpy, dot, Matrix};
pub use rng::{Purpose, Rng64, RngStreams};

/// Floating point type used for all network state.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;
