//! Deterministic tensor container, PRNG and the handful of kernels the
//! encoder and denoiser are built from.

mod kernels;
mod rng;
mod tensor;

pub(crate) use kernels::normalize_row;
pub use kernels::{layer_norm, softmax_in_place, softmax_rows};
pub use rng::{seeded_rng, splitmix64, standard_normal_tensor, RngState};
pub use tensor::{Tensor, TensorStats};
