//! Small neural-network building blocks shared by the encoder, denoiser and
//! upscaling decoder.
//!
//! Layers work on plain `Vec<f32>` feature maps in `[channels, height, width]`
//! or `[rows, features]` layout. Dot products accumulate in `f64` and each
//! output element is produced by a single sequential sum, so parallel and
//! sequential builds agree bit for bit.

mod layers;
mod params;
pub mod weights_file;

pub use layers::{
    attention, quick_gelu, sigmoid, silu, upsample_nearest2x, Conv2d, ConvTranspose2d, FeatureMap,
    GroupNorm, LayerNorm, Linear,
};
pub(crate) use params::impl_params;
pub use params::{normal_tensor, param_count, ParamField, Params};
