//! Deterministic, desk-scale text-to-image latent diffusion engine.
//!
//! A prompt is tokenized with CLIP byte-pair encoding, encoded into per-token
//! vectors, and used to steer a small UNet that predicts noise in a 4×8×8
//! latent. A linear multistep sampler removes that noise over 50 steps under
//! classifier-free guidance. Every intermediate artifact (latents, noise
//! predictions, previews) is recorded in a [`pipeline::Trajectory`].
//!
//! Networks are seed-initialized stand-ins: outputs are reproducible
//! bit-for-bit but do not resemble the prompt.

pub mod denoiser;
pub mod error;
pub mod image_decoder;
pub mod nn;
pub mod numerics;
pub mod par;
pub mod pipeline;
pub mod scheduler;
pub mod text_encoder;
pub mod tokenizer;

pub use error::{Error, Result};
pub use numerics::{seeded_rng, standard_normal_tensor, RngState, Tensor};
pub use pipeline::{
    generate, guidance_sweep, prompt_catalog, Engine, GenerationConfig, PromptEntry, Trajectory,
    TrajectoryFrame, GUIDANCE_SWEEP_SCALES,
};
pub use tokenizer::{TokenSequence, Tokenizer};
