//! One full generation, recorded frame by frame.

mod catalog;
mod config;
mod engine;
mod format;
mod sampler;
mod trajectory;

pub use catalog::{catalog_prompt, prompt_catalog, PromptEntry, CATALOG_VERSION};
pub use config::{
    GenerationConfig, DEFAULT_GUIDANCE_SCALE, MAX_GUIDANCE_SCALE, MIN_GUIDANCE_SCALE,
};
pub use engine::{
    Engine, WeightOverrides, DEFAULT_DECODER_SEED, DEFAULT_DENOISER_SEED, DEFAULT_ENCODER_SEED,
    ENGINE_VERSION,
};
pub use format::{deserialize_trajectory, serialize_trajectory, FORMAT_VERSION, MAGIC};
pub use sampler::{sample, StepOutput};
pub use trajectory::{
    generate, guidance_sweep, initial_latent, FrameNoise, Trajectory, TrajectoryFrame,
    GUIDANCE_SWEEP_SCALES,
};
