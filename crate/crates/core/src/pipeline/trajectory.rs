use crate::denoiser::NoisePrediction;
use crate::error::{Error, Result};
use crate::image_decoder::{encode_png, linear_preview, upscale_decode};
use crate::numerics::{seeded_rng, standard_normal_tensor, Tensor};
use crate::par;
use crate::scheduler::build_sigma_schedule;
use crate::tokenizer::TokenSequence;

use super::sampler::{sample, StepOutput};
use super::{Engine, GenerationConfig};

/// Scales compared side by side by [`guidance_sweep`].
pub const GUIDANCE_SWEEP_SCALES: [f64; 4] = [0.0, 1.0, 7.0, 20.0];

/// The three noise predictions of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameNoise {
    pub cond: NoisePrediction,
    pub uncond: NoisePrediction,
    pub guided: NoisePrediction,
}

impl FrameNoise {
    pub fn as_array(&self) -> [&NoisePrediction; 3] {
        [&self.cond, &self.uncond, &self.guided]
    }
}

/// Frame `t` holds the latent after `t` refinements; frame 0 is the initial
/// noise and carries no predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFrame {
    pub timestep: usize,
    pub sigma: f64,
    pub latent: Tensor,
    pub noise: Option<FrameNoise>,
    pub preview_png: Vec<u8>,
    /// Cond, uncond, guided.
    pub noise_previews: Option<[Vec<u8>; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub engine_version: String,
    pub config: GenerationConfig,
    pub frames: Vec<TrajectoryFrame>,
    pub final_image: Vec<u8>,
    pub token_ids: TokenSequence,
    /// Unix seconds; left empty by [`generate`] so bytes depend only on the id.
    pub created_at: Option<u64>,
}

impl Trajectory {
    pub fn frame(&self, timestep: usize) -> Option<&TrajectoryFrame> {
        self.frames.get(timestep)
    }

    pub fn final_latent(&self) -> &Tensor {
        &self.frames.last().expect("trajectory has frames").latent
    }
}

/// Initial latent: `σ_max · N(0, I)` from the config seed. The only random
/// draw of a generation.
pub fn initial_latent(engine: &Engine, seed: u64, sigma_max: f64) -> Result<Tensor> {
    let shape = engine.denoiser.config.latent_shape();
    let z = standard_normal_tensor(&mut seeded_rng(seed), &shape)?;
    let data = z.data().iter().map(|&v| (f64::from(v) * sigma_max) as f32).collect();
    Tensor::new(shape.to_vec(), data)
}

fn preview_png(engine: &Engine, t: &Tensor) -> Result<Vec<u8>> {
    Ok(encode_png(&linear_preview(t, &engine.preview)?))
}

pub fn generate(engine: &Engine, cfg: &GenerationConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let tokens = engine.tokenizer.encode(&cfg.prompt).map_err(|e| Error::Prompt {
        prompt: cfg.prompt.clone(),
        source: Box::new(e),
    })?;
    let (cond, uncond) = par::join(
        || engine.text_encoder.encode(&tokens),
        || engine.text_encoder.unconditional(&engine.tokenizer),
    );
    let (cond, uncond) = (cond?, uncond?);

    let schedule = build_sigma_schedule(cfg.num_steps)?;
    let x0 = initial_latent(engine, cfg.seed, schedule.sigma_max())?;
    let steps = sample(
        &engine.denoiser,
        &schedule,
        x0.clone(),
        &cond,
        uncond,
        cfg.guidance_scale,
    )?;

    let sigmas = schedule.sigmas();
    let mut frames = par::map_range(steps.len() + 1, |t| -> Result<TrajectoryFrame> {
        if t == 0 {
            return Ok(TrajectoryFrame {
                timestep: 0,
                sigma: sigmas[0],
                preview_png: preview_png(engine, &x0)?,
                latent: x0.clone(),
                noise: None,
                noise_previews: None,
            });
        }
        let StepOutput {
            eps_cond,
            eps_uncond,
            eps,
            latent,
        } = steps[t - 1].clone();
        Ok(TrajectoryFrame {
            timestep: t,
            sigma: sigmas[t],
            preview_png: preview_png(engine, &latent)?,
            noise_previews: Some([
                preview_png(engine, &eps_cond)?,
                preview_png(engine, &eps_uncond)?,
                preview_png(engine, &eps)?,
            ]),
            latent,
            noise: Some(FrameNoise {
                cond: NoisePrediction { eps: eps_cond },
                uncond: NoisePrediction { eps: eps_uncond },
                guided: NoisePrediction { eps },
            }),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    frames.shrink_to_fit();

    let final_image = encode_png(&upscale_decode(&frames[frames.len() - 1].latent, &engine.decoder)?);
    Ok(Trajectory {
        id: cfg.trajectory_id(engine.version()),
        engine_version: engine.version().to_owned(),
        config: cfg.clone(),
        frames,
        final_image,
        token_ids: tokens,
        created_at: None,
    })
}

/// Trajectories at each of [`GUIDANCE_SWEEP_SCALES`], sharing `seed`.
pub fn guidance_sweep(engine: &Engine, prompt: &str, seed: u64) -> Result<Vec<Trajectory>> {
    let configs = GUIDANCE_SWEEP_SCALES
        .iter()
        .map(|&s| GenerationConfig::new(prompt, seed, s))
        .collect::<Result<Vec<_>>>()?;
    par::map_slice(&configs, |cfg| generate(engine, cfg))
        .into_iter()
        .collect()
}
