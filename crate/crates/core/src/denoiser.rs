//! Toy UNet noise predictor with text cross-attention, and the
//! classifier-free-guidance combination of its two branches.
//!
//! Layout for `n_resolutions = L` with level widths `base · 2^l`:
//! `conv_in → [ResBlock → CrossAttn → (downsample)]×L → mid ResBlock/CrossAttn →
//! [concat skip → ResBlock → CrossAttn → (upsample)]×L → GroupNorm/SiLU → conv_out`.
//! Every ResBlock receives the sinusoidal embedding of the continuous training
//! timestep that corresponds to σ.

use once_cell::sync::Lazy;

use crate::error::{Error, Result};
use crate::nn::{
    self, attention, impl_params, silu, upsample_nearest2x, Conv2d, FeatureMap, GroupNorm, Linear,
};
use crate::numerics::{RngState, Tensor};
use crate::scheduler::{sigma_to_timestep, training_sigmas};
use crate::text_encoder::TextRepresentation;

static TRAIN_SIGMAS: Lazy<Vec<f64>> = Lazy::new(training_sigmas);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserConfig {
    pub latent_channels: usize,
    pub latent_size: usize,
    pub base_channels: usize,
    pub n_resolutions: usize,
    pub d_text: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            latent_channels: 4,
            latent_size: 8,
            base_channels: 32,
            n_resolutions: 2,
            d_text: 64,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.latent_channels,
            self.latent_size,
            self.base_channels,
            self.n_resolutions,
            self.d_text,
        ];
        if dims.contains(&0) {
            return Err(Error::invalid(format!(
                "denoiser config fields must be positive: {self:?}"
            )));
        }
        let factor = 1usize
            .checked_shl(self.n_resolutions as u32 - 1)
            .filter(|&f| f <= self.latent_size)
            .ok_or_else(|| Error::invalid("too many resolutions for the latent size"))?;
        if !self.latent_size.is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "latent_size {} is not divisible by 2^(n_resolutions - 1) = {factor}",
                self.latent_size
            )));
        }
        Ok(())
    }

    pub fn latent_shape(&self) -> [usize; 3] {
        [self.latent_channels, self.latent_size, self.latent_size]
    }

    pub fn level_channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn time_embed_dim(&self) -> usize {
        4 * self.base_channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock {
    pub norm1: GroupNorm,
    pub conv1: Conv2d,
    pub time_proj: Linear,
    pub norm2: GroupNorm,
    pub conv2: Conv2d,
    pub skip: Option<Conv2d>,
}
impl_params!(ResBlock { norm1, conv1, time_proj, norm2, conv2, skip });

impl ResBlock {
    fn init(rng: &mut RngState, inputs: usize, outputs: usize, temb: usize) -> Result<Self> {
        Ok(Self {
            norm1: GroupNorm::new(inputs)?,
            conv1: Conv2d::init(rng, inputs, outputs, 3, 1, 1)?,
            time_proj: Linear::init(rng, temb, outputs, 1.0 / (temb as f32).sqrt())?,
            norm2: GroupNorm::new(outputs)?,
            conv2: Conv2d::init(rng, outputs, outputs, 3, 1, 1)?,
            skip: if inputs == outputs {
                None
            } else {
                Some(Conv2d::init(rng, inputs, outputs, 1, 1, 0)?)
            },
        })
    }

    fn forward(&self, x: &FeatureMap, temb_act: &[f32]) -> FeatureMap {
        let h = self.conv1.forward(&self.norm1.forward(x).map(silu));
        let t = self.time_proj.forward(temb_act, 1);
        let h = h.add_channel_bias(&t);
        let h = self.conv2.forward(&self.norm2.forward(&h).map(silu));
        match &self.skip {
            Some(conv) => h.add_map(&conv.forward(x)),
            None => h.add_map(x),
        }
    }
}

/// Single-head attention from spatial positions onto text vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttention {
    pub norm: GroupNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
}
impl_params!(CrossAttention { norm, q, k, v, out });

impl CrossAttention {
    fn init(rng: &mut RngState, channels: usize, d_text: usize) -> Result<Self> {
        let (sc, st) = (1.0 / (channels as f32).sqrt(), 1.0 / (d_text as f32).sqrt());
        Ok(Self {
            norm: GroupNorm::new(channels)?,
            q: Linear::init(rng, channels, channels, sc)?,
            k: Linear::init(rng, d_text, channels, st)?,
            v: Linear::init(rng, d_text, channels, st)?,
            out: Linear::init(rng, channels, channels, sc)?,
        })
    }

    fn forward(&self, x: &FeatureMap, text: &TextRepresentation) -> FeatureMap {
        let (c, n, m) = (x.channels, x.plane(), text.context_len());
        let tokens = self.norm.forward(x).to_tokens();
        let q = self.q.forward(&tokens, n);
        let k = self.k.forward(text.vectors.data(), m);
        let v = self.v.forward(text.vectors.data(), m);
        let a = attention(&q, &k, &v, n, m, c, 1, false);
        let o = self.out.forward(&a, n);
        x.clone()
            .add_map(&FeatureMap::from_tokens(&o, c, x.height, x.width))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnetLevel {
    pub res: ResBlock,
    pub attn: CrossAttention,
    /// Stride-2 conv on the way down, or nearest-2× + conv on the way up.
    pub resample: Option<Conv2d>,
}
impl_params!(UnetLevel { res, attn, resample });

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserWeights {
    pub config: DenoiserConfig,
    pub time_fc1: Linear,
    pub time_fc2: Linear,
    pub conv_in: Conv2d,
    pub down: Vec<UnetLevel>,
    pub mid_res: ResBlock,
    pub mid_attn: CrossAttention,
    /// Deepest level first.
    pub up: Vec<UnetLevel>,
    pub norm_out: GroupNorm,
    pub conv_out: Conv2d,
}
impl_params!(DenoiserWeights {
    time_fc1, time_fc2, conv_in, down, mid_res, mid_attn, up, norm_out, conv_out
});

/// Predicted noise, same shape as the latent.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePrediction {
    pub eps: Tensor,
}

pub fn init_denoiser(seed: u64, config: DenoiserConfig) -> Result<DenoiserWeights> {
    config.validate()?;
    let mut rng = RngState::for_stream(seed, "denoiser");
    let base = config.base_channels;
    let temb = config.time_embed_dim();
    let levels = config.n_resolutions;

    let time_fc1 = Linear::init(&mut rng, base, temb, 1.0 / (base as f32).sqrt())?;
    let time_fc2 = Linear::init(&mut rng, temb, temb, 1.0 / (temb as f32).sqrt())?;
    let conv_in = Conv2d::init(&mut rng, config.latent_channels, base, 3, 1, 1)?;

    let mut down = Vec::with_capacity(levels);
    let mut ch = base;
    for l in 0..levels {
        let out = config.level_channels(l);
        down.push(UnetLevel {
            res: ResBlock::init(&mut rng, ch, out, temb)?,
            attn: CrossAttention::init(&mut rng, out, config.d_text)?,
            resample: if l + 1 < levels {
                Some(Conv2d::init(&mut rng, out, out, 3, 2, 1)?)
            } else {
                None
            },
        });
        ch = out;
    }
    let mid_res = ResBlock::init(&mut rng, ch, ch, temb)?;
    let mid_attn = CrossAttention::init(&mut rng, ch, config.d_text)?;

    let mut up = Vec::with_capacity(levels);
    for l in (0..levels).rev() {
        let skip = config.level_channels(l);
        up.push(UnetLevel {
            res: ResBlock::init(&mut rng, ch + skip, skip, temb)?,
            attn: CrossAttention::init(&mut rng, skip, config.d_text)?,
            resample: if l > 0 {
                Some(Conv2d::init(&mut rng, skip, skip, 3, 1, 1)?)
            } else {
                None
            },
        });
        ch = skip;
    }
    Ok(DenoiserWeights {
        config,
        time_fc1,
        time_fc2,
        conv_in,
        down,
        mid_res,
        mid_attn,
        up,
        norm_out: GroupNorm::new(base)?,
        conv_out: Conv2d::init(&mut rng, base, config.latent_channels, 3, 1, 1)?,
    })
}

/// Transformer-style sinusoidal features of a (fractional) timestep.
pub fn timestep_embedding(t: f64, dim: usize) -> Vec<f32> {
    let half = dim / 2;
    let mut out = vec![0.0f32; dim];
    for i in 0..half {
        let freq = libm::exp(-(10_000f64).ln() * i as f64 / half as f64);
        let arg = t * freq;
        out[i] = libm::cos(arg) as f32;
        out[half + i] = libm::sin(arg) as f32;
    }
    out
}

impl DenoiserWeights {
    pub fn load(&mut self, bytes: &[u8]) -> Result<()> {
        nn::weights_file::load_into(self, bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        nn::weights_file::save(self)
    }

    pub fn param_count(&self) -> usize {
        nn::param_count(self)
    }
}

/// Something that predicts the noise in a latent at a noise level.
///
/// The sampling loop is generic over this so analytic oracles can stand in
/// for the network.
pub trait NoisePredictor: Sync {
    fn predict(&self, latent: &Tensor, sigma: f64, text: &TextRepresentation) -> Result<NoisePrediction>;
}

impl NoisePredictor for DenoiserWeights {
    fn predict(&self, latent: &Tensor, sigma: f64, text: &TextRepresentation) -> Result<NoisePrediction> {
        predict_noise(latent, sigma, text, self)
    }
}

pub fn predict_noise(
    latent: &Tensor,
    sigma: f64,
    text: &TextRepresentation,
    w: &DenoiserWeights,
) -> Result<NoisePrediction> {
    let cfg = &w.config;
    latent.ensure_shape(&cfg.latent_shape(), "predict_noise latent")?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if text.dim() != cfg.d_text {
        return Err(Error::shape(format!(
            "text vectors have width {}, denoiser expects {}",
            text.dim(),
            cfg.d_text
        )));
    }

    let c_in = (1.0 / (sigma * sigma + 1.0).sqrt()) as f32;
    let x = FeatureMap::from_tensor(latent)?.map(|v| v * c_in);

    let t = sigma_to_timestep(sigma, &TRAIN_SIGMAS);
    let temb = timestep_embedding(t, cfg.base_channels);
    let temb = w.time_fc1.forward(&temb, 1);
    let temb: Vec<f32> = temb.into_iter().map(silu).collect();
    let temb = w.time_fc2.forward(&temb, 1);
    let temb_act: Vec<f32> = temb.into_iter().map(silu).collect();

    let mut h = w.conv_in.forward(&x);
    let mut skips = Vec::with_capacity(w.down.len());
    for level in &w.down {
        h = level.res.forward(&h, &temb_act);
        h = level.attn.forward(&h, text);
        skips.push(h.clone());
        if let Some(conv) = &level.resample {
            h = conv.forward(&h);
        }
    }
    h = w.mid_res.forward(&h, &temb_act);
    h = w.mid_attn.forward(&h, text);
    for level in &w.up {
        let skip = skips.pop().expect("one skip per level");
        h = level.res.forward(&h.concat(&skip)?, &temb_act);
        h = level.attn.forward(&h, text);
        if let Some(conv) = &level.resample {
            h = conv.forward(&upsample_nearest2x(&h));
        }
    }
    let out = w.conv_out.forward(&w.norm_out.forward(&h).map(silu));
    Ok(NoisePrediction {
        eps: out.into_tensor("predict_noise")?,
    })
}

/// `ε = ε_uncond + scale · (ε_cond − ε_uncond)`, evaluated in `f64` per element.
pub fn guided_noise(
    eps_uncond: &NoisePrediction,
    eps_cond: &NoisePrediction,
    scale: f64,
) -> Result<NoisePrediction> {
    if eps_uncond.eps.shape() != eps_cond.eps.shape() {
        return Err(Error::shape(format!(
            "guided_noise: {:?} vs {:?}",
            eps_uncond.eps.shape(),
            eps_cond.eps.shape()
        )));
    }
    if !scale.is_finite() {
        return Err(Error::invalid("guidance scale must be finite"));
    }
    let data = eps_uncond
        .eps
        .data()
        .iter()
        .zip(eps_cond.eps.data())
        .map(|(&u, &c)| {
            let (u, c) = (f64::from(u), f64::from(c));
            (u + scale * (c - u)) as f32
        })
        .collect();
    Ok(NoisePrediction {
        eps: Tensor::from_kernel(eps_uncond.eps.shape().to_vec(), data, "guided_noise")?,
    })
}
