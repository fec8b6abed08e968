use sha2::{Digest, Sha256};

use crate::denoiser::{init_denoiser, DenoiserConfig, DenoiserWeights};
use crate::error::Result;
use crate::image_decoder::{init_decoder, DecoderWeights, LinearDecodeMatrix};
use crate::text_encoder::{init_encoder, EncoderConfig, TextEncoder};
use crate::tokenizer::Tokenizer;

/// Bumped whenever any change could alter trajectory bytes.
pub const ENGINE_VERSION: &str = concat!("diffscope-", env!("CARGO_PKG_VERSION"), "+traj1");

pub const DEFAULT_ENCODER_SEED: u64 = 0x7e47;
pub const DEFAULT_DENOISER_SEED: u64 = 0xd1ff;
pub const DEFAULT_DECODER_SEED: u64 = 0xdec0;

/// Everything a generation needs besides its [`GenerationConfig`](super::GenerationConfig).
/// Immutable and shareable across threads.
#[derive(Debug)]
pub struct Engine {
    pub(crate) tokenizer: Tokenizer,
    pub(crate) text_encoder: TextEncoder,
    pub(crate) denoiser: DenoiserWeights,
    pub(crate) decoder: DecoderWeights,
    pub(crate) preview: LinearDecodeMatrix,
    version: String,
}

/// Serialized weight files replacing the seed-initialized defaults.
#[derive(Debug, Default, Clone, Copy)]
pub struct WeightOverrides<'a> {
    pub text_encoder: Option<&'a [u8]>,
    pub denoiser: Option<&'a [u8]>,
    pub decoder: Option<&'a [u8]>,
}

impl Engine {
    /// CLIP tokenizer plus seed-initialized networks.
    pub fn new_default() -> Result<Self> {
        Self::with_weights(WeightOverrides::default())
    }

    /// Default engine with some networks loaded from weight files. The engine
    /// version then carries a digest of the loaded bytes so cached
    /// trajectories from other weights are never reused.
    pub fn with_weights(overrides: WeightOverrides<'_>) -> Result<Self> {
        let tokenizer = Tokenizer::clip();
        let mut encoder = init_encoder(
            DEFAULT_ENCODER_SEED,
            EncoderConfig::with_vocab(tokenizer.vocab().len()),
        )?;
        let mut denoiser = init_denoiser(DEFAULT_DENOISER_SEED, DenoiserConfig::default())?;
        let mut decoder = init_decoder(DEFAULT_DECODER_SEED)?;

        let mut hasher = Sha256::new();
        let mut overridden = false;
        for (tag, bytes) in [
            ("text_encoder", overrides.text_encoder),
            ("denoiser", overrides.denoiser),
            ("decoder", overrides.decoder),
        ] {
            let Some(bytes) = bytes else { continue };
            match tag {
                "text_encoder" => encoder.load(bytes)?,
                "denoiser" => denoiser.load(bytes)?,
                _ => decoder.load(bytes)?,
            }
            hasher.update(tag.as_bytes());
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(bytes);
            overridden = true;
        }
        let version = if overridden {
            format!("{ENGINE_VERSION}/w{}", &hex::encode(hasher.finalize())[..16])
        } else {
            ENGINE_VERSION.to_owned()
        };
        Ok(Self {
            tokenizer,
            text_encoder: TextEncoder::new(encoder),
            denoiser,
            decoder,
            preview: LinearDecodeMatrix::default(),
            version,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn text_encoder(&self) -> &TextEncoder {
        &self.text_encoder
    }

    pub fn denoiser(&self) -> &DenoiserWeights {
        &self.denoiser
    }

    pub fn decoder(&self) -> &DecoderWeights {
        &self.decoder
    }

    pub fn preview_matrix(&self) -> &LinearDecodeMatrix {
        &self.preview
    }
}
