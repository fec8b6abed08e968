//! Desk-scale causal transformer text encoder.
//!
//! Token and position embeddings feed `n_layers` pre-layer-norm blocks
//! (causal multi-head self-attention, then a quick-GELU MLP, each with a
//! residual), followed by a final layer norm. Dimensions are deliberately tiny
//! and weights are seed-initialized unless a weight file is loaded.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::nn::{self, attention, impl_params, normal_tensor, quick_gelu, LayerNorm, Linear};
use crate::numerics::{RngState, Tensor};
use crate::tokenizer::{TokenSequence, Tokenizer, DEFAULT_CONTEXT_LEN};

const INIT_STD: f32 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub context_len: usize,
    pub vocab_size: usize,
}

impl EncoderConfig {
    pub fn with_vocab(vocab_size: usize) -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            context_len: DEFAULT_CONTEXT_LEN,
            vocab_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.d_model,
            self.n_layers,
            self.n_heads,
            self.context_len,
            self.vocab_size,
        ];
        if dims.contains(&0) {
            return Err(Error::invalid(format!(
                "encoder config fields must be positive: {self:?}"
            )));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::invalid(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
}
impl_params!(SelfAttention { q, k, v, out });

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub ln_attn: LayerNorm,
    pub attn: SelfAttention,
    pub ln_mlp: LayerNorm,
    pub fc_in: Linear,
    pub fc_out: Linear,
}
impl_params!(EncoderLayer { ln_attn, attn, ln_mlp, fc_in, fc_out });

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub config: EncoderConfig,
    pub token_embedding: Tensor,
    pub position_embedding: Tensor,
    pub layers: Vec<EncoderLayer>,
    pub final_ln: LayerNorm,
}
impl_params!(EncoderWeights { token_embedding, position_embedding, layers, final_ln });

/// Per-token vectors, `[context_len, d_model]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextRepresentation {
    pub vectors: Tensor,
}

impl TextRepresentation {
    pub fn context_len(&self) -> usize {
        self.vectors.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.vectors.shape()[1]
    }
}

pub fn init_encoder(seed: u64, config: EncoderConfig) -> Result<EncoderWeights> {
    config.validate()?;
    let mut rng = RngState::for_stream(seed, "text-encoder");
    let d = config.d_model;
    let token_embedding = normal_tensor(&mut rng, &[config.vocab_size, d], INIT_STD)?;
    let position_embedding = normal_tensor(&mut rng, &[config.context_len, d], INIT_STD)?;
    let layers = (0..config.n_layers)
        .map(|_| {
            Ok(EncoderLayer {
                ln_attn: LayerNorm::new(d)?,
                attn: SelfAttention {
                    q: Linear::init(&mut rng, d, d, INIT_STD)?,
                    k: Linear::init(&mut rng, d, d, INIT_STD)?,
                    v: Linear::init(&mut rng, d, d, INIT_STD)?,
                    out: Linear::init(&mut rng, d, d, INIT_STD)?,
                },
                ln_mlp: LayerNorm::new(d)?,
                fc_in: Linear::init(&mut rng, d, 4 * d, INIT_STD)?,
                fc_out: Linear::init(&mut rng, 4 * d, d, INIT_STD)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncoderWeights {
        config,
        token_embedding,
        position_embedding,
        layers,
        final_ln: LayerNorm::new(d)?,
    })
}

impl EncoderWeights {
    /// Replaces all parameters from a weight file produced by [`EncoderWeights::to_bytes`].
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

fn add_in_place(dst: &mut [f32], src: &[f32]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

pub fn encode_tokens(seq: &TokenSequence, w: &EncoderWeights) -> Result<TextRepresentation> {
    let cfg = &w.config;
    if seq.context_len() != cfg.context_len {
        return Err(Error::shape(format!(
            "token sequence has length {}, encoder expects {}",
            seq.context_len(),
            cfg.context_len
        )));
    }
    if let Some(&bad) = seq.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::invalid(format!(
            "token id {bad} is outside the encoder vocabulary of {}",
            cfg.vocab_size
        )));
    }
    let (n, d) = (cfg.context_len, cfg.d_model);
    let mut x = Vec::with_capacity(n * d);
    for (pos, &id) in seq.ids.iter().enumerate() {
        let tok = w.token_embedding.row(id as usize);
        let posv = w.position_embedding.row(pos);
        x.extend(tok.iter().zip(posv).map(|(a, b)| a + b));
    }
    for layer in &w.layers {
        let h = layer.ln_attn.forward(&x, n);
        let q = layer.attn.q.forward(&h, n);
        let k = layer.attn.k.forward(&h, n);
        let v = layer.attn.v.forward(&h, n);
        let a = attention(&q, &k, &v, n, n, d, cfg.n_heads, true);
        add_in_place(&mut x, &layer.attn.out.forward(&a, n));

        let h = layer.ln_mlp.forward(&x, n);
        let hidden: Vec<f32> = layer.fc_in.forward(&h, n).into_iter().map(quick_gelu).collect();
        add_in_place(&mut x, &layer.fc_out.forward(&hidden, n));
    }
    let out = w.final_ln.forward(&x, n);
    Ok(TextRepresentation {
        vectors: Tensor::from_kernel(vec![n, d], out, "encode_tokens")?,
    })
}

/// Representation of the empty prompt: the conditioning of the generic
/// (unconditional) noise branch.
pub fn unconditional_representation(
    w: &EncoderWeights,
    tokenizer: &Tokenizer,
) -> Result<TextRepresentation> {
    encode_tokens(&tokenizer.encode("")?, w)
}

/// Encoder weights with a lazily computed, cached unconditional representation.
#[derive(Debug)]
pub struct TextEncoder {
    weights: EncoderWeights,
    unconditional: OnceLock<TextRepresentation>,
}

impl TextEncoder {
    pub fn new(weights: EncoderWeights) -> Self {
        Self {
            weights,
            unconditional: OnceLock::new(),
        }
    }

    pub fn weights(&self) -> &EncoderWeights {
        &self.weights
    }

    pub fn encode(&self, seq: &TokenSequence) -> Result<TextRepresentation> {
        encode_tokens(seq, &self.weights)
    }

    pub fn unconditional(&self, tokenizer: &Tokenizer) -> Result<&TextRepresentation> {
        if let Some(r) = self.unconditional.get() {
            return Ok(r);
        }
        let r = unconditional_representation(&self.weights, tokenizer)?;
        Ok(self.unconditional.get_or_init(|| r))
    }
}
