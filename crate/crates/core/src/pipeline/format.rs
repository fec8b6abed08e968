//! Binary trajectory file.
//!
//! Little-endian throughout; strings and byte blobs are `u32` length-prefixed.
//!
//! ```text
//! magic "DSCTRAJ\0" · u32 version
//! id · engine_version
//! prompt · u64 seed · f64 guidance_scale · u32 num_steps
//! u8 has_created_at · u64 created_at
//! u32 n · n × u32 token id · u32 token length
//! u32 rank · rank × u32 latent dim
//! u32 frames, then per frame:
//!     u32 timestep · f64 sigma · latent f32s · u8 has_noise
//!     [cond, uncond, guided f32s] · preview png · [3 × noise preview png]
//! final image png
//! 32-byte SHA-256 of everything above
//! ```

use sha2::{Digest, Sha256};

use crate::denoiser::NoisePrediction;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::tokenizer::TokenSequence;

use super::trajectory::{FrameNoise, Trajectory, TrajectoryFrame};
use super::GenerationConfig;

pub const MAGIC: &[u8; 8] = b"DSCTRAJ\0";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("trajectory field fits in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len());
        self.0.extend_from_slice(b);
    }
    fn tensor(&mut self, t: &Tensor) {
        self.0.extend_from_slice(&t.to_le_bytes());
    }
}

pub fn serialize_trajectory(t: &Trajectory) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(64 * 1024));
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION as usize);
    w.bytes(t.id.as_bytes());
    w.bytes(t.engine_version.as_bytes());
    w.bytes(t.config.prompt.as_bytes());
    w.u64(t.config.seed);
    w.f64(t.config.guidance_scale);
    w.u32(t.config.num_steps);
    w.u8(u8::from(t.created_at.is_some()));
    w.u64(t.created_at.unwrap_or(0));
    w.u32(t.token_ids.ids.len());
    for &id in &t.token_ids.ids {
        w.u32(id as usize);
    }
    w.u32(t.token_ids.length);
    let shape = t.frames.first().map(|f| f.latent.shape()).unwrap_or(&[]);
    w.u32(shape.len());
    for &d in shape {
        w.u32(d);
    }
    w.u32(t.frames.len());
    for f in &t.frames {
        w.u32(f.timestep);
        w.f64(f.sigma);
        w.tensor(&f.latent);
        w.u8(u8::from(f.noise.is_some()));
        if let Some(noise) = &f.noise {
            for p in noise.as_array() {
                w.tensor(&p.eps);
            }
        }
        w.bytes(&f.preview_png);
        w.u8(u8::from(f.noise_previews.is_some()));
        if let Some(previews) = &f.noise_previews {
            for p in previews {
                w.bytes(p);
            }
        }
    }
    w.bytes(&t.final_image);
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::format("trajectory file", msg)
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(corrupt(format!("bad flag byte {v}"))),
        }
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.array()?) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.u32()?;
        Ok(self.take(n)?.to_vec())
    }
    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?).map_err(|_| corrupt("string is not UTF-8"))
    }
    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or_else(|| corrupt("tensor too large"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Tensor::new(shape.to_vec(), data).map_err(|e| corrupt(e.to_string()))
    }
}

pub fn deserialize_trajectory(bytes: &[u8]) -> Result<Trajectory> {
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("not a trajectory file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "format version {version}, this build reads version {FORMAT_VERSION}"
        )));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }

    let mut r = Reader { buf: body, pos: 12 };
    let id = r.string()?;
    let engine_version = r.string()?;
    let config = GenerationConfig {
        prompt: r.string()?,
        seed: r.u64()?,
        guidance_scale: r.f64()?,
        num_steps: r.u32()?,
    };
    config.validate().map_err(|e| corrupt(e.to_string()))?;
    if config.trajectory_id(&engine_version) != id {
        return Err(corrupt("id does not match the stored config"));
    }
    let has_created = r.flag()?;
    let created_raw = r.u64()?;
    let created_at = has_created.then_some(created_raw);

    let n_tokens = r.u32()?;
    let ids = (0..n_tokens)
        .map(|_| r.u32().map(|v| v as u32))
        .collect::<Result<Vec<_>>>()?;
    let length = r.u32()?;
    if length < 2 || length > ids.len() {
        return Err(corrupt(format!("token length {length} out of range")));
    }
    let token_ids = TokenSequence { ids, length };

    let rank = r.u32()?;
    let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let n_frames = r.u32()?;
    if n_frames != config.num_steps + 1 {
        return Err(corrupt(format!(
            "{n_frames} frames for a {}-step config",
            config.num_steps
        )));
    }
    let mut frames = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let timestep = r.u32()?;
        if timestep != t {
            return Err(corrupt(format!("frame {t} labelled timestep {timestep}")));
        }
        let sigma = r.f64()?;
        let latent = r.tensor(&shape)?;
        let noise = if r.flag()? {
            let mut p = || r.tensor(&shape).map(|eps| NoisePrediction { eps });
            Some(FrameNoise {
                cond: p()?,
                uncond: p()?,
                guided: p()?,
            })
        } else {
            None
        };
        let preview_png = r.bytes()?;
        let noise_previews = if r.flag()? {
            Some([r.bytes()?, r.bytes()?, r.bytes()?])
        } else {
            None
        };
        frames.push(TrajectoryFrame {
            timestep,
            sigma,
            latent,
            noise,
            preview_png,
            noise_previews,
        });
    }
    let final_image = r.bytes()?;
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after final image"));
    }
    Ok(Trajectory {
        id,
        engine_version,
        config,
        frames,
        final_image,
        token_ids,
        created_at,
    })
}
