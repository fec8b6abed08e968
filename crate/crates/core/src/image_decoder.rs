//! Latent → pixel conversion: a per-pixel linear preview for intermediate
//! timesteps and an 8× upscaling decoder for the final image.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::nn::{self, impl_params, sigmoid, silu, Conv2d, ConvTranspose2d, FeatureMap, GroupNorm};
use crate::numerics::{seeded_rng, standard_normal_tensor, RngState, Tensor};

pub const LATENT_CHANNELS: usize = 4;
pub const UPSCALE: usize = 8;

/// `rgb[k] = clamp(bias[k] + Σ_c m[c][k] · z[c], 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDecodeMatrix {
    pub m: [[f32; 3]; LATENT_CHANNELS],
    pub bias: [f32; 3],
}

impl Default for LinearDecodeMatrix {
    /// Least-squares fit against the default upscaling decoder; regenerate with
    /// [`fit_linear_decode`] (see the `default_preview_matrix_matches_fit` test).
    fn default() -> Self {
        Self {
            m: DEFAULT_PREVIEW_M,
            bias: [0.5; 3],
        }
    }
}

const DEFAULT_PREVIEW_M: [[f32; 3]; LATENT_CHANNELS] = [
    [-0.06051711, 0.0053497413, 0.019646706],
    [0.016726818, -0.04108596, -0.0056896103],
    [-0.040109225, 0.019680787, -0.024840517],
    [-0.028310742, 0.013404434, -0.017392354],
];

/// Row-major `height × width × 3` pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
}

/// Latent-resolution preview.
pub type PreviewImage = RgbImage;
/// Full-resolution (8× latent) decode.
pub type OutputImage = RgbImage;

impl RgbImage {
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

fn latent_dims(latent: &Tensor) -> Result<(usize, usize)> {
    match *latent.shape() {
        [LATENT_CHANNELS, h, w] => Ok((h, w)),
        _ => Err(Error::shape(format!(
            "expected a [{LATENT_CHANNELS}, h, w] latent, got {:?}",
            latent.shape()
        ))),
    }
}

/// Affine preview before clamping; exposed for linearity checks.
pub fn linear_preview_unclamped(latent: &Tensor, d: &LinearDecodeMatrix) -> Result<Vec<f32>> {
    let (h, w) = latent_dims(latent)?;
    let plane = h * w;
    let z = latent.data();
    let mut out = Vec::with_capacity(plane * 3);
    for p in 0..plane {
        for k in 0..3 {
            let mut acc = f64::from(d.bias[k]);
            for c in 0..LATENT_CHANNELS {
                acc += f64::from(d.m[c][k]) * f64::from(z[c * plane + p]);
            }
            out.push(acc as f32);
        }
    }
    Ok(out)
}

pub fn linear_preview(latent: &Tensor, d: &LinearDecodeMatrix) -> Result<PreviewImage> {
    let (height, width) = latent_dims(latent)?;
    let pixels = linear_preview_unclamped(latent, d)?
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Ok(RgbImage {
        height,
        width,
        pixels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStage {
    pub upconv: ConvTranspose2d,
    pub norm: GroupNorm,
}
impl_params!(DecoderStage { upconv, norm });

/// Three stride-2 transposed-conv stages (each followed by GroupNorm + SiLU),
/// a 3×3 projection to RGB and a sigmoid. Untrained: weights are random
/// apart from a bilinear pass-through of the latent channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights {
    pub stages: Vec<DecoderStage>,
    pub proj: Conv2d,
}
impl_params!(DecoderWeights { stages, proj });

pub const DECODER_CHANNELS: [usize; 3] = [64, 32, 16];

/// Bilinear 2× upsampling taps of a `k = 4, stride = 2, padding = 1` transposed conv.
const BILINEAR_TAPS: [f32; 4] = [0.25, 0.75, 0.75, 0.25];

/// Adds a bilinear pass-through from input channel `o mod inputs` to each
/// output channel `o`, so the random decoder keeps the latent's layout.
fn add_bilinear_passthrough(conv: &mut ConvTranspose2d) {
    let (cin, cout, k) = (conv.inputs(), conv.outputs(), conv.kernel());
    debug_assert_eq!(k, BILINEAR_TAPS.len());
    let w = conv.weight.data_mut();
    for o in 0..cout {
        let c = o % cin;
        for ky in 0..k {
            for kx in 0..k {
                w[((c * cout + o) * k + ky) * k + kx] += BILINEAR_TAPS[ky] * BILINEAR_TAPS[kx];
            }
        }
    }
}

pub fn init_decoder(seed: u64) -> Result<DecoderWeights> {
    let mut rng = RngState::for_stream(seed, "upscale-decoder");
    let mut inputs = LATENT_CHANNELS;
    let mut stages = Vec::with_capacity(DECODER_CHANNELS.len());
    for &out in &DECODER_CHANNELS {
        let mut upconv = ConvTranspose2d::init(&mut rng, inputs, out, 4, 2, 1)?;
        add_bilinear_passthrough(&mut upconv);
        stages.push(DecoderStage {
            upconv,
            norm: GroupNorm::new(out)?,
        });
        inputs = out;
    }
    Ok(DecoderWeights {
        stages,
        proj: Conv2d::init(&mut rng, inputs, 3, 3, 1, 1)?,
    })
}

impl DecoderWeights {
    pub fn load(&mut self, bytes: &[u8]) -> Result<()> {
        nn::weights_file::load_into(self, bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        nn::weights_file::save(self)
    }
}

pub fn upscale_decode(latent: &Tensor, w: &DecoderWeights) -> Result<OutputImage> {
    let (h, wd) = latent_dims(latent)?;
    if w.stages.first().map(|s| s.upconv.inputs()) != Some(LATENT_CHANNELS) {
        return Err(Error::shape("decoder does not take 4-channel latents"));
    }
    let mut x = FeatureMap::from_tensor(latent)?;
    for stage in &w.stages {
        x = stage.norm.forward(&stage.upconv.forward(&x)).map(silu);
    }
    let rgb = w.proj.forward(&x).map(sigmoid);
    let scale = 1 << w.stages.len();
    debug_assert_eq!((rgb.height, rgb.width), (h * scale, wd * scale));
    let plane = rgb.plane();
    let mut pixels = Vec::with_capacity(plane * 3);
    for p in 0..plane {
        for k in 0..3 {
            pixels.push(rgb.data[k * plane + p].clamp(0.0, 1.0));
        }
    }
    Ok(RgbImage {
        height: rgb.height,
        width: rgb.width,
        pixels,
    })
}

/// Fits the preview matrix (bias fixed at 0.5) by least squares from
/// `samples` random unit-normal latents to the decoder's output, average
/// pooled back to latent resolution.
pub fn fit_linear_decode(decoder: &DecoderWeights, seed: u64, samples: usize) -> Result<LinearDecodeMatrix> {
    let (h, w) = (8usize, 8usize);
    let mut rng = seeded_rng(seed);
    let rows = samples * h * w;
    let mut features = DMatrix::<f64>::zeros(rows, LATENT_CHANNELS);
    let mut targets = DMatrix::<f64>::zeros(rows, 3);
    for s in 0..samples {
        let z = standard_normal_tensor(&mut rng, &[LATENT_CHANNELS, h, w])?;
        let img = upscale_decode(&z, decoder)?;
        let f = img.height / h;
        for y in 0..h {
            for x in 0..w {
                let r = (s * h + y) * w + x;
                for c in 0..LATENT_CHANNELS {
                    features[(r, c)] = f64::from(z.data()[c * h * w + y * w + x]);
                }
                for k in 0..3 {
                    let mut acc = 0.0;
                    for dy in 0..f {
                        for dx in 0..f {
                            acc += f64::from(img.pixel(y * f + dy, x * f + dx)[k]);
                        }
                    }
                    targets[(r, k)] = acc / (f * f) as f64 - 0.5;
                }
            }
        }
    }
    let solution = features
        .svd(true, true)
        .solve(&targets, 1e-12)
        .map_err(|e| Error::invalid(format!("least squares failed: {e}")))?;
    let mut m = [[0.0f32; 3]; LATENT_CHANNELS];
    for (c, row) in m.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = solution[(c, k)] as f32;
        }
    }
    Ok(LinearDecodeMatrix { m, bias: [0.5; 3] })
}

/// Round-half-up 8-bit quantization.
pub fn quantize(v: f32) -> u8 {
    (f64::from(v.clamp(0.0, 1.0)) * 255.0 + 0.5).floor() as u8
}

/// Lossless 8-bit RGB PNG.
pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory PNG header");
        let bytes: Vec<u8> = img.pixels.iter().map(|&v| quantize(v)).collect();
        writer.write_image_data(&bytes).expect("in-memory PNG data");
    }
    out
}

/// Decodes an 8-bit RGB PNG into `(width, height, rgb bytes)`.
pub fn decode_png(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>)> {
    let bad = |e: png::DecodingError| Error::format("PNG", e.to_string());
    let mut reader = png::Decoder::new(std::io::Cursor::new(bytes))
        .read_info()
        .map_err(bad)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format("PNG", "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format("PNG", "expected 8-bit RGB"));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width, info.height, buf))
}
