use super::params::{impl_params, normal_tensor};
use crate::error::{Error, Result};
use crate::numerics::{softmax_in_place, RngState, Tensor};
use crate::par;

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + libm::expf(-x))
}

pub fn silu(x: f32) -> f32 {
    x * sigmoid(x)
}

/// The sigmoid-approximated GELU used by CLIP's text transformer.
pub fn quick_gelu(x: f32) -> f32 {
    x * sigmoid(1.702 * x)
}

/// `[channels, height, width]` activation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [channels, height, width] => Ok(Self {
                channels,
                height,
                width,
                data: t.data().to_vec(),
            }),
            _ => Err(Error::shape(format!(
                "expected a [C, H, W] tensor, got {:?}",
                t.shape()
            ))),
        }
    }

    pub fn into_tensor(self, op: &'static str) -> Result<Tensor> {
        Tensor::from_kernel(vec![self.channels, self.height, self.width], self.data, op)
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn map(mut self, f: impl Fn(f32) -> f32) -> Self {
        self.data.iter_mut().for_each(|v| *v = f(*v));
        self
    }

    pub fn add_map(mut self, other: &FeatureMap) -> Self {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        self
    }

    /// Channel-wise concatenation.
    pub fn concat(&self, other: &FeatureMap) -> Result<Self> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::shape("concat: spatial dimensions differ"));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            channels: self.channels + other.channels,
            height: self.height,
            width: self.width,
            data,
        })
    }

    /// Adds `bias[c]` to every element of channel `c`.
    pub fn add_channel_bias(mut self, bias: &[f32]) -> Self {
        let plane = self.plane();
        for (c, chunk) in self.data.chunks_mut(plane).enumerate() {
            chunk.iter_mut().for_each(|v| *v += bias[c]);
        }
        self
    }

    /// `[H*W, C]` token matrix (position-major).
    pub fn to_tokens(&self) -> Vec<f32> {
        let plane = self.plane();
        let mut out = vec![0.0; self.data.len()];
        for c in 0..self.channels {
            for p in 0..plane {
                out[p * self.channels + c] = self.data[c * plane + p];
            }
        }
        out
    }

    pub fn from_tokens(tokens: &[f32], channels: usize, height: usize, width: usize) -> Self {
        let plane = height * width;
        let mut data = vec![0.0; tokens.len()];
        for p in 0..plane {
            for c in 0..channels {
                data[c * plane + p] = tokens[p * channels + c];
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }
}

pub fn upsample_nearest2x(x: &FeatureMap) -> FeatureMap {
    let (h, w) = (x.height * 2, x.width * 2);
    let mut data = Vec::with_capacity(x.channels * h * w);
    for c in 0..x.channels {
        for y in 0..h {
            for xx in 0..w {
                data.push(x.data[c * x.plane() + (y / 2) * x.width + xx / 2]);
            }
        }
    }
    FeatureMap {
        channels: x.channels,
        height: h,
        width: w,
        data,
    }
}

/// Affine map `y = x Wᵀ + b` with `weight: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}
impl_params!(Linear { weight, bias });

impl Linear {
    pub fn init(rng: &mut RngState, inputs: usize, outputs: usize, std: f32) -> Result<Self> {
        Ok(Self {
            weight: normal_tensor(rng, &[outputs, inputs], std)?,
            bias: Tensor::zeros(&[outputs])?,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Applies the layer to `rows` consecutive input vectors.
    pub fn forward(&self, x: &[f32], rows: usize) -> Vec<f32> {
        let (inp, out) = (self.inputs(), self.outputs());
        debug_assert_eq!(x.len(), rows * inp);
        let w = self.weight.data();
        let b = self.bias.data();
        let mut y = vec![0.0f32; rows * out];
        par::for_each_chunk_mut(&mut y, out, |r, dst| {
            let xr = &x[r * inp..(r + 1) * inp];
            for (o, slot) in dst.iter_mut().enumerate() {
                let wr = &w[o * inp..(o + 1) * inp];
                let acc: f64 = xr
                    .iter()
                    .zip(wr)
                    .map(|(&a, &b)| f64::from(a) * f64::from(b))
                    .sum();
                *slot = (acc + f64::from(b[o])) as f32;
            }
        });
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
}
impl_params!(LayerNorm { gain, bias });

impl LayerNorm {
    pub const EPS: f32 = 1e-5;

    pub fn new(dim: usize) -> Result<Self> {
        Ok(Self {
            gain: Tensor::full(&[dim], 1.0)?,
            bias: Tensor::zeros(&[dim])?,
        })
    }

    pub fn forward(&self, x: &[f32], rows: usize) -> Vec<f32> {
        let dim = self.gain.numel();
        debug_assert_eq!(x.len(), rows * dim);
        let mut y = x.to_vec();
        for row in y.chunks_mut(dim) {
            crate::numerics::normalize_row(row, self.gain.data(), self.bias.data(), Self::EPS);
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupNorm {
    pub groups: usize,
    pub gain: Tensor,
    pub bias: Tensor,
}

impl_params!(GroupNorm { gain, bias });

impl GroupNorm {
    pub const EPS: f32 = 1e-5;

    /// Uses the largest group count `<= 8` that divides `channels`.
    pub fn new(channels: usize) -> Result<Self> {
        let groups = (1..=8.min(channels))
            .rev()
            .find(|g| channels.is_multiple_of(*g))
            .unwrap_or(1);
        Ok(Self {
            groups,
            gain: Tensor::full(&[channels], 1.0)?,
            bias: Tensor::zeros(&[channels])?,
        })
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        let per_group = x.channels / self.groups;
        let span = per_group * x.plane();
        let mut out = x.clone();
        let (gain, bias) = (self.gain.data(), self.bias.data());
        let plane = x.plane();
        for (g, chunk) in out.data.chunks_mut(span).enumerate() {
            let n = chunk.len() as f64;
            let mean = chunk.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
            let var = chunk
                .iter()
                .map(|&v| (f64::from(v) - mean).powi(2))
                .sum::<f64>()
                / n;
            let inv = 1.0 / (var + f64::from(Self::EPS)).sqrt();
            for (i, v) in chunk.iter_mut().enumerate() {
                let c = g * per_group + i / plane;
                *v = ((f64::from(*v) - mean) * inv * f64::from(gain[c]) + f64::from(bias[c])) as f32;
            }
        }
        out
    }
}

/// Square-kernel 2-D convolution with zero padding; `weight: [out, in, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl_params!(Conv2d { weight, bias });

impl Conv2d {
    /// He-style init with std `1/sqrt(fan_in)`.
    pub fn init(
        rng: &mut RngState,
        inputs: usize,
        outputs: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let std = 1.0 / ((inputs * kernel * kernel) as f32).sqrt();
        Ok(Self {
            weight: normal_tensor(rng, &[outputs, inputs, kernel, kernel], std)?,
            bias: Tensor::zeros(&[outputs])?,
            stride,
            padding,
        })
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        let (cin, k, s, p) = (self.inputs(), self.kernel(), self.stride, self.padding);
        debug_assert_eq!(x.channels, cin);
        let oh = (x.height + 2 * p - k) / s + 1;
        let ow = (x.width + 2 * p - k) / s + 1;
        let w = self.weight.data();
        let b = self.bias.data();
        let mut data = vec![0.0f32; self.outputs() * oh * ow];
        par::for_each_chunk_mut(&mut data, oh * ow, |o, dst| {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = f64::from(b[o]);
                    for c in 0..cin {
                        for ky in 0..k {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= x.height as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix < 0 || ix >= x.width as isize {
                                    continue;
                                }
                                let xv = x.data[c * x.plane() + iy as usize * x.width + ix as usize];
                                let wv = w[((o * cin + c) * k + ky) * k + kx];
                                acc += f64::from(xv) * f64::from(wv);
                            }
                        }
                    }
                    dst[oy * ow + ox] = acc as f32;
                }
            }
        });
        FeatureMap {
            channels: self.outputs(),
            height: oh,
            width: ow,
            data,
        }
    }
}

/// Transposed convolution; `weight: [in, out, k, k]`, output size
/// `(h - 1) * stride - 2 * padding + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl_params!(ConvTranspose2d { weight, bias });

impl ConvTranspose2d {
    pub fn init(
        rng: &mut RngState,
        inputs: usize,
        outputs: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        // Each output pixel receives roughly (k / stride)² taps per input channel.
        let taps = (kernel / stride).max(1);
        let std = 1.0 / ((inputs * taps * taps) as f32).sqrt();
        Ok(Self {
            weight: normal_tensor(rng, &[inputs, outputs, kernel, kernel], std)?,
            bias: Tensor::zeros(&[outputs])?,
            stride,
            padding,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    /// Gather formulation: every output pixel sums the input taps that land on it.
    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        let (cin, cout, k, s, p) = (
            self.inputs(),
            self.outputs(),
            self.kernel(),
            self.stride,
            self.padding,
        );
        debug_assert_eq!(x.channels, cin);
        let oh = (x.height - 1) * s + k - 2 * p;
        let ow = (x.width - 1) * s + k - 2 * p;
        let w = self.weight.data();
        let b = self.bias.data();
        let mut data = vec![0.0f32; cout * oh * ow];
        par::for_each_chunk_mut(&mut data, oh * ow, |o, dst| {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = f64::from(b[o]);
                    for c in 0..cin {
                        for ky in 0..k {
                            let ty = oy + p;
                            if ty < ky || (ty - ky) % s != 0 {
                                continue;
                            }
                            let iy = (ty - ky) / s;
                            if iy >= x.height {
                                continue;
                            }
                            for kx in 0..k {
                                let tx = ox + p;
                                if tx < kx || (tx - kx) % s != 0 {
                                    continue;
                                }
                                let ix = (tx - kx) / s;
                                if ix >= x.width {
                                    continue;
                                }
                                let xv = x.data[c * x.plane() + iy * x.width + ix];
                                let wv = w[((c * cout + o) * k + ky) * k + kx];
                                acc += f64::from(xv) * f64::from(wv);
                            }
                        }
                    }
                    dst[oy * ow + ox] = acc as f32;
                }
            }
        });
        FeatureMap {
            channels: cout,
            height: oh,
            width: ow,
            data,
        }
    }
}

/// Scaled dot-product attention.
///
/// `q` is `[n, dim]`, `k`/`v` are `[m, dim]`; `dim` is split into `heads`
/// contiguous slices. With `causal`, query `i` sees keys `0..=i` only.
#[allow(clippy::too_many_arguments)]
pub fn attention(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    n: usize,
    m: usize,
    dim: usize,
    heads: usize,
    causal: bool,
) -> Vec<f32> {
    debug_assert_eq!(dim % heads, 0);
    let hd = dim / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut out = vec![0.0f32; n * dim];
    par::for_each_chunk_mut(&mut out, dim, |i, dst| {
        let visible = if causal { (i + 1).min(m) } else { m };
        let mut scores = vec![0.0f32; visible];
        for h in 0..heads {
            let qi = &q[i * dim + h * hd..i * dim + (h + 1) * hd];
            for (j, s) in scores.iter_mut().enumerate() {
                let kj = &k[j * dim + h * hd..j * dim + (h + 1) * hd];
                let dot: f64 = qi
                    .iter()
                    .zip(kj)
                    .map(|(&a, &b)| f64::from(a) * f64::from(b))
                    .sum();
                *s = (dot * scale) as f32;
            }
            softmax_in_place(&mut scores);
            for d in 0..hd {
                let acc: f64 = scores
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| f64::from(p) * f64::from(v[j * dim + h * hd + d]))
                    .sum();
                dst[h * hd + d] = acc as f32;
            }
        }
    });
    out
}
