use super::Tensor;
use crate::error::{Error, Result};

/// Max-subtracted softmax over a single row, accumulated in `f64`.
pub fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f64;
    let exps: Vec<f64> = row
        .iter()
        .map(|&v| {
            let e = libm::exp(f64::from(v) - f64::from(max));
            sum += e;
            e
        })
        .collect();
    for (dst, e) in row.iter_mut().zip(exps) {
        *dst = (e / sum) as f32;
    }
}

pub fn softmax_rows(t: &Tensor) -> Result<Tensor> {
    if t.rank() != 2 {
        return Err(Error::shape(format!(
            "softmax_rows needs a rank-2 tensor, got shape {:?}",
            t.shape()
        )));
    }
    let cols = t.shape()[1];
    let mut data = t.data().to_vec();
    for row in data.chunks_mut(cols) {
        softmax_in_place(row);
    }
    Tensor::from_kernel(t.shape().to_vec(), data, "softmax_rows")
}

/// Normalizes each row of a rank-2 tensor to zero mean and unit (population)
/// variance, then applies `gain` and `bias`.
///
/// `eps = 0` is allowed; a zero-variance row then maps to `bias`.
pub fn layer_norm(t: &Tensor, gain: &[f32], bias: &[f32], eps: f32) -> Result<Tensor> {
    if t.rank() != 2 {
        return Err(Error::shape(format!(
            "layer_norm needs a rank-2 tensor, got shape {:?}",
            t.shape()
        )));
    }
    let cols = t.shape()[1];
    if gain.len() != cols || bias.len() != cols {
        return Err(Error::shape(format!(
            "layer_norm: row width {cols}, gain {}, bias {}",
            gain.len(),
            bias.len()
        )));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("layer_norm eps must be >= 0, got {eps}")));
    }
    let mut data = t.data().to_vec();
    for row in data.chunks_mut(cols) {
        normalize_row(row, gain, bias, eps);
    }
    Tensor::from_kernel(t.shape().to_vec(), data, "layer_norm")
}

pub(crate) fn normalize_row(row: &mut [f32], gain: &[f32], bias: &[f32], eps: f32) {
    let n = row.len() as f64;
    let mean = row.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = row
        .iter()
        .map(|&v| {
            let d = f64::from(v) - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let denom = (var + f64::from(eps)).sqrt();
    let inv = if denom > 0.0 { 1.0 / denom } else { 0.0 };
    for ((v, &g), &b) in row.iter_mut().zip(gain).zip(bias) {
        *v = ((f64::from(*v) - mean) * inv * f64::from(g) + f64::from(b)) as f32;
    }
}
