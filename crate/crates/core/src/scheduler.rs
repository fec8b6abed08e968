//! Noise-level schedule and the linear multistep (LMS) update.
//!
//! Latents follow the sigma-parameterized probability-flow ODE
//! `dx/dσ = (x − x̂₀)/σ`, which for an epsilon-predicting model is simply
//! the predicted noise. The LMS update integrates the Lagrange interpolant
//! of the most recent derivatives across `[σ_i, σ_{i+1}]`.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const TRAIN_STEPS: usize = 1000;
pub const BETA_START: f64 = 0.00085;
pub const BETA_END: f64 = 0.012;
pub const DEFAULT_STEPS: usize = 50;
pub const MAX_ORDER: usize = 4;
const SIMPSON_INTERVALS: usize = 1000;

/// `β_t` on the scaled-linear grid for `t = 0..1000`.
pub fn training_betas() -> Vec<f64> {
    let (lo, hi) = (BETA_START.sqrt(), BETA_END.sqrt());
    (0..TRAIN_STEPS)
        .map(|t| {
            let r = lo + (t as f64 / (TRAIN_STEPS - 1) as f64) * (hi - lo);
            r * r
        })
        .collect()
}

/// `σ_t = √((1 − ᾱ_t)/ᾱ_t)` for every training step.
pub fn training_sigmas() -> Vec<f64> {
    let mut alpha_bar = 1.0;
    training_betas()
        .into_iter()
        .map(|beta| {
            alpha_bar *= 1.0 - beta;
            ((1.0 - alpha_bar) / alpha_bar).sqrt()
        })
        .collect()
}

/// Continuous training timestep for `sigma`, by linear interpolation in
/// log-sigma. Clamped to `[0, 999]`; `σ = 0` maps to 0.
pub fn sigma_to_timestep(sigma: f64, train_sigmas: &[f64]) -> f64 {
    if sigma <= train_sigmas[0] {
        return 0.0;
    }
    let last = train_sigmas.len() - 1;
    if sigma >= train_sigmas[last] {
        return last as f64;
    }
    let idx = train_sigmas.partition_point(|&s| s <= sigma) - 1;
    let (lo, hi) = (train_sigmas[idx].ln(), train_sigmas[idx + 1].ln());
    idx as f64 + (sigma.ln() - lo) / (hi - lo)
}

/// Strictly decreasing noise levels `σ_max = σ_0 > … > σ_{n−1} > σ_n = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSchedule {
    sigmas: Vec<f64>,
}

impl SigmaSchedule {
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn num_steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas[0]
    }

    /// Builds a schedule from explicit levels, enforcing the invariants.
    pub fn from_sigmas(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() < 2 {
            return Err(Error::invalid("a schedule needs at least two levels"));
        }
        if *sigmas.last().unwrap() != 0.0 {
            return Err(Error::invalid("schedule must end at sigma = 0"));
        }
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("sigmas must be finite and non-negative"));
        }
        if sigmas.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::invalid("sigmas must be strictly decreasing"));
        }
        Ok(Self { sigmas })
    }

    /// SHA-256 over the little-endian bit patterns, hex encoded.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for s in &self.sigmas {
            h.update(s.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub fn build_sigma_schedule(num_steps: usize) -> Result<SigmaSchedule> {
    if !(1..=TRAIN_STEPS).contains(&num_steps) {
        return Err(Error::invalid(format!(
            "num_steps must be in 1..={TRAIN_STEPS}, got {num_steps}"
        )));
    }
    let train = training_sigmas();
    let top = (TRAIN_STEPS - 1) as f64;
    let mut sigmas: Vec<f64> = (0..num_steps)
        .map(|k| {
            let t = if num_steps == 1 {
                top
            } else {
                top * (1.0 - k as f64 / (num_steps - 1) as f64)
            };
            let lo = t.floor() as usize;
            let frac = t - lo as f64;
            if lo + 1 < TRAIN_STEPS {
                train[lo] + frac * (train[lo + 1] - train[lo])
            } else {
                train[lo]
            }
        })
        .collect();
    sigmas.push(0.0);
    SigmaSchedule::from_sigmas(sigmas)
}

/// Composite Simpson rule with a fixed even number of subintervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for k in 1..intervals {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// LMS weights `c_j = ∫_{σ_i}^{σ_{i+1}} ℓ_j(σ) dσ`, where `ℓ_j` is the
/// Lagrange basis polynomial through `σ_i, σ_{i−1}, …, σ_{i−order+1}` that
/// equals 1 at `σ_{i−j}`. `c_j` multiplies the derivative from step `i − j`.
pub fn lms_coefficients(schedule: &SigmaSchedule, step: usize, order: usize) -> Result<Vec<f64>> {
    if step >= schedule.num_steps() {
        return Err(Error::invalid(format!(
            "step {step} is outside 0..{}",
            schedule.num_steps()
        )));
    }
    if order == 0 || order > MAX_ORDER {
        return Err(Error::invalid(format!("order must be in 1..={MAX_ORDER}, got {order}")));
    }
    if order > step + 1 {
        return Err(Error::invalid(format!(
            "order {order} needs {order} derivatives, only {} available at step {step}",
            step + 1
        )));
    }
    let s = schedule.sigmas();
    if order == 1 {
        return Ok(vec![s[step + 1] - s[step]]);
    }
    let nodes: Vec<f64> = (0..order).map(|k| s[step - k]).collect();
    Ok((0..order)
        .map(|j| {
            let basis = |sigma: f64| {
                (0..order)
                    .filter(|&k| k != j)
                    .map(|k| (sigma - nodes[k]) / (nodes[j] - nodes[k]))
                    .product::<f64>()
            };
            simpson(basis, s[step], s[step + 1], SIMPSON_INTERVALS)
        })
        .collect())
}

/// Most recent derivatives, newest first, capped at `order` entries.
#[derive(Debug, Clone)]
pub struct DerivativeHistory {
    order: usize,
    entries: VecDeque<Tensor>,
}

impl DerivativeHistory {
    pub fn new(order: usize) -> Self {
        Self {
            order: order.max(1),
            entries: VecDeque::with_capacity(order),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.order
    }

    pub fn push(&mut self, derivative: Tensor) -> Result<()> {
        if let Some(first) = self.entries.front() {
            if first.shape() != derivative.shape() {
                return Err(Error::shape(format!(
                    "derivative shape {:?} differs from history {:?}",
                    derivative.shape(),
                    first.shape()
                )));
            }
        }
        self.entries.push_front(derivative);
        self.entries.truncate(self.order);
        Ok(())
    }

    /// Newest first.
    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter()
    }
}

/// `x_{i+1} = x_i + Σ_j coeffs[j] · d_{i−j}`, accumulated in `f64` per element.
pub fn lms_step(latent: &Tensor, history: &DerivativeHistory, coeffs: &[f64]) -> Result<Tensor> {
    if history.len() < coeffs.len() {
        return Err(Error::invalid(format!(
            "{} coefficients but only {} derivatives in history",
            coeffs.len(),
            history.len()
        )));
    }
    let derivs: Vec<&Tensor> = history.iter().take(coeffs.len()).collect();
    for d in &derivs {
        if d.shape() != latent.shape() {
            return Err(Error::shape(format!(
                "derivative {:?} vs latent {:?}",
                d.shape(),
                latent.shape()
            )));
        }
    }
    let data = latent
        .data()
        .iter()
        .enumerate()
        .map(|(e, &x)| {
            let mut acc = f64::from(x);
            for (c, d) in coeffs.iter().zip(&derivs) {
                acc += c * f64::from(d.data()[e]);
            }
            acc as f32
        })
        .collect();
    Tensor::from_kernel(latent.shape().to_vec(), data, "lms_step")
}

/// For an epsilon-predicting model, `d = (x − (x − σ ε̂)) / σ = ε̂`.
pub fn derivative_from_noise(noise_pred: &Tensor) -> Tensor {
    noise_pred.clone()
}

/// Warm-up order: the largest order the history allows, capped at [`MAX_ORDER`].
pub fn warmup_order(step: usize) -> usize {
    (step + 1).min(MAX_ORDER)
}
