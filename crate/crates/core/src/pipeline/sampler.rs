use crate::denoiser::{guided_noise, NoisePredictor};
use crate::error::Result;
use crate::numerics::Tensor;
use crate::par;
use crate::scheduler::{
    derivative_from_noise, lms_coefficients, lms_step, warmup_order, DerivativeHistory,
    SigmaSchedule, MAX_ORDER,
};
use crate::text_encoder::TextRepresentation;

/// Artifacts of one refinement step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub eps_cond: Tensor,
    pub eps_uncond: Tensor,
    pub eps: Tensor,
    /// Latent after the update.
    pub latent: Tensor,
}

/// Guided LMS sampling from `initial` (at `σ_0`) down to `σ = 0`.
///
/// The two branches of each step are evaluated concurrently.
pub fn sample<P: NoisePredictor>(
    predictor: &P,
    schedule: &SigmaSchedule,
    initial: Tensor,
    cond: &TextRepresentation,
    uncond: &TextRepresentation,
    scale: f64,
) -> Result<Vec<StepOutput>> {
    let mut x = initial;
    let mut history = DerivativeHistory::new(MAX_ORDER);
    let mut steps = Vec::with_capacity(schedule.num_steps());
    for (i, &sigma) in schedule.sigmas()[..schedule.num_steps()].iter().enumerate() {
        let (c, u) = par::join(
            || predictor.predict(&x, sigma, cond),
            || predictor.predict(&x, sigma, uncond),
        );
        let (c, u) = (c?, u?);
        let eps = guided_noise(&u, &c, scale)?;
        history.push(derivative_from_noise(&eps.eps))?;
        let coeffs = lms_coefficients(schedule, i, warmup_order(i))?;
        x = lms_step(&x, &history, &coeffs)?;
        steps.push(StepOutput {
            eps_cond: c.eps,
            eps_uncond: u.eps,
            eps: eps.eps,
            latent: x.clone(),
        });
    }
    Ok(steps)
}
