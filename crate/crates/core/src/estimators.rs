//! Sphere sampling, smoothing schedules, and zeroth-order gradient
//! estimators.
//!
//! The one-point estimator `(k/δ) f(x) u` and the two-point estimator
//! `(k/2δ)(f(x+δu) - f(x-δu)) u` are unbiased for the gradient of the
//! ball-smoothed surrogate `f^δ(x) = E[f(x + δ v)]`, `v` uniform in the unit
//! ball. [`smoothed_value`] estimates `f^δ` by Monte Carlo and exists for
//! test oracles only; the learning loop never calls it.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::scale;
use crate::losses::{LossError, LossFamily};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("smoothing parameter must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("Monte Carlo estimate needs at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Uniform sample from the unit sphere `S^{k-1}` (Gaussian normalization;
/// the measure-zero zero vector is resampled).
pub fn sample_sphere<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    assert!(k >= 1, "sphere dimension must be at least 1");
    loop {
        let g: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        if k == 1 {
            // S^0 = {-1, +1}; keep the signs exact.
            if g[0] != 0.0 {
                return vec![g[0].signum()];
            }
            continue;
        }
        let n = crate::linalg::norm(&g);
        if n > 0.0 {
            return g.iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform sample from the unit ball: sphere direction scaled by `U^{1/k}`.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let u = sample_sphere(rng, k);
    let t: f64 = rng.random_range(0.0..1.0f64);
    scale(&u, t.powf(1.0 / k as f64))
}

/// One-point gradient estimate `(k/δ) f(x) u`.
///
/// For `|f| <= M` the norm never exceeds `k M / δ`.
pub fn one_point_estimate(
    f_value: f64,
    delta: f64,
    u: &[f64],
    k: usize,
) -> Result<Vec<f64>, EstimatorError> {
    if !(delta > 0.0) {
        return Err(EstimatorError::NonPositiveDelta(delta));
    }
    Ok(scale(u, k as f64 / delta * f_value))
}

/// Two-point gradient estimate `(k/2δ)(f(x+δu) - f(x-δu)) u`.
///
/// For `G`-Lipschitz `f` the difference is at most `2Gδ`, so the norm never
/// exceeds `k G`.
pub fn two_point_estimate(
    f_plus: f64,
    f_minus: f64,
    delta: f64,
    u: &[f64],
    k: usize,
) -> Result<Vec<f64>, EstimatorError> {
    if !(delta > 0.0) {
        return Err(EstimatorError::NonPositiveDelta(delta));
    }
    Ok(scale(u, k as f64 / (2.0 * delta) * (f_plus - f_minus)))
}

/// Monte Carlo estimate of the ball-smoothed value `f^δ(x)`, returning
/// `(mean, standard_error)`. Test oracle only.
pub fn smoothed_value<R: Rng + ?Sized>(
    family: &LossFamily,
    t: usize,
    x: &[f64],
    delta: f64,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64), EstimatorError> {
    if !(delta > 0.0) {
        return Err(EstimatorError::NonPositiveDelta(delta));
    }
    if samples < 100 {
        return Err(EstimatorError::TooFewSamples(samples));
    }
    let k = x.len();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let v = sample_ball(rng, k);
        let mut y = x.to_vec();
        crate::linalg::axpy(&mut y, delta, &v);
        let f = family.value(t, &y)?;
        sum += f;
        sum_sq += f * f;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Smoothing-parameter schedules `δ_t`, all non-increasing with values in
/// `(0, r]`.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothingSchedule {
    /// `δ_t = r · min{1, sqrt(ν k) / t^{1/4}}`
    BcoConvex { r: f64, nu: f64, k: usize },
    /// `δ_t = r · min{1, (ν² k² ln t / t)^{1/3}}`, with `ln t` floored at 1
    /// so the schedule stays positive and non-increasing for t < e.
    BcoStronglyConvex { r: f64, nu: f64, k: usize },
    /// `δ_t = r / sqrt(t)`
    TwoPointConvex { r: f64 },
    /// `δ_t = r / t`
    TwoPointStronglyConvex { r: f64 },
    Fixed { delta: f64 },
}

impl SmoothingSchedule {
    /// Horizon-dependent fixed variant of [`SmoothingSchedule::BcoConvex`]:
    /// the round-dependent formula frozen at `t = T`.
    pub fn bco_convex_fixed(r: f64, nu: f64, k: usize, horizon: usize) -> Self {
        let value = SmoothingSchedule::BcoConvex { r, nu, k }.delta_at(horizon as f64);
        SmoothingSchedule::Fixed { delta: value }
    }

    /// Horizon-dependent fixed variant of
    /// [`SmoothingSchedule::BcoStronglyConvex`].
    pub fn bco_strongly_fixed(r: f64, nu: f64, k: usize, horizon: usize) -> Self {
        let value = SmoothingSchedule::BcoStronglyConvex { r, nu, k }.delta_at(horizon as f64);
        SmoothingSchedule::Fixed { delta: value }
    }

    /// Evaluates `δ_t`. Rounds are 1-based; `t` is real-valued so schedule
    /// formulas can be probed off the integer grid in tests.
    pub fn delta_at(&self, t: f64) -> f64 {
        debug_assert!(t >= 1.0, "rounds are 1-based");
        match self {
            SmoothingSchedule::BcoConvex { r, nu, k } => {
                r * 1.0f64.min((nu * *k as f64).sqrt() / t.powf(0.25))
            }
            SmoothingSchedule::BcoStronglyConvex { r, nu, k } => {
                let nk = nu * *k as f64;
                r * 1.0f64.min((nk * nk * t.ln().max(1.0) / t).cbrt())
            }
            SmoothingSchedule::TwoPointConvex { r } => r / t.sqrt(),
            SmoothingSchedule::TwoPointStronglyConvex { r } => r / t,
            SmoothingSchedule::Fixed { delta } => *delta,
        }
    }
}
