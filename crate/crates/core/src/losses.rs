//! Oblivious-adversary loss streams with value/gradient oracles and the
//! offline best-in-hindsight comparator.
//!
//! A family materializes all per-round parameters up front from named
//! per-round substreams of a single seed, so every oracle call for round `t`
//! is reproducible from `(seed, t)` alone and horizons share prefixes: the
//! first `T` rounds of a longer stream coincide with the shorter one.
//!
//! Declared regularity constants (`G` for gradients, `M` for values, `λ` for
//! strong convexity) are validated by sampling at construction rather than
//! derived symbolically, which keeps the family list extensible.

use rand::Rng;
use thiserror::Error;

use crate::estimators::{sample_ball, sample_sphere};
use crate::geometry::{Domain, GeometryError};
use crate::linalg::{add, axpy, dot, norm, scale, sub};
use crate::rng::{substream, tag};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("round {t} outside 1..={horizon}")]
    RoundOutOfRange { t: usize, horizon: usize },
    #[error("round {round}: point lies outside the domain by more than 1e-9")]
    OutsideDomain { round: usize },
    #[error("declared {which} = {declared} violated: observed {observed} at round {round}")]
    ConstantViolated {
        which: &'static str,
        declared: f64,
        observed: f64,
        round: usize,
    },
    #[error("strong convexity check failed at round {round} (gap {gap})")]
    StrongConvexityViolated { round: usize, gap: f64 },
    #[error("comparator did not converge within budget; final gradient-mapping norm {grad_map_norm}")]
    ComparatorDidNotConverge { grad_map_norm: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// How the per-round vectors of a linear stream are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearDraw {
    /// Independent uniform directions each round.
    Iid,
    /// Slowly rotating direction: a normalized Gaussian random walk with the
    /// given per-round step. Still oblivious; the whole path is fixed by the
    /// seed before play.
    Walk { step: f64 },
}

/// Loss family specification; concrete parameters are drawn at build time.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    /// `f_t(x) = <a_t, x>` with `|a_t| = scale`.
    Linear { scale: f64, draw: LinearDraw },
    /// `f_t(x) = (λ/2)|x - θ_t|^2 + <b_t, x>`, centers `θ_t` drawn in a ball
    /// of radius `spread` around `center_shift` and projected onto the
    /// domain, `|b_t| = b_scale`.
    Quadratic {
        lambda: f64,
        center_shift: Vec<f64>,
        spread: f64,
        b_scale: f64,
    },
    /// Huber-smoothed hinge `scale · h_w(<u, x> - o_t)` along a fixed
    /// direction `u`, so the family is convex and differentiable with
    /// gradient norm at most `scale`. The smoothing width is
    /// `w = width_frac · D`.
    SmoothedPiecewise { scale: f64, width_frac: f64 },
}

/// Declared regularity constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConstants {
    /// Gradient norm bound.
    pub g: f64,
    /// Value bound.
    pub m: f64,
    /// Strong convexity modulus (0 for merely convex families).
    pub lambda: f64,
}

#[derive(Debug, Clone)]
enum Params {
    Linear {
        a: Vec<Vec<f64>>,
        a_sum: Vec<f64>,
    },
    Quadratic {
        lambda: f64,
        theta: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        theta_sum: Vec<f64>,
        theta_sq_sum: f64,
        b_sum: Vec<f64>,
    },
    Piecewise {
        scale: f64,
        width: f64,
        dir: Vec<f64>,
        offsets: Vec<f64>,
    },
}

/// A materialized loss stream over a fixed horizon.
#[derive(Debug, Clone)]
pub struct LossFamily {
    domain: Domain,
    constants: LossConstants,
    horizon: usize,
    params: Params,
}

/// Result of the offline comparator search.
#[derive(Debug, Clone)]
pub struct Comparator {
    pub x: Vec<f64>,
    /// Total loss `Σ_t f_t(x)` at the comparator.
    pub total: f64,
    pub grad_map_norm: f64,
    pub iterations: usize,
    /// Objective accuracy target the search was run to; bound audits add
    /// this to their slack.
    pub tolerance: f64,
}

/// Knobs for [`LossFamily::best_in_hindsight`].
#[derive(Debug, Clone, Copy)]
pub struct ComparatorOptions {
    pub budget: usize,
    /// Objective accuracy `ε = epsilon_scale · T · G · D`.
    pub epsilon_scale: f64,
}

impl Default for ComparatorOptions {
    fn default() -> Self {
        ComparatorOptions {
            budget: 100_000,
            epsilon_scale: 1e-8,
        }
    }
}

fn huber(s: f64, w: f64) -> f64 {
    if s.abs() <= w {
        s * s / (2.0 * w)
    } else {
        s.abs() - w / 2.0
    }
}

fn huber_deriv(s: f64, w: f64) -> f64 {
    (s / w).clamp(-1.0, 1.0)
}

impl LossFamily {
    /// Draws and validates a family. `declared` overrides the derived
    /// conservative constants; either way the constants are checked by
    /// sampling 10^4 (round, point) pairs.
    pub fn build(
        spec: &LossSpec,
        domain: Domain,
        horizon: usize,
        seed: u64,
        declared: Option<LossConstants>,
    ) -> Result<Self, LossError> {
        let k = domain.dim();
        let (params, derived) = match spec {
            LossSpec::Linear { scale: s, draw } => {
                let mut a = Vec::with_capacity(horizon);
                let mut walk_state: Option<Vec<f64>> = None;
                for t in 1..=horizon {
                    let mut rng = substream(seed, tag::LOSS, t as u64);
                    let dir = match draw {
                        LinearDraw::Iid => sample_sphere(&mut rng, k),
                        LinearDraw::Walk { step } => {
                            let next = match walk_state.take() {
                                None => sample_sphere(&mut rng, k),
                                Some(mut w) => {
                                    let g = sample_sphere(&mut rng, k);
                                    axpy(&mut w, *step, &g);
                                    let n = norm(&w);
                                    if n == 0.0 {
                                        g
                                    } else {
                                        scale(&w, 1.0 / n)
                                    }
                                }
                            };
                            walk_state = Some(next.clone());
                            next
                        }
                    };
                    a.push(scale(&dir, *s));
                }
                let mut a_sum = vec![0.0; k];
                for v in &a {
                    axpy(&mut a_sum, 1.0, v);
                }
                let constants = LossConstants {
                    g: *s,
                    m: *s * domain.circumscribed_radius(),
                    lambda: 0.0,
                };
                (Params::Linear { a, a_sum }, constants)
            }
            LossSpec::Quadratic {
                lambda,
                center_shift,
                spread,
                b_scale,
            } => {
                assert_eq!(center_shift.len(), k, "center_shift dimension");
                let mut theta = Vec::with_capacity(horizon);
                let mut b = Vec::with_capacity(horizon);
                for t in 1..=horizon {
                    let mut rng = substream(seed, tag::LOSS, t as u64);
                    let mut c = center_shift.clone();
                    axpy(&mut c, *spread, &sample_ball(&mut rng, k));
                    theta.push(domain.project(&c)?);
                    b.push(if *b_scale > 0.0 {
                        scale(&sample_sphere(&mut rng, k), *b_scale)
                    } else {
                        vec![0.0; k]
                    });
                }
                let mut theta_sum = vec![0.0; k];
                let mut theta_sq_sum = 0.0;
                let mut b_sum = vec![0.0; k];
                for th in &theta {
                    axpy(&mut theta_sum, 1.0, th);
                    theta_sq_sum += dot(th, th);
                }
                for bi in &b {
                    axpy(&mut b_sum, 1.0, bi);
                }
                let d = domain.diameter();
                let big_r = domain.circumscribed_radius();
                let constants = LossConstants {
                    g: lambda * d + b_scale,
                    m: lambda * d * d / 2.0 + b_scale * big_r,
                    lambda: *lambda,
                };
                (
                    Params::Quadratic {
                        lambda: *lambda,
                        theta,
                        b,
                        theta_sum,
                        theta_sq_sum,
                        b_sum,
                    },
                    constants,
                )
            }
            LossSpec::SmoothedPiecewise { scale: s, width_frac } => {
                let width = width_frac * domain.diameter();
                assert!(width > 0.0, "smoothing width must be positive");
                let mut rng = substream(seed, tag::LOSS, 0);
                let dir = sample_sphere(&mut rng, k);
                let half = domain.inscribed_radius() / 2.0;
                let offsets = (1..=horizon)
                    .map(|t| {
                        let mut rng = substream(seed, tag::LOSS, t as u64);
                        rng.random_range(-half..=half)
                    })
                    .collect();
                let constants = LossConstants {
                    g: *s,
                    m: *s * (domain.circumscribed_radius() + half),
                    lambda: 0.0,
                };
                (
                    Params::Piecewise {
                        scale: *s,
                        width,
                        dir,
                        offsets,
                    },
                    constants,
                )
            }
        };
        let family = LossFamily {
            domain,
            constants: declared.unwrap_or(derived),
            horizon,
            params,
        };
        family.validate_constants(seed)?;
        Ok(family)
    }

    /// Family with explicitly given per-round linear coefficients; mostly a
    /// test hook. Constants default to the tight values.
    pub fn explicit_linear(
        domain: Domain,
        vectors: Vec<Vec<f64>>,
        constants: Option<(f64, f64)>,
    ) -> Result<Self, LossError> {
        let k = domain.dim();
        let horizon = vectors.len();
        let g_tight = vectors.iter().map(|v| norm(v)).fold(0.0, f64::max);
        let (g, m) = constants.unwrap_or((g_tight, g_tight * domain.circumscribed_radius()));
        let mut a_sum = vec![0.0; k];
        for v in &vectors {
            assert_eq!(v.len(), k);
            axpy(&mut a_sum, 1.0, v);
        }
        Ok(LossFamily {
            domain,
            constants: LossConstants { g, m, lambda: 0.0 },
            horizon,
            params: Params::Linear { a: vectors, a_sum },
        })
    }

    /// Quadratic family with explicit centers and linear parts; test hook.
    pub fn explicit_quadratic(
        domain: Domain,
        lambda: f64,
        theta: Vec<Vec<f64>>,
        b: Option<Vec<Vec<f64>>>,
    ) -> Result<Self, LossError> {
        let k = domain.dim();
        let horizon = theta.len();
        let b = b.unwrap_or_else(|| vec![vec![0.0; k]; horizon]);
        assert_eq!(b.len(), horizon);
        let mut theta_sum = vec![0.0; k];
        let mut theta_sq_sum = 0.0;
        let mut b_sum = vec![0.0; k];
        let mut b_max = 0.0f64;
        for th in &theta {
            axpy(&mut theta_sum, 1.0, th);
            theta_sq_sum += dot(th, th);
        }
        for bi in &b {
            axpy(&mut b_sum, 1.0, bi);
            b_max = b_max.max(norm(bi));
        }
        let d = domain.diameter();
        let big_r = domain.circumscribed_radius();
        Ok(LossFamily {
            constants: LossConstants {
                g: lambda * d + b_max,
                m: lambda * d * d / 2.0 + b_max * big_r,
                lambda,
            },
            domain,
            horizon,
            params: Params::Quadratic {
                lambda,
                theta,
                b,
                theta_sum,
                theta_sq_sum,
                b_sum,
            },
        })
    }

    fn validate_constants(&self, seed: u64) -> Result<(), LossError> {
        if self.horizon == 0 {
            return Ok(());
        }
        let mut rng = substream(seed, tag::LOSS, u64::MAX);
        let slack = 1e-9 + 1e-12 * (self.constants.g.abs() + self.constants.m.abs());
        for i in 0..10_000usize {
            let t = (i % self.horizon) + 1;
            let x = self.domain.sample_point(&mut rng);
            let g = norm(&self.grad_unchecked(t, &x));
            if g > self.constants.g + slack {
                return Err(LossError::ConstantViolated {
                    which: "G",
                    declared: self.constants.g,
                    observed: g,
                    round: t,
                });
            }
            let v = self.value_unchecked(t, &x).abs();
            if v > self.constants.m + slack {
                return Err(LossError::ConstantViolated {
                    which: "M",
                    declared: self.constants.m,
                    observed: v,
                    round: t,
                });
            }
        }
        if self.constants.lambda > 0.0 {
            for i in 0..200usize {
                let t = (i % self.horizon) + 1;
                let x = self.domain.sample_point(&mut rng);
                let y = self.domain.sample_point(&mut rng);
                let lhs = self.value_unchecked(t, &y);
                let rhs = self.value_unchecked(t, &x)
                    + dot(&self.grad_unchecked(t, &x), &sub(&y, &x))
                    + self.constants.lambda / 2.0 * dot(&sub(&y, &x), &sub(&y, &x));
                if lhs + 1e-9 < rhs {
                    return Err(LossError::StrongConvexityViolated {
                        round: t,
                        gap: rhs - lhs,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn constants(&self) -> LossConstants {
        self.constants
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Smoothness ratio `ν = M / (G r)`; the bandit schedules consume it.
    pub fn smoothness_ratio(&self) -> f64 {
        self.constants.m / (self.constants.g * self.domain.inscribed_radius())
    }

    fn check_round(&self, t: usize) -> Result<(), LossError> {
        if t == 0 || t > self.horizon {
            return Err(LossError::RoundOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    fn check_point(&self, t: usize, x: &[f64]) -> Result<(), LossError> {
        if !self.domain.contains(x, 1e-9) {
            return Err(LossError::OutsideDomain { round: t });
        }
        Ok(())
    }

    fn value_unchecked(&self, t: usize, x: &[f64]) -> f64 {
        match &self.params {
            Params::Linear { a, .. } => dot(&a[t - 1], x),
            Params::Quadratic { lambda, theta, b, .. } => {
                let d = sub(x, &theta[t - 1]);
                lambda / 2.0 * dot(&d, &d) + dot(&b[t - 1], x)
            }
            Params::Piecewise {
                scale: s,
                width,
                dir,
                offsets,
            } => s * huber(dot(dir, x) - offsets[t - 1], *width),
        }
    }

    fn grad_unchecked(&self, t: usize, x: &[f64]) -> Vec<f64> {
        match &self.params {
            Params::Linear { a, .. } => a[t - 1].clone(),
            Params::Quadratic { lambda, theta, b, .. } => {
                let mut g = sub(x, &theta[t - 1]);
                g = scale(&g, *lambda);
                add(&g, &b[t - 1])
            }
            Params::Piecewise {
                scale: s,
                width,
                dir,
                offsets,
            } => scale(dir, s * huber_deriv(dot(dir, x) - offsets[t - 1], *width)),
        }
    }

    /// Loss value at round `t` (1-based). Rejects points outside the domain
    /// by more than 1e-9.
    pub fn value(&self, t: usize, x: &[f64]) -> Result<f64, LossError> {
        self.check_round(t)?;
        self.check_point(t, x)?;
        Ok(self.value_unchecked(t, x))
    }

    /// Loss gradient at round `t` (1-based).
    pub fn grad(&self, t: usize, x: &[f64]) -> Result<Vec<f64>, LossError> {
        self.check_round(t)?;
        self.check_point(t, x)?;
        Ok(self.grad_unchecked(t, x))
    }

    /// `Σ_{t<=T} f_t(x)`, via precomputed aggregates where the family admits
    /// them.
    pub fn total_value(&self, x: &[f64]) -> f64 {
        let n = self.horizon as f64;
        match &self.params {
            Params::Linear { a_sum, .. } => dot(a_sum, x),
            Params::Quadratic {
                lambda,
                theta_sum,
                theta_sq_sum,
                b_sum,
                ..
            } => {
                lambda / 2.0 * (n * dot(x, x) - 2.0 * dot(theta_sum, x) + theta_sq_sum)
                    + dot(b_sum, x)
            }
            Params::Piecewise { .. } => (1..=self.horizon)
                .map(|t| self.value_unchecked(t, x))
                .sum(),
        }
    }

    /// Gradient of the total loss.
    pub fn total_grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.horizon as f64;
        match &self.params {
            Params::Linear { a_sum, .. } => a_sum.clone(),
            Params::Quadratic {
                lambda,
                theta_sum,
                b_sum,
                ..
            } => {
                let mut g = scale(x, *lambda * n);
                axpy(&mut g, -*lambda, theta_sum);
                add(&g, b_sum)
            }
            Params::Piecewise { .. } => {
                let k = self.domain.dim();
                let mut g = vec![0.0; k];
                for t in 1..=self.horizon {
                    axpy(&mut g, 1.0, &self.grad_unchecked(t, x));
                }
                g
            }
        }
    }

    /// Lipschitz constant of the average-loss gradient (0 for linear).
    pub fn grad_smoothness(&self) -> f64 {
        match &self.params {
            Params::Linear { .. } => 0.0,
            Params::Quadratic { lambda, .. } => *lambda,
            Params::Piecewise { scale: s, width, .. } => s / width,
        }
    }

    /// Offline minimizer of the total loss over the domain.
    ///
    /// Linear totals are solved in closed form; smooth families run
    /// accelerated projected gradient descent on the average loss with a
    /// gradient-mapping stopping rule calibrated to the objective accuracy
    /// `ε = epsilon_scale · T · G · D`.
    pub fn best_in_hindsight(&self, opts: ComparatorOptions) -> Result<Comparator, LossError> {
        let d = self.domain.diameter();
        let eps_total =
            (opts.epsilon_scale * self.horizon as f64 * self.constants.g * d).max(1e-300);
        let lipschitz = self.grad_smoothness();
        if lipschitz == 0.0 {
            let direction = self.total_grad(&vec![0.0; self.domain.dim()]);
            let x = self.domain.linear_minimizer(&direction)?;
            return Ok(Comparator {
                total: self.total_value(&x),
                x,
                grad_map_norm: 0.0,
                iterations: 0,
                tolerance: eps_total,
            });
        }

        // FISTA on the average loss; one step costs O(k) for families with
        // aggregate oracles.
        let n = self.horizon.max(1) as f64;
        let eps_avg = eps_total / n;
        let gm_target = if d > 0.0 { eps_avg / d } else { f64::INFINITY };
        let step = 1.0 / lipschitz;
        let mut x_prev = self.domain.project(&vec![0.0; self.domain.dim()])?;
        let mut y = x_prev.clone();
        let mut momentum = 1.0f64;
        let mut grad_map_norm = f64::INFINITY;
        for iter in 1..=opts.budget {
            let g = scale(&self.total_grad(&y), 1.0 / n);
            let mut target = y.clone();
            axpy(&mut target, -step, &g);
            let x_next = self.domain.project(&target)?;
            grad_map_norm = lipschitz * crate::linalg::dist(&y, &x_next);
            if grad_map_norm <= gm_target {
                return Ok(Comparator {
                    total: self.total_value(&x_next),
                    x: x_next,
                    grad_map_norm,
                    iterations: iter,
                    tolerance: eps_total,
                });
            }
            let momentum_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
            let mut y_next = x_next.clone();
            let shift = sub(&x_next, &x_prev);
            axpy(&mut y_next, (momentum - 1.0) / momentum_next, &shift);
            y = self.domain.project(&y_next)?;
            momentum = momentum_next;
            x_prev = x_next;
        }
        Err(LossError::ComparatorDidNotConverge { grad_map_norm })
    }
}
