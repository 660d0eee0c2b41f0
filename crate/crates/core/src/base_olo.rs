//! Drift-penalized online linear optimization learners and their
//! delay-adaptive learning-rate schedules.
//!
//! In the drift-penalized game the learner picks `z_n`, pays the linear loss
//! `<c_n, z_n>` plus a penalty `|z_{n-λ_n} - z_n|` for moving away from a
//! lagged prediction, and then observes `(c_n, λ_n, ν_n)` where `ν_n` counts
//! outstanding lags. Two updates are provided:
//!
//! - proximal FTRL, kept in closed form via running sums: with
//!   `α_1 = 1/η_1`, `α_{n+1} = 1/η_{n+1} - 1/η_n`, the minimizer of
//!   `<Σ c_m, z> + Σ (α_m/2)|z_m - z|^2` over the domain is the projection
//!   of `(Σ α_m z_m - Σ c_m) · η_n`, so each update costs O(k) instead of
//!   re-solving a growing argmin;
//! - online mirror descent, `z_{n+1} = Proj(z_n - η_n c_n)`.
//!
//! Both satisfy the per-step stability `|z_{n+1} - z_n| <= η_n |c_n|`; the
//! proximal form additionally satisfies the lagged bound
//! `|z_{n+λ} - z_n| <= η_{n+λ} |Σ_{m=n}^{n+λ-1} c_m| + (1 - η_{n+λ}/η_n) D`.
//! Learning rates must be non-increasing; an increase is rejected at update
//! time.

use thiserror::Error;

use crate::geometry::{Domain, GeometryError};
use crate::linalg::{all_finite, axpy, dist, dot, norm};

#[derive(Debug, Error)]
pub enum BaseOloError {
    #[error("learning rate must be positive and finite, got {0}")]
    BadRate(f64),
    #[error("learning rate increased: {next} after {prev}")]
    IncreasingRate { prev: f64, next: f64 },
    #[error("loss vector contains non-finite entries")]
    NonFiniteLoss,
    #[error("lag {lag} exceeds the {updates} updates seen so far")]
    BadLag { lag: usize, updates: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One revealed tuple of the drift-penalized game.
#[derive(Debug, Clone)]
pub struct BaseUpdatePacket {
    pub c: Vec<f64>,
    /// Lag `λ_n` of the drift penalty, at most `n - 1` at the n-th update.
    pub lag: usize,
    /// Number of outstanding lags `ν_n`.
    pub outstanding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    Pftrl,
    Omd,
}

/// Running state of a drift-penalized OLO learner.
#[derive(Debug, Clone)]
pub struct BaseLearner {
    kind: LearnerKind,
    domain: Domain,
    z: Vec<f64>,
    /// `1/η_{n-1}` with the convention `1/η_0 = 0`.
    inv_rate_prev: f64,
    /// P-FTRL running sum `Σ α_m z_m`.
    anchor_sum: Vec<f64>,
    /// P-FTRL running sum `Σ c_m`.
    loss_sum: Vec<f64>,
    updates: usize,
}

impl BaseLearner {
    /// Starts at `z_1` (default: the projected origin, which lies in the
    /// domain whenever the domain contains the origin).
    pub fn new(
        kind: LearnerKind,
        domain: Domain,
        initial: Option<Vec<f64>>,
    ) -> Result<Self, BaseOloError> {
        let k = domain.dim();
        let z = match initial {
            Some(z0) => domain.project(&z0)?,
            None => domain.project(&vec![0.0; k])?,
        };
        Ok(BaseLearner {
            kind,
            z,
            inv_rate_prev: 0.0,
            anchor_sum: vec![0.0; k],
            loss_sum: vec![0.0; k],
            updates: 0,
            domain,
        })
    }

    pub fn kind(&self) -> LearnerKind {
        self.kind
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// The prediction currently in force (`z_{n+1}` after `n` updates).
    pub fn current(&self) -> &[f64] {
        &self.z
    }

    /// Consumes `(c_n, λ_n, ν_n)` with rate `η_n` and moves to `z_{n+1}`.
    pub fn step(&mut self, packet: &BaseUpdatePacket, eta: f64) -> Result<(), BaseOloError> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(BaseOloError::BadRate(eta));
        }
        if !all_finite(&packet.c) {
            return Err(BaseOloError::NonFiniteLoss);
        }
        if packet.lag > self.updates {
            return Err(BaseOloError::BadLag {
                lag: packet.lag,
                updates: self.updates,
            });
        }
        let inv = 1.0 / eta;
        if inv < self.inv_rate_prev {
            return Err(BaseOloError::IncreasingRate {
                prev: 1.0 / self.inv_rate_prev,
                next: eta,
            });
        }
        match self.kind {
            LearnerKind::Pftrl => {
                let alpha = inv - self.inv_rate_prev;
                axpy(&mut self.anchor_sum, alpha, &self.z);
                axpy(&mut self.loss_sum, 1.0, &packet.c);
                let target: Vec<f64> = self
                    .anchor_sum
                    .iter()
                    .zip(&self.loss_sum)
                    .map(|(s, c)| (s - c) * eta)
                    .collect();
                self.z = self.domain.project(&target)?;
            }
            LearnerKind::Omd => {
                let mut target = self.z.clone();
                axpy(&mut target, -eta, &packet.c);
                self.z = self.domain.project(&target)?;
            }
        }
        self.inv_rate_prev = inv;
        self.updates += 1;
        Ok(())
    }
}

/// Per-term arrays retained when diagnostics are enabled.
#[derive(Debug, Clone, Default)]
pub struct LedgerDetail {
    pub lags: Vec<usize>,
    pub outstanding: Vec<usize>,
    pub c_norms: Vec<f64>,
    pub lin_terms: Vec<f64>,
    pub drift_terms: Vec<f64>,
    pub h_eta_terms: Vec<f64>,
    /// Flat prefix sums of the loss vectors, stride `dim`, `Σ_{m<=n} c_m` at
    /// offset `n * dim`.
    pub c_prefix: Vec<f64>,
}

/// Running account of linear regret, drift penalty, and learning-rate
/// misalignment.
///
/// Scalars are accumulated by default; the prediction history is always
/// retained because lagged drift terms look arbitrarily far back. Per-term
/// arrays are kept only when diagnostics are enabled.
#[derive(Debug, Clone)]
pub struct DriftRegretLedger {
    dim: usize,
    lin_loss: f64,
    c_total: Vec<f64>,
    drift_total: f64,
    h_eta_total: f64,
    z_log: Vec<f64>,
    eta_log: Vec<f64>,
    detail: Option<LedgerDetail>,
}

impl DriftRegretLedger {
    pub fn new(dim: usize, diagnostics: bool) -> Self {
        DriftRegretLedger {
            dim,
            lin_loss: 0.0,
            c_total: vec![0.0; dim],
            drift_total: 0.0,
            h_eta_total: 0.0,
            z_log: Vec::new(),
            eta_log: Vec::new(),
            detail: diagnostics.then(LedgerDetail::default),
        }
    }

    /// Number of recorded updates `N`.
    pub fn len(&self) -> usize {
        self.eta_log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta_log.is_empty()
    }

    /// `z_n` (1-based), the prediction in force at update `n`.
    pub fn z_at(&self, n: usize) -> &[f64] {
        &self.z_log[(n - 1) * self.dim..n * self.dim]
    }

    pub fn eta_at(&self, n: usize) -> f64 {
        self.eta_log[n - 1]
    }

    /// Records update `n`: the packet consumed, the rate used, and the
    /// prediction `z_n` that was in force when the loss was charged.
    pub fn record(&mut self, packet: &BaseUpdatePacket, eta: f64, z: &[f64]) {
        debug_assert_eq!(z.len(), self.dim);
        let n = self.len() + 1;
        debug_assert!(packet.lag < n, "lag must be at most n - 1");
        let (drift, h_term) = if packet.lag == 0 {
            (0.0, 0.0)
        } else {
            let past = (n - packet.lag - 1) * self.dim..(n - packet.lag) * self.dim;
            (
                dist(z, &self.z_log[past]),
                1.0 - eta / self.eta_at(n - packet.lag),
            )
        };
        let lin = dot(&packet.c, z);
        self.lin_loss += lin;
        axpy(&mut self.c_total, 1.0, &packet.c);
        self.drift_total += drift;
        self.h_eta_total += h_term;
        self.z_log.extend_from_slice(z);
        self.eta_log.push(eta);
        if let Some(detail) = &mut self.detail {
            detail.lags.push(packet.lag);
            detail.outstanding.push(packet.outstanding);
            detail.c_norms.push(norm(&packet.c));
            detail.lin_terms.push(lin);
            detail.drift_terms.push(drift);
            detail.h_eta_terms.push(h_term);
            let offset = detail.c_prefix.len() - self.dim.min(detail.c_prefix.len());
            let mut prefix = if detail.c_prefix.is_empty() {
                vec![0.0; self.dim]
            } else {
                detail.c_prefix[offset..].to_vec()
            };
            axpy(&mut prefix, 1.0, &packet.c);
            detail.c_prefix.extend_from_slice(&prefix);
        }
    }

    /// Linear regret `Σ <c_n, z_n - u>` against a comparator.
    pub fn linear_regret(&self, u: &[f64]) -> f64 {
        self.lin_loss - dot(&self.c_total, u)
    }

    /// Total drift penalty `Σ |z_{n-λ_n} - z_n|`.
    pub fn drift_total(&self) -> f64 {
        self.drift_total
    }

    /// Learning-rate misalignment `Σ (1 - η_n / η_{n-λ_n})`.
    pub fn h_eta(&self) -> f64 {
        self.h_eta_total
    }

    /// Drift-penalized regret with weight `W`.
    pub fn drift_penalized(&self, u: &[f64], weight: f64) -> f64 {
        self.linear_regret(u) + weight * self.drift_total
    }

    pub fn detail(&self) -> Option<&LedgerDetail> {
        self.detail.as_ref()
    }
}

/// `η_n = (D/G) / sqrt(n + Σ_{m<=n} dual_backlog_m)`.
pub fn lr_general(n: usize, prefix_dual_backlog: usize, diameter: f64, grad_bound: f64) -> f64 {
    diameter / grad_bound / ((n + prefix_dual_backlog) as f64).sqrt()
}

/// `η_n = 1 / (n λ)` for λ-strongly convex losses.
pub fn lr_strongly_convex(n: usize, lambda: f64) -> f64 {
    1.0 / (n as f64 * lambda)
}

/// Bandit schedule
/// `η_n = (D/G) / sqrt(n + Σ_{m<=n} (dual_backlog_m + (ν k r / δ'_m)^2))`,
/// with `prefix_inv_delta_sq = Σ_{m<=n} 1/δ'_m^2` accumulated by the caller.
#[allow(clippy::too_many_arguments)]
pub fn lr_bco(
    n: usize,
    prefix_dual_backlog: usize,
    prefix_inv_delta_sq: f64,
    diameter: f64,
    grad_bound: f64,
    nu: f64,
    k: usize,
    r: f64,
) -> f64 {
    let scaled = nu * k as f64 * r;
    diameter / grad_bound
        / ((n + prefix_dual_backlog) as f64 + scaled * scaled * prefix_inv_delta_sq).sqrt()
}

/// Two-point schedule `η_n = (D/G) / sqrt(n k + Σ_{m<=n} dual_backlog_m)`.
pub fn lr_two_point(
    n: usize,
    prefix_dual_backlog: usize,
    diameter: f64,
    grad_bound: f64,
    k: usize,
) -> f64 {
    diameter / grad_bound / ((n * k + prefix_dual_backlog) as f64).sqrt()
}

/// Learning-rate schedule selection, as named in experiment configs.
#[derive(Debug, Clone, PartialEq)]
pub enum RateSchedule {
    General {
        diameter: f64,
        grad_bound: f64,
    },
    StronglyConvex {
        lambda: f64,
    },
    Bco {
        diameter: f64,
        grad_bound: f64,
        nu: f64,
        k: usize,
        r: f64,
    },
    TwoPoint {
        diameter: f64,
        grad_bound: f64,
        k: usize,
    },
    Fixed {
        eta: f64,
    },
}

/// Accumulates the prefix statistics a schedule needs and emits `η_n`.
#[derive(Debug, Clone)]
pub struct ScheduleState {
    schedule: RateSchedule,
    n: usize,
    prefix_dual_backlog: usize,
    prefix_inv_delta_sq: f64,
}

impl ScheduleState {
    pub fn new(schedule: RateSchedule) -> Self {
        ScheduleState {
            schedule,
            n: 0,
            prefix_dual_backlog: 0,
            prefix_inv_delta_sq: 0.0,
        }
    }

    pub fn schedule(&self) -> &RateSchedule {
        &self.schedule
    }

    /// Rate for the next update, fed with this update's dual backlog and,
    /// for bandit schedules, the arrival-round smoothing parameter `δ'_n`.
    pub fn next_rate(&mut self, dual_backlog: usize, delta_arrival: Option<f64>) -> f64 {
        self.n += 1;
        self.prefix_dual_backlog += dual_backlog;
        if let Some(d) = delta_arrival {
            self.prefix_inv_delta_sq += 1.0 / (d * d);
        }
        match &self.schedule {
            RateSchedule::General {
                diameter,
                grad_bound,
            } => lr_general(self.n, self.prefix_dual_backlog, *diameter, *grad_bound),
            RateSchedule::StronglyConvex { lambda } => lr_strongly_convex(self.n, *lambda),
            RateSchedule::Bco {
                diameter,
                grad_bound,
                nu,
                k,
                r,
            } => {
                let d = delta_arrival.expect("bandit schedule needs the arrival-round delta");
                debug_assert!(d > 0.0);
                lr_bco(
                    self.n,
                    self.prefix_dual_backlog,
                    self.prefix_inv_delta_sq,
                    *diameter,
                    *grad_bound,
                    *nu,
                    *k,
                    *r,
                )
            }
            RateSchedule::TwoPoint {
                diameter,
                grad_bound,
                k,
            } => lr_two_point(self.n, self.prefix_dual_backlog, *diameter, *grad_bound, *k),
            RateSchedule::Fixed { eta } => *eta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::{substream, tag};

    fn interval(lo: f64, hi: f64) -> Domain {
        let r = lo.abs().min(hi.abs());
        let big_r = lo.abs().max(hi.abs());
        Domain::box_domain(vec![lo], vec![hi], r, big_r).unwrap()
    }

    fn packet(c: Vec<f64>) -> BaseUpdatePacket {
        BaseUpdatePacket {
            c,
            lag: 0,
            outstanding: 0,
        }
    }

    #[test]
    fn pftrl_with_constant_rate_is_lazy_projection() {
        let mut learner =
            BaseLearner::new(LearnerKind::Pftrl, interval(-1.0, 1.0), None).unwrap();
        learner.step(&packet(vec![1.0]), 0.1).unwrap();
        assert!((learner.current()[0] - -0.1).abs() < 1e-15);
        learner.step(&packet(vec![-2.0]), 0.1).unwrap();
        assert!((learner.current()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn pftrl_with_shrinking_rate_matches_grid_argmin() {
        let domain = interval(-2.0, 2.0);
        let mut learner = BaseLearner::new(LearnerKind::Pftrl, domain, None).unwrap();
        learner.step(&packet(vec![1.0]), 1.0).unwrap();
        assert!((learner.current()[0] - -1.0).abs() < 1e-12);
        learner.step(&packet(vec![1.0]), 0.5).unwrap();
        assert!((learner.current()[0] - -1.5).abs() < 1e-12);

        // Independent grid search of the proximal objective
        // <Σ c_m, z> + Σ α_m/2 (z_m - z)^2 over the interval.
        let (z1, z2) = (0.0, -1.0);
        let (alpha1, alpha2) = (1.0, 2.0 - 1.0);
        let c_sum = 2.0;
        let objective = |z: f64| {
            c_sum * z + alpha1 / 2.0 * (z1 - z) * (z1 - z) + alpha2 / 2.0 * (z2 - z) * (z2 - z)
        };
        let mut best = (f64::INFINITY, 0.0);
        let mut z = -2.0;
        while z <= 2.0 {
            let v = objective(z);
            if v < best.0 {
                best = (v, z);
            }
            z += 1e-4;
        }
        assert!((learner.current()[0] - best.1).abs() <= 1e-3);
    }

    #[test]
    fn pftrl_projection_binds() {
        let mut learner =
            BaseLearner::new(LearnerKind::Pftrl, interval(-1.0, 1.0), None).unwrap();
        learner.step(&packet(vec![5.0]), 1.0).unwrap();
        assert_eq!(learner.current(), &[-1.0]);
    }

    #[test]
    fn omd_steps() {
        let mut learner = BaseLearner::new(LearnerKind::Omd, interval(-1.0, 1.0), None).unwrap();
        learner.step(&packet(vec![1.0]), 0.5).unwrap();
        assert_eq!(learner.current(), &[-0.5]);

        let mut learner =
            BaseLearner::new(LearnerKind::Omd, interval(-1.0, 1.0), Some(vec![0.9])).unwrap();
        learner.step(&packet(vec![-1.0]), 0.5).unwrap();
        assert_eq!(learner.current(), &[1.0]);

        let ball = Domain::ball_origin(2, 1.0).unwrap();
        let mut learner = BaseLearner::new(LearnerKind::Omd, ball, None).unwrap();
        learner.step(&packet(vec![3.0, 4.0]), 0.5).unwrap();
        let z = learner.current();
        assert!((z[0] - -0.6).abs() < 1e-15 && (z[1] - -0.8).abs() < 1e-15);
    }

    #[test]
    fn invalid_updates_are_rejected() {
        let mut learner =
            BaseLearner::new(LearnerKind::Pftrl, interval(-1.0, 1.0), None).unwrap();
        learner.step(&packet(vec![1.0]), 0.5).unwrap();
        assert!(matches!(
            learner.step(&packet(vec![1.0]), 0.6),
            Err(BaseOloError::IncreasingRate { .. })
        ));
        assert!(matches!(
            learner.step(&packet(vec![f64::NAN]), 0.5),
            Err(BaseOloError::NonFiniteLoss)
        ));
        assert!(matches!(
            learner.step(&packet(vec![1.0]), 0.0),
            Err(BaseOloError::BadRate(_))
        ));
        let bad_lag = BaseUpdatePacket {
            c: vec![0.0],
            lag: 5,
            outstanding: 0,
        };
        assert!(matches!(
            learner.step(&bad_lag, 0.5),
            Err(BaseOloError::BadLag { .. })
        ));
    }

    #[test]
    fn rate_formulas() {
        assert_eq!(lr_general(1, 0, 1.0, 1.0), 1.0);
        assert!((lr_general(3, 5, 1.0, 1.0) - 1.0 / 8.0f64.sqrt()).abs() < 1e-15);
        // Worked five-round example: the dual backlogs sum to 6.
        assert!((lr_general(5, 6, 1.0, 1.0) - 1.0 / 11.0f64.sqrt()).abs() < 1e-15);

        assert_eq!(lr_strongly_convex(1, 1.0), 1.0);
        assert_eq!(lr_strongly_convex(5, 2.0), 0.1);
        assert_eq!(lr_strongly_convex(10, 0.5), 0.2);

        let r = 0.7;
        let got = lr_bco(1, 0, 1.0 / (r * r), 1.0, 1.0, 1.0, 1, r);
        assert!((got - 1.0 / 2.0f64.sqrt()).abs() < 1e-15);

        assert_eq!(lr_two_point(1, 0, 1.0, 1.0, 4), 0.5);
        assert!((lr_two_point(2, 1, 1.0, 1.0, 1) - 1.0 / 3.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bco_rate_with_constant_delta_has_closed_form() {
        let (nu, k, r, delta) = (1.5, 3usize, 0.5, 0.25);
        let mut state = ScheduleState::new(RateSchedule::Bco {
            diameter: 1.0,
            grad_bound: 1.0,
            nu,
            k,
            r,
        });
        let scaled = nu * k as f64 * r / delta;
        for n in 1..=20usize {
            let eta = state.next_rate(0, Some(delta));
            let want = 1.0 / (n as f64 * (1.0 + scaled * scaled)).sqrt();
            assert!((eta - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_prefix_matches_independent_recomputation() {
        let mut rng = substream(31, tag::TEST, 0);
        let mut state = ScheduleState::new(RateSchedule::Bco {
            diameter: 2.0,
            grad_bound: 1.5,
            nu: 0.9,
            k: 4,
            r: 0.8,
        });
        let mut backlogs = Vec::new();
        let mut deltas = Vec::new();
        for n in 1..=4usize {
            let b = rng.random_range(0..5usize);
            let d = rng.random_range(0.1..0.8);
            backlogs.push(b);
            deltas.push(d);
            let eta = state.next_rate(b, Some(d));
            let prefix_b: usize = backlogs.iter().sum();
            let prefix_d: f64 = deltas.iter().map(|x| 1.0 / (x * x)).sum();
            let want = lr_bco(n, prefix_b, prefix_d, 2.0, 1.5, 0.9, 4, 0.8);
            assert_eq!(eta, want);
        }

        let mut tp = ScheduleState::new(RateSchedule::TwoPoint {
            diameter: 2.0,
            grad_bound: 1.5,
            k: 3,
        });
        let mut prefix = 0usize;
        for n in 1..=10usize {
            let b = rng.random_range(0..4usize);
            prefix += b;
            assert_eq!(tp.next_rate(b, None), lr_two_point(n, prefix, 2.0, 1.5, 3));
        }
    }

    #[test]
    fn ledger_single_step() {
        let mut ledger = DriftRegretLedger::new(1, false);
        ledger.record(&packet(vec![1.0]), 1.0, &[0.0]);
        assert_eq!(ledger.linear_regret(&[1.0]), -1.0);
        assert_eq!(ledger.drift_total(), 0.0);
        assert_eq!(ledger.drift_penalized(&[1.0], 7.0), -1.0);
    }

    #[test]
    fn zero_lags_mean_zero_drift() {
        let mut ledger = DriftRegretLedger::new(2, false);
        let mut rng = substream(32, tag::TEST, 0);
        for _ in 0..50 {
            let c = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let z = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            ledger.record(&packet(c), 0.5, &z);
        }
        assert_eq!(ledger.drift_total(), 0.0);
        assert_eq!(ledger.h_eta(), 0.0);
    }

    #[test]
    fn ledger_matches_term_by_term_recomputation() {
        let mut rng = substream(33, tag::TEST, 0);
        let dim = 3;
        let mut ledger = DriftRegretLedger::new(dim, true);
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<Vec<f64>> = Vec::new();
        let mut lags = Vec::new();
        let mut etas = Vec::new();
        for n in 1..=60usize {
            let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lag = rng.random_range(0..n);
            let eta = 1.0 / n as f64;
            ledger.record(
                &BaseUpdatePacket {
                    c: c.clone(),
                    lag,
                    outstanding: 0,
                },
                eta,
                &z,
            );
            zs.push(z);
            cs.push(c);
            lags.push(lag);
            etas.push(eta);
        }
        let u = vec![0.3, -0.4, 0.1];
        let mut lin = 0.0;
        let mut drift = 0.0;
        let mut h = 0.0;
        for n in 1..=60usize {
            lin += dot(&cs[n - 1], &zs[n - 1]) - dot(&cs[n - 1], &u);
            if lags[n - 1] > 0 {
                drift += dist(&zs[n - 1], &zs[n - 1 - lags[n - 1]]);
                h += 1.0 - etas[n - 1] / etas[n - 1 - lags[n - 1]];
            }
        }
        assert!((ledger.linear_regret(&u) - lin).abs() < 1e-10);
        assert!((ledger.drift_total() - drift).abs() < 1e-10);
        assert!((ledger.h_eta() - h).abs() < 1e-10);
        // Prefix sums in the detail arrays agree with direct summation.
        let detail = ledger.detail().unwrap();
        let mut acc = vec![0.0; dim];
        for n in 1..=60usize {
            axpy(&mut acc, 1.0, &cs[n - 1]);
            let stored = &detail.c_prefix[(n - 1) * dim..n * dim];
            for i in 0..dim {
                assert!((stored[i] - acc[i]).abs() < 1e-12);
            }
        }
    }

    /// Random drift-penalized streams with lags and derived outstanding
    /// counts; exercised by the stability properties below.
    struct StreamLog {
        zs: Vec<Vec<f64>>, // z_1 .. z_{N+1}
        cs: Vec<Vec<f64>>,
        etas: Vec<f64>,
        lags: Vec<usize>,
        nus: Vec<usize>,
        diameter: f64,
    }

    fn run_random_stream(kind: LearnerKind, seed: u64, rounds: usize, dim: usize) -> StreamLog {
        let mut rng = substream(seed, tag::TEST, 0);
        let domain = Domain::ball_origin(dim, 1.0 + rng.random_range(0.0..1.0)).unwrap();
        let diameter = domain.diameter();
        let mut learner = BaseLearner::new(kind, domain, None).unwrap();
        let lags: Vec<usize> = (1..=rounds).map(|n| rng.random_range(0..n)).collect();
        let mut nus = vec![0usize; rounds];
        for (m0, &lag) in lags.iter().enumerate() {
            // m = m0 + 1 contributes to every n with m - lag <= n < m.
            for n in (m0 + 1 - lag)..(m0 + 1) {
                nus[n - 1] += 1;
            }
        }
        let mut zs = vec![learner.current().to_vec()];
        let mut cs = Vec::new();
        let mut etas = Vec::new();
        let mut prefix_nu = 0usize;
        for n in 1..=rounds {
            let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            prefix_nu += nus[n - 1];
            let eta = lr_general(n, prefix_nu, diameter, 1.0);
            learner
                .step(
                    &BaseUpdatePacket {
                        c: c.clone(),
                        lag: lags[n - 1],
                        outstanding: nus[n - 1],
                    },
                    eta,
                )
                .unwrap();
            cs.push(c);
            etas.push(eta);
            zs.push(learner.current().to_vec());
        }
        StreamLog {
            zs,
            cs,
            etas,
            lags,
            nus,
            diameter,
        }
    }

    #[test]
    fn per_step_drift_is_rate_bounded() {
        for kind in [LearnerKind::Pftrl, LearnerKind::Omd] {
            for seed in 0..10u64 {
                let log = run_random_stream(kind, seed, 80, 4);
                for n in 1..=80usize {
                    let step = dist(&log.zs[n], &log.zs[n - 1]);
                    let bound = log.etas[n - 1] * norm(&log.cs[n - 1]);
                    assert!(step <= bound + 1e-9, "{kind:?} seed {seed} step {n}");
                }
            }
        }
    }

    #[test]
    fn pftrl_lagged_drift_is_bounded() {
        for seed in 10..20u64 {
            let log = run_random_stream(LearnerKind::Pftrl, seed, 80, 3);
            for n in 1..=80usize {
                let lag = log.lags[n - 1];
                if lag == 0 {
                    continue;
                }
                // z_n here is zs[n - 1] (prediction before update n).
                let drift = dist(&log.zs[n - 1], &log.zs[n - 1 - lag]);
                let mut csum = vec![0.0; 3];
                for m in (n - lag)..n {
                    axpy(&mut csum, 1.0, &log.cs[m - 1]);
                }
                let bound = log.etas[n - 1] * norm(&csum)
                    + (1.0 - log.etas[n - 1] / log.etas[n - 1 - lag]) * log.diameter;
                assert!(drift <= bound + 1e-9, "seed {seed} update {n}");
            }
        }
    }

    #[test]
    fn aggregate_drift_bounds_hold() {
        for kind in [LearnerKind::Pftrl, LearnerKind::Omd] {
            for seed in 20..26u64 {
                let log = run_random_stream(kind, seed, 100, 3);
                let total_drift: f64 = (1..=100usize)
                    .filter(|&n| log.lags[n - 1] > 0)
                    .map(|n| dist(&log.zs[n - 1], &log.zs[n - 1 - log.lags[n - 1]]))
                    .sum();
                let nu_bound: f64 = (1..=100usize)
                    .map(|n| log.etas[n - 1] * log.nus[n - 1] as f64 * norm(&log.cs[n - 1]))
                    .sum();
                assert!(total_drift <= nu_bound + 1e-9, "{kind:?} seed {seed}");

                if kind == LearnerKind::Pftrl {
                    let mut partial_bound = 0.0;
                    let mut h_eta = 0.0;
                    for n in 1..=100usize {
                        let lag = log.lags[n - 1];
                        let mut csum = vec![0.0; 3];
                        for m in (n - lag)..n {
                            axpy(&mut csum, 1.0, &log.cs[m - 1]);
                        }
                        partial_bound += log.etas[n - 1] * norm(&csum);
                        if lag > 0 {
                            h_eta += 1.0 - log.etas[n - 1] / log.etas[n - 1 - lag];
                        }
                    }
                    assert!(
                        total_drift <= partial_bound + log.diameter * h_eta + 1e-9,
                        "seed {seed}"
                    );
                }
            }
        }
    }

    #[test]
    fn linear_regret_bound_holds_on_a_comparator_grid() {
        for kind in [LearnerKind::Pftrl, LearnerKind::Omd] {
            for seed in 26..30u64 {
                let log = run_random_stream(kind, seed, 60, 2);
                let radius = log.diameter / 2.0;
                for i in -2i32..=2 {
                    for j in -2i32..=2 {
                        let u = [
                            radius * i as f64 / 2.0 * 0.7,
                            radius * j as f64 / 2.0 * 0.7,
                        ];
                        let mut regret = 0.0;
                        let mut bound = 0.0;
                        let mut inv_prev = 0.0;
                        for n in 1..=60usize {
                            regret += dot(&log.cs[n - 1], &sub_vec(&log.zs[n - 1], &u));
                            let inv = 1.0 / log.etas[n - 1];
                            let du = dist(&log.zs[n - 1], &u);
                            bound += (inv - inv_prev) / 2.0 * du * du
                                + log.etas[n - 1] / 2.0 * dot(&log.cs[n - 1], &log.cs[n - 1]);
                            inv_prev = inv;
                        }
                        assert!(regret <= bound + 1e-9, "{kind:?} seed {seed} u {u:?}");
                    }
                }
            }
        }
    }

    fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    #[test]
    fn h_eta_bounds_hold() {
        for seed in 30..36u64 {
            let log = run_random_stream(LearnerKind::Pftrl, seed, 100, 2);
            let rounds = log.etas.len();
            let h_eta: f64 = (1..=rounds)
                .filter(|&n| log.lags[n - 1] > 0)
                .map(|n| 1.0 - log.etas[n - 1] / log.etas[n - 1 - log.lags[n - 1]])
                .sum();
            let nu_max = log.nus.iter().copied().max().unwrap_or(0);
            let eta_last = log.etas[rounds - 1];
            let bound1 = (nu_max as f64 + 1.0)
                * (std::f64::consts::E * log.etas[0] / eta_last).ln();
            assert!(h_eta <= bound1 + 1e-9, "seed {seed}: {h_eta} vs {bound1}");
            let bound2 = (1..=rounds)
                .map(|n| {
                    let hi = (n + log.nus[n - 1]).min(rounds);
                    log.etas[n - 1..hi].iter().sum::<f64>()
                })
                .fold(0.0f64, f64::max)
                / eta_last;
            assert!(h_eta <= bound2 + 1e-9, "seed {seed}: {h_eta} vs {bound2}");
        }
    }

    #[test]
    fn pftrl_matches_grid_argmin_on_scalar_streams() {
        let mut rng = substream(40, tag::TEST, 0);
        for _ in 0..10 {
            let rounds = rng.random_range(3..=20usize);
            let domain = interval(-1.0, 1.0);
            let mut learner = BaseLearner::new(LearnerKind::Pftrl, domain, None).unwrap();
            let mut zs = vec![0.0f64];
            let mut cs: Vec<f64> = Vec::new();
            let mut alphas: Vec<f64> = Vec::new();
            let mut inv_prev = 0.0;
            for n in 1..=rounds {
                let c = rng.random_range(-2.0..2.0);
                let eta = 1.0 / (n as f64).sqrt();
                alphas.push(1.0 / eta - inv_prev);
                inv_prev = 1.0 / eta;
                learner.step(&packet(vec![c]), eta).unwrap();
                cs.push(c);
                zs.push(learner.current()[0]);
            }
            // Grid-search the proximal objective for the final update.
            let c_sum: f64 = cs.iter().sum();
            let objective = |z: f64| {
                c_sum * z
                    + alphas
                        .iter()
                        .zip(&zs[..rounds])
                        .map(|(a, zm)| a / 2.0 * (zm - z) * (zm - z))
                        .sum::<f64>()
            };
            let mut best = (f64::INFINITY, 0.0);
            let mut z = -1.0;
            while z <= 1.0 {
                let v = objective(z);
                if v < best.0 {
                    best = (v, z);
                }
                z += 1e-4;
            }
            assert!(
                (zs[rounds] - best.1).abs() <= 1e-3,
                "closed form {} vs grid {}",
                zs[rounds],
                best.1
            );
        }
    }
}
