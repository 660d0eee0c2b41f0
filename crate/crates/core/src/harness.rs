//! Episode simulation, regret accounting, delay generators, sweeps, and
//! scaling fits.
//!
//! An episode wires an environment (loss family x domain x delay schedule)
//! to a wrapped player: each round the player predicts, incurs the loss, and
//! the environment delivers feedback packets exactly at rounds `s + d_s`, in
//! observation order. Regret is accounted against the offline
//! best-in-hindsight comparator; traces carry the drift diagnostics of the
//! base learner together with the delay-structure statistics of the
//! schedule.
//!
//! Everything is deterministic given `(setup, seed)`: loss draws,
//! exploration directions, and generated delays all flow from named
//! substreams of the episode seed.

use std::hash::{Hash, Hasher};

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::base_olo::{LearnerKind, RateSchedule};
use crate::estimators::SmoothingSchedule;
use crate::geometry::{Domain, GeometryError};
use crate::linalg::dist;
use crate::losses::{
    Comparator, ComparatorOptions, LossConstants, LossError, LossFamily, LossSpec,
};
use crate::rng::{substream, tag};
use crate::timeline::{profile, realize, DelaySchedule, Event, EventOrder, TimelineError};
use crate::wrappers::{
    BanditPlayer, DelayedPlayer, FeedbackMode, FeedbackPacket, FirstOrderPlayer, Payload,
    PlayerReport, Prediction, SkipWrapper, TwoPointPlayer, WrapperError,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("setup: {0}")]
    Setup(String),
    #[error("audit failed: {0}")]
    Audit(String),
    #[error("scaling fit: {0}")]
    Fit(String),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Wrapper(#[from] WrapperError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Delay-process presets. Generated schedules are always clipped to the
/// horizon constraint `d_t <= T - t`.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayGenerator {
    Zero,
    Constant { delay: usize },
    Uniform { max_delay: usize },
    /// First `floor(sqrt(T))` rounds get delay `min(T - t, ceil(T/2))`, the
    /// rest get 1.
    Spike,
    Geometric { p: f64 },
}

impl DelayGenerator {
    pub fn generate(&self, horizon: usize, seed: u64) -> DelaySchedule {
        let delays: Vec<usize> = (1..=horizon)
            .map(|t| {
                let cap = horizon - t;
                match self {
                    DelayGenerator::Zero => 0,
                    DelayGenerator::Constant { delay } => (*delay).min(cap),
                    DelayGenerator::Uniform { max_delay } => {
                        let mut rng = substream(seed, tag::DELAY, t as u64);
                        rng.random_range(0..=*max_delay).min(cap)
                    }
                    DelayGenerator::Spike => {
                        let head = (horizon as f64).sqrt().floor() as usize;
                        if t <= head {
                            cap.min(horizon.div_ceil(2))
                        } else {
                            1.min(cap)
                        }
                    }
                    DelayGenerator::Geometric { p } => {
                        let mut rng = substream(seed, tag::DELAY, t as u64);
                        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                        let d = (u.ln() / (1.0 - p).ln()).floor();
                        (d as usize).min(cap)
                    }
                }
            })
            .collect();
        DelaySchedule::new(delays).expect("generated schedules are clipped to the horizon")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelaySource {
    Explicit(DelaySchedule),
    Generated(DelayGenerator),
}

impl DelaySource {
    fn schedule(&self, horizon: usize, seed: u64) -> Result<DelaySchedule, HarnessError> {
        match self {
            DelaySource::Explicit(s) => {
                if s.horizon() != horizon {
                    return Err(HarnessError::Setup(format!(
                        "explicit schedule has horizon {}, episode wants {horizon}",
                        s.horizon()
                    )));
                }
                Ok(s.clone())
            }
            DelaySource::Generated(g) => Ok(g.generate(horizon, seed)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WrapperKind {
    FirstOrder,
    Bandit,
    TwoPoint,
}

/// Learning-rate schedule selection by kind; constants are assembled from
/// the family and domain at setup.
#[derive(Debug, Clone, PartialEq)]
pub enum RateKind {
    General,
    StronglyConvex,
    Bco,
    TwoPoint,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SmoothingKind {
    BcoConvex,
    BcoStronglyConvex,
    TwoPointConvex,
    TwoPointStronglyConvex,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerSpec {
    pub wrapper: WrapperKind,
    pub skipping: bool,
    pub learner: LearnerKind,
    pub rate: RateKind,
    pub smoothing: Option<SmoothingKind>,
}

/// Everything an episode needs besides its seed.
#[derive(Debug, Clone)]
pub struct EpisodeSetup {
    pub domain: Domain,
    pub loss: LossSpec,
    pub declared: Option<LossConstants>,
    pub delay: DelaySource,
    pub player: PlayerSpec,
    pub horizon: usize,
    pub comparator: ComparatorOptions,
    /// Cross-check the online dual streams against the offline profile and
    /// enforce the delivery-conservation invariants.
    pub audit: bool,
    /// Retain per-term ledger arrays.
    pub diagnostics: bool,
    /// Optional declared smoothness ratio; rejected unless it equals
    /// `M / (G r)`.
    pub nu_override: Option<f64>,
}

/// Flat per-episode record, one CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub horizon: usize,
    pub seed: u64,
    pub regret: f64,
    pub d_tot: usize,
    pub sigma_max: usize,
    pub skips: usize,
    pub d_prime_tot: usize,
    pub drift: f64,
    pub lin_regret: f64,
    pub h_eta: f64,
}

impl TraceSummary {
    pub const CSV_HEADER: &'static str =
        "T,seed,regret,d_tot,sigma_max,skips,dprime_tot,drift,lin_regret,H_eta";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.horizon,
            self.seed,
            self.regret,
            self.d_tot,
            self.sigma_max,
            self.skips,
            self.d_prime_tot,
            self.drift,
            self.lin_regret,
            self.h_eta
        )
    }
}

/// Full episode record.
#[derive(Debug, Clone)]
pub struct RegretTrace {
    pub horizon: usize,
    pub seed: u64,
    pub config_fingerprint: u64,
    pub schedule: DelaySchedule,
    pub predictions: Vec<Prediction>,
    pub per_round_loss: Vec<f64>,
    pub total_loss: f64,
    pub comparator: Comparator,
    pub regret: f64,
    pub d_tot: usize,
    pub sigma_max: usize,
    pub report: PlayerReport,
    /// Sum of the smoothing parameters stamped at issue time (0 for
    /// first-order play).
    pub delta_total: f64,
}

impl RegretTrace {
    pub fn summary(&self) -> TraceSummary {
        let (skips, d_prime_tot) = match &self.report.skip {
            Some(s) => (s.skipped.len(), s.modified_total),
            None => (0, self.d_tot),
        };
        TraceSummary {
            horizon: self.horizon,
            seed: self.seed,
            regret: self.regret,
            d_tot: self.d_tot,
            sigma_max: self.sigma_max,
            skips,
            d_prime_tot,
            drift: self.report.ledger.drift_total(),
            lin_regret: self.report.ledger.linear_regret(&self.comparator.x),
            h_eta: self.report.ledger.h_eta(),
        }
    }
}

fn fingerprint(setup: &EpisodeSetup) -> u64 {
    let mut hasher = std::hash::DefaultHasher::new();
    format!("{setup:?}").hash(&mut hasher);
    hasher.finish()
}

fn resolve_rate(
    setup: &EpisodeSetup,
    family: &LossFamily,
) -> Result<RateSchedule, HarnessError> {
    let constants = family.constants();
    let domain = family.domain();
    let rate = match &setup.player.rate {
        RateKind::General => RateSchedule::General {
            diameter: domain.diameter(),
            grad_bound: constants.g,
        },
        RateKind::StronglyConvex => {
            if constants.lambda <= 0.0 {
                return Err(HarnessError::Setup(
                    "strongly-convex schedule requires a family with lambda > 0".into(),
                ));
            }
            RateSchedule::StronglyConvex {
                lambda: constants.lambda,
            }
        }
        RateKind::Bco => {
            if setup.player.wrapper != WrapperKind::Bandit {
                return Err(HarnessError::Setup(
                    "the bandit schedule needs the bandit wrapper's arrival deltas".into(),
                ));
            }
            RateSchedule::Bco {
                diameter: domain.diameter(),
                grad_bound: constants.g,
                nu: family.smoothness_ratio(),
                k: domain.dim(),
                r: domain.inscribed_radius(),
            }
        }
        RateKind::TwoPoint => {
            if setup.player.wrapper != WrapperKind::TwoPoint {
                return Err(HarnessError::Setup(
                    "the two-point schedule is tied to the two-point wrapper".into(),
                ));
            }
            RateSchedule::TwoPoint {
                diameter: domain.diameter(),
                grad_bound: constants.g,
                k: domain.dim(),
            }
        }
        RateKind::Fixed(eta) => {
            if !(*eta > 0.0) {
                return Err(HarnessError::Setup(format!(
                    "fixed learning rate must be positive, got {eta}"
                )));
            }
            RateSchedule::Fixed { eta: *eta }
        }
    };
    Ok(rate)
}

fn resolve_smoothing(
    setup: &EpisodeSetup,
    family: &LossFamily,
) -> Result<Option<SmoothingSchedule>, HarnessError> {
    let domain = family.domain();
    let r = domain.inscribed_radius();
    let nu = family.smoothness_ratio();
    let k = domain.dim();
    let schedule = match (&setup.player.smoothing, setup.player.wrapper) {
        (None, WrapperKind::FirstOrder) => None,
        (None, _) => {
            return Err(HarnessError::Setup(
                "bandit wrappers need a smoothing schedule".into(),
            ))
        }
        (Some(_), WrapperKind::FirstOrder) => {
            return Err(HarnessError::Setup(
                "first-order play does not smooth".into(),
            ))
        }
        (Some(kind), _) => Some(match kind {
            SmoothingKind::BcoConvex => SmoothingSchedule::BcoConvex { r, nu, k },
            SmoothingKind::BcoStronglyConvex => SmoothingSchedule::BcoStronglyConvex { r, nu, k },
            SmoothingKind::TwoPointConvex => SmoothingSchedule::TwoPointConvex { r },
            SmoothingKind::TwoPointStronglyConvex => {
                SmoothingSchedule::TwoPointStronglyConvex { r }
            }
            SmoothingKind::Fixed(delta) => {
                if !(*delta > 0.0 && *delta <= r) {
                    return Err(HarnessError::Setup(format!(
                        "fixed smoothing delta {delta} outside (0, {r}]"
                    )));
                }
                SmoothingSchedule::Fixed { delta: *delta }
            }
        }),
    };
    Ok(schedule)
}

fn build_player(
    setup: &EpisodeSetup,
    family: &LossFamily,
    seed: u64,
) -> Result<Box<dyn DelayedPlayer>, HarnessError> {
    let rate = resolve_rate(setup, family)?;
    let smoothing = resolve_smoothing(setup, family)?;
    let domain = family.domain().clone();
    let inner: Box<dyn DelayedPlayer> = match setup.player.wrapper {
        WrapperKind::FirstOrder => Box::new(FirstOrderPlayer::new(
            setup.player.learner,
            domain,
            rate,
            setup.diagnostics,
        )?),
        WrapperKind::Bandit => Box::new(BanditPlayer::new(
            setup.player.learner,
            domain,
            rate,
            smoothing.expect("validated above"),
            seed,
            setup.diagnostics,
        )?),
        WrapperKind::TwoPoint => Box::new(TwoPointPlayer::new(
            setup.player.learner,
            domain,
            rate,
            smoothing.expect("validated above"),
            seed,
            setup.diagnostics,
        )?),
    };
    Ok(if setup.player.skipping {
        Box::new(SkipWrapper::new(inner))
    } else {
        inner
    })
}

/// Runs one episode. Deterministic given `(setup, seed)`.
pub fn run_episode(setup: &EpisodeSetup, seed: u64) -> Result<RegretTrace, HarnessError> {
    let horizon = setup.horizon;
    let schedule = setup.delay.schedule(horizon, seed)?;
    let family = LossFamily::build(
        &setup.loss,
        setup.domain.clone(),
        horizon,
        seed,
        setup.declared,
    )?;
    if let Some(nu) = setup.nu_override {
        let actual = family.smoothness_ratio();
        if (nu - actual).abs() > 1e-9 * (1.0 + actual.abs()) {
            return Err(HarnessError::Setup(format!(
                "declared smoothness ratio {nu} but M/(G r) = {actual}"
            )));
        }
    }
    let mut player = build_player(setup, &family, seed)?;
    let mode = player.feedback_mode();

    let mut arrivals: Vec<Vec<usize>> = vec![Vec::new(); horizon + 1];
    for t in 1..=horizon {
        arrivals[t + schedule.delay(t)].push(t);
    }

    let mut predictions: Vec<Prediction> = Vec::with_capacity(horizon);
    let mut per_round_loss = Vec::with_capacity(horizon);
    let mut delta_total = 0.0;
    for t in 1..=horizon {
        let prediction = player.predict(t)?;
        let loss = match &prediction {
            Prediction::Point(x) => family.value(t, x)?,
            Prediction::Pair(a, b) => (family.value(t, a)? + family.value(t, b)?) / 2.0,
        };
        per_round_loss.push(loss);
        predictions.push(prediction);
        for &s in &arrivals[t] {
            let payload = match (&mode, &predictions[s - 1]) {
                (FeedbackMode::Gradient, Prediction::Point(x)) => {
                    Payload::Gradient(family.grad(s, x)?)
                }
                (FeedbackMode::Value, Prediction::Point(x)) => {
                    Payload::Value(family.value(s, x)?)
                }
                (FeedbackMode::TwoValues, Prediction::Pair(a, b)) => {
                    Payload::TwoValues(family.value(s, a)?, family.value(s, b)?)
                }
                _ => unreachable!("prediction shape follows the feedback mode"),
            };
            player.receive(FeedbackPacket {
                origin: s,
                arrival: t,
                payload,
            })?;
        }
    }
    let report = player.finish();
    for update in &report.updates {
        if let Some(d) = update.delta_issue {
            delta_total += d;
        }
    }
    let comparator = family.best_in_hindsight(setup.comparator)?;
    let total_loss: f64 = per_round_loss.iter().sum();
    let delay_profile = profile(&realize(&schedule));

    let trace = RegretTrace {
        horizon,
        seed,
        config_fingerprint: fingerprint(setup),
        regret: total_loss - comparator.total,
        d_tot: delay_profile.total_delay,
        sigma_max: delay_profile.max_backlog(),
        schedule,
        predictions,
        per_round_loss,
        total_loss,
        comparator,
        report,
        delta_total,
    };
    if setup.audit {
        audit_episode(&trace)?;
    }
    Ok(trace)
}

/// Conservation and online-vs-offline dual checks.
///
/// Every round's feedback must have been consumed exactly once (true packet
/// or the skipper's zero packet), and the lag/outstanding stream the base
/// learner saw must match the offline profile of the event order the
/// forwarding actually realized.
pub fn audit_episode(trace: &RegretTrace) -> Result<(), HarnessError> {
    let horizon = trace.horizon;
    let updates = &trace.report.updates;
    if updates.len() != horizon {
        return Err(HarnessError::Audit(format!(
            "{} updates for {horizon} rounds",
            updates.len()
        )));
    }
    let mut seen = vec![false; horizon];
    for u in updates {
        if seen[u.origin - 1] {
            return Err(HarnessError::Audit(format!(
                "round {} answered twice",
                u.origin
            )));
        }
        seen[u.origin - 1] = true;
    }

    // Rebuild the event order the forwarding realized: preemptive packets
    // arrive before the round's prediction, true packets after.
    let mut events = Vec::with_capacity(2 * horizon);
    let mut cursor = 0usize;
    for t in 1..=horizon {
        while cursor < updates.len() && updates[cursor].arrival == t && updates[cursor].preemptive
        {
            events.push(Event::Obs(updates[cursor].origin - 1));
            cursor += 1;
        }
        events.push(Event::Pred(t - 1));
        while cursor < updates.len() && updates[cursor].arrival == t {
            debug_assert!(!updates[cursor].preemptive);
            events.push(Event::Obs(updates[cursor].origin - 1));
            cursor += 1;
        }
    }
    let order = EventOrder::from_events(horizon, events)
        .map_err(|e| HarnessError::Audit(format!("invalid realized order: {e}")))?;
    let p = profile(&order);
    for (n, u) in updates.iter().enumerate() {
        if p.rho[n] != u.origin - 1 {
            return Err(HarnessError::Audit(format!(
                "update {n} consumed round {} but the profile orders round {}",
                u.origin,
                p.rho[n] + 1
            )));
        }
        if u.lag != p.dual_delay[u.origin - 1] || u.outstanding != p.dual_backlog[u.origin - 1] {
            return Err(HarnessError::Audit(format!(
                "update {n}: forwarded (lag {}, outstanding {}) but the profile says ({}, {})",
                u.lag,
                u.outstanding,
                p.dual_delay[u.origin - 1],
                p.dual_backlog[u.origin - 1]
            )));
        }
    }
    Ok(())
}

/// Slack of the steady-algorithm regret decomposition: the observation-
/// ordered regret of the played points, minus the base-sequence regret plus
/// `G` times the total drift. Nonpositive up to numerical error for
/// first-order play without skipping.
pub fn decomposition_slack(
    trace: &RegretTrace,
    family: &LossFamily,
) -> Result<f64, HarnessError> {
    let ledger = &trace.report.ledger;
    let constants = family.constants();
    let x_star = &trace.comparator.x;
    let mut lhs = 0.0;
    let mut base_side = 0.0;
    for (n, update) in trace.report.updates.iter().enumerate() {
        let origin = update.origin;
        lhs += trace.per_round_loss[origin - 1] - family.value(origin, x_star)?;
        base_side += family.value(origin, ledger.z_at(n + 1))? - family.value(origin, x_star)?;
    }
    let rhs = base_side + constants.g * ledger.drift_total();
    Ok(lhs - rhs)
}

/// `6 G D (sqrt(d_tot) + sqrt(T))`, the explicit-constant pathwise bound for
/// the general-convex first-order reduction.
pub fn bound_first_order_general(g: f64, diameter: f64, d_tot: usize, horizon: usize) -> f64 {
    6.0 * g * diameter * ((d_tot as f64).sqrt() + (horizon as f64).sqrt())
}

fn ln_e_t(horizon: usize) -> f64 {
    (std::f64::consts::E * horizon.max(1) as f64).ln()
}

/// `(9 G^2 / λ) (min{σ_max ln(eT), 2 sqrt(d_tot)} + ln(eT))` for the
/// strongly convex proximal-FTRL reduction.
pub fn bound_first_order_strongly_pftrl(
    g: f64,
    lambda: f64,
    sigma_max: usize,
    d_tot: usize,
    horizon: usize,
) -> f64 {
    let log_term = ln_e_t(horizon);
    let delay_term = (sigma_max as f64 * log_term).min(2.0 * (d_tot as f64).sqrt());
    9.0 * g * g / lambda * (delay_term + log_term)
}

/// `(3 G^2 / λ) (σ_max + 1) ln(eT)` for the strongly convex mirror-descent
/// reduction.
pub fn bound_first_order_strongly_omd(
    g: f64,
    lambda: f64,
    sigma_max: usize,
    horizon: usize,
) -> f64 {
    3.0 * g * g / lambda * (sigma_max as f64 + 1.0) * ln_e_t(horizon)
}

/// Heuristic ceiling for the two-point estimator's second-moment constant.
pub const TWO_POINT_MOMENT_CONSTANT: f64 = 10.0;

/// Assembled expected-regret bound for the bandit reductions, evaluated with
/// the measured schedule quantities (rates, lags, smoothing parameters).
/// The right-hand side is deterministic given the delay schedule, so the
/// seed mean of the measured regret is compared against it.
pub fn bound_bandit(trace: &RegretTrace, family: &LossFamily, strongly: bool) -> f64 {
    let constants = family.constants();
    let domain = family.domain();
    let (g, d, r) = (
        constants.g,
        domain.diameter(),
        domain.inscribed_radius(),
    );
    let big_r = domain.circumscribed_radius();
    let nu = family.smoothness_ratio();
    let k = domain.dim() as f64;
    let ledger = &trace.report.ledger;
    let updates = &trace.report.updates;
    let n_updates = updates.len();
    let eta_last = ledger.eta_at(n_updates);
    let h_eta = ledger.h_eta();
    let mut rate_sum = 0.0;
    for (n, u) in updates.iter().enumerate() {
        let eta = ledger.eta_at(n + 1);
        let issue = nu * k * r / u.delta_issue.expect("bandit updates stamp deltas");
        let arrival = nu * k * r / u.delta_arrival.expect("bandit updates stamp deltas");
        let meander = 4.0 * g * g * (u.lag as f64 + arrival * arrival);
        let variance = g * g * issue * issue;
        rate_sum += eta * (if strongly { 3.0 * meander } else { meander } + variance);
    }
    let bias = if strongly { 10.0 } else { 6.0 };
    let drift_weight = if strongly { 3.0 } else { 1.0 };
    let head = if strongly {
        0.0
    } else {
        d * d / (2.0 * eta_last)
    };
    head + rate_sum + drift_weight * g * d * h_eta + bias * g * big_r * trace.delta_total / r
}

/// Assembled expected-regret bound for the two-point reduction, with the
/// estimator's second-moment constant pinned at
/// [`TWO_POINT_MOMENT_CONSTANT`].
pub fn bound_two_point(trace: &RegretTrace, family: &LossFamily, strongly: bool) -> f64 {
    let constants = family.constants();
    let domain = family.domain();
    let (g, d, r) = (
        constants.g,
        domain.diameter(),
        domain.inscribed_radius(),
    );
    let big_r = domain.circumscribed_radius();
    let ck = TWO_POINT_MOMENT_CONSTANT * domain.dim() as f64;
    let ledger = &trace.report.ledger;
    let updates = &trace.report.updates;
    let eta_last = ledger.eta_at(updates.len());
    let mut rate_sum = 0.0;
    for (n, u) in updates.iter().enumerate() {
        let eta = ledger.eta_at(n + 1);
        let meander = 2.0 * g * g * (u.lag as f64 + ck);
        rate_sum += eta * (if strongly { 3.0 * meander } else { meander } + ck * g * g);
    }
    let bias = if strongly { 11.0 } else { 7.0 };
    let drift_weight = if strongly { 3.0 } else { 1.0 };
    let head = if strongly {
        0.0
    } else {
        d * d / (2.0 * eta_last)
    };
    head + rate_sum + drift_weight * g * d * ledger.h_eta() + bias * g * big_r * trace.delta_total / r
}

/// One aggregated sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub horizon: usize,
    pub mean_regret: f64,
    pub std_regret: f64,
    pub reps: usize,
}

impl SweepSummary {
    pub const CSV_HEADER: &'static str = "T,mean_regret,std_regret,reps";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.horizon, self.mean_regret, self.std_regret, self.reps
        )
    }
}

/// Runs `|t_grid| x |seeds|` episodes in parallel and aggregates per
/// horizon. Row order is deterministic: sorted by `(T, seed)`.
pub fn sweep(
    setup: &EpisodeSetup,
    t_grid: &[usize],
    seeds: &[u64],
) -> Result<(Vec<TraceSummary>, Vec<SweepSummary>), HarnessError> {
    let mut jobs: Vec<(usize, u64)> = Vec::new();
    for &t in t_grid {
        for &seed in seeds {
            jobs.push((t, seed));
        }
    }
    let mut rows: Vec<TraceSummary> = jobs
        .par_iter()
        .map(|&(horizon, seed)| {
            let mut episode = setup.clone();
            episode.horizon = horizon;
            run_episode(&episode, seed).map(|trace| trace.summary())
        })
        .collect::<Result<_, _>>()?;
    rows.sort_by_key(|r| (r.horizon, r.seed));
    let mut summaries = Vec::new();
    for &t in t_grid {
        let regrets: Vec<f64> = rows
            .iter()
            .filter(|r| r.horizon == t)
            .map(|r| r.regret)
            .collect();
        let n = regrets.len() as f64;
        let mean = regrets.iter().sum::<f64>() / n;
        let var = regrets.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / (n - 1.0).max(1.0);
        summaries.push(SweepSummary {
            horizon: t,
            mean_regret: mean,
            std_regret: var.sqrt(),
            reps: regrets.len(),
        });
    }
    summaries.sort_by_key(|s| s.horizon);
    Ok((rows, summaries))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
}

/// Least-squares fit of `log(mean regret)` against `log(T)`.
pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit, HarnessError> {
    if points.len() < 2 {
        return Err(HarnessError::Fit(format!(
            "need at least two points, got {}",
            points.len()
        )));
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(t, y)| {
            if t <= 0.0 || y <= 0.0 {
                Err(HarnessError::Fit(format!(
                    "log-log fit needs positive data, got ({t}, {y})"
                )))
            } else {
                Ok((t.ln(), y.ln()))
            }
        })
        .collect::<Result<_, _>>()?;
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Fit("all horizons coincide".into()));
    }
    let sxy: f64 = logs
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual = (logs
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(ScalingFit {
        slope,
        intercept,
        residual,
    })
}

/// Steadiness audit helper: rounds in which the played base point moved.
pub fn base_moved_rounds(trace: &RegretTrace) -> Vec<usize> {
    let ledger = &trace.report.ledger;
    let n = ledger.len();
    let mut moved = Vec::new();
    for i in 2..=n {
        if dist(ledger.z_at(i), ledger.z_at(i - 1)) > 0.0 {
            moved.push(trace.report.updates[i - 1].arrival);
        }
    }
    moved
}
