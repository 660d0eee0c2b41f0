//! Reduction wrappers that turn a drift-penalized base learner into a
//! delayed-feedback player, plus the adaptive skipping wrapper.
//!
//! All wrappers expose the same round-based interface: `predict(t)` once per
//! round in order, `receive(packet)` for each feedback arrival (in
//! observation order within a round), `finish()` to collect the episode
//! report. The wrapper keeps one pending record per outstanding round; on
//! arrival it derives the dual delay (observations that arrived in between)
//! and dual backlog (predictions still outstanding) from its own counters,
//! so every quantity forwarded to the base learner is computable from the
//! observed history at the instant of forwarding.
//!
//! - [`FirstOrderPlayer`] forwards gradients unchanged and is steady: its
//!   emitted prediction changes only when feedback arrives.
//! - [`BanditPlayer`] plays `(1 - δ_t/r) z̄ + δ_t u_t` and forwards one-point
//!   gradient estimates built with the δ stamped at issue time.
//! - [`TwoPointPlayer`] plays the symmetric pair around `(1 - δ_t/r) z̄` and
//!   forwards two-point estimates.
//! - [`SkipWrapper`] presents its inner player with a modified problem:
//!   rounds whose feedback lags beyond an adaptive square-root threshold are
//!   preemptively answered with zero feedback and their true packets dropped.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::base_olo::{
    BaseLearner, BaseOloError, BaseUpdatePacket, DriftRegretLedger, LearnerKind, RateSchedule,
    ScheduleState,
};
use crate::estimators::{
    one_point_estimate, sample_sphere, two_point_estimate, EstimatorError, SmoothingSchedule,
};
use crate::geometry::Domain;
use crate::linalg::axpy;
use crate::rng::{substream, tag};

#[derive(Debug, Error)]
pub enum WrapperError {
    #[error("rounds must advance one at a time: expected {expected}, got {got}")]
    RoundOrder { expected: usize, got: usize },
    #[error("feedback for round {0} which was never issued")]
    UnknownRound(usize),
    #[error("duplicate feedback for round {0}")]
    DuplicateFeedback(usize),
    #[error("payload does not match the feedback model (expected {expected})")]
    WrongPayload { expected: &'static str },
    #[error(transparent)]
    Base(#[from] BaseOloError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Which feedback the environment must supply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackMode {
    Gradient,
    Value,
    TwoValues,
}

#[derive(Debug, Clone)]
pub enum Payload {
    Gradient(Vec<f64>),
    Value(f64),
    TwoValues(f64, f64),
}

/// A feedback event: round `origin` answered in round `arrival`.
#[derive(Debug, Clone)]
pub struct FeedbackPacket {
    pub origin: usize,
    pub arrival: usize,
    pub payload: Payload,
}

/// What a wrapper plays in a round.
#[derive(Debug, Clone)]
pub enum Prediction {
    Point(Vec<f64>),
    Pair(Vec<f64>, Vec<f64>),
}

/// One forwarded update, as seen by the base learner.
#[derive(Debug, Clone)]
pub struct UpdateRecord {
    pub origin: usize,
    pub arrival: usize,
    /// Dual delay forwarded as the drift lag.
    pub lag: usize,
    /// Dual backlog forwarded as the outstanding count.
    pub outstanding: usize,
    pub eta: f64,
    pub delta_issue: Option<f64>,
    pub delta_arrival: Option<f64>,
    /// True when the packet was consumed before this round's prediction was
    /// issued (zero feedback forwarded preemptively by the skipping wrapper).
    pub preemptive: bool,
}

/// Skipping-wrapper statistics.
#[derive(Debug, Clone)]
pub struct SkipReport {
    /// Skipped rounds, in skip order (1-based).
    pub skipped: Vec<usize>,
    /// Modified delay per round: forwarding round minus origin.
    pub modified_delays: Vec<usize>,
    /// Cumulative tracking-set size `D_t`, one entry per round.
    pub cumulative: Vec<u64>,
    pub modified_total: usize,
}

/// Episode diagnostics drained from a player by `finish`.
#[derive(Debug, Clone)]
pub struct PlayerReport {
    pub ledger: DriftRegretLedger,
    pub updates: Vec<UpdateRecord>,
    /// Base prediction in force at the end of the episode.
    pub base_final: Vec<f64>,
    pub skip: Option<SkipReport>,
}

/// Round-based delayed-feedback player.
pub trait DelayedPlayer {
    fn feedback_mode(&self) -> FeedbackMode;
    fn dim(&self) -> usize;
    /// Must be called exactly once per round, in increasing round order.
    fn predict(&mut self, t: usize) -> Result<Prediction, WrapperError>;
    /// Packets within a round must be delivered in observation order.
    fn receive(&mut self, packet: FeedbackPacket) -> Result<(), WrapperError>;
    /// Current base prediction (the quantity that is steady between
    /// arrivals).
    fn base_point(&self) -> &[f64];
    fn finish(&mut self) -> PlayerReport;
}

impl DelayedPlayer for Box<dyn DelayedPlayer> {
    fn feedback_mode(&self) -> FeedbackMode {
        (**self).feedback_mode()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn predict(&mut self, t: usize) -> Result<Prediction, WrapperError> {
        (**self).predict(t)
    }
    fn receive(&mut self, packet: FeedbackPacket) -> Result<(), WrapperError> {
        (**self).receive(packet)
    }
    fn base_point(&self) -> &[f64] {
        (**self).base_point()
    }
    fn finish(&mut self) -> PlayerReport {
        (**self).finish()
    }
}

#[derive(Debug, Clone)]
enum Slot {
    Outstanding {
        /// Updates already consumed when this round was issued.
        obs_at_issue: usize,
        delta: Option<f64>,
        direction: Option<Vec<f64>>,
    },
    Done,
}

/// Shared mechanics of the three reduction wrappers: pending bookkeeping,
/// online dual computation, learning-rate sequencing, and the base step.
struct ReductionCore {
    base: BaseLearner,
    ledger: DriftRegretLedger,
    schedule: ScheduleState,
    slots: Vec<Slot>,
    rounds_issued: usize,
    updates: Vec<UpdateRecord>,
}

impl ReductionCore {
    fn new(
        learner: LearnerKind,
        domain: Domain,
        schedule: RateSchedule,
        diagnostics: bool,
    ) -> Result<Self, WrapperError> {
        let dim = domain.dim();
        Ok(ReductionCore {
            base: BaseLearner::new(learner, domain, None)?,
            ledger: DriftRegretLedger::new(dim, diagnostics),
            schedule: ScheduleState::new(schedule),
            slots: Vec::new(),
            rounds_issued: 0,
            updates: Vec::new(),
        })
    }

    fn issue(&mut self, t: usize) -> Result<(), WrapperError> {
        if t != self.rounds_issued + 1 {
            return Err(WrapperError::RoundOrder {
                expected: self.rounds_issued + 1,
                got: t,
            });
        }
        self.rounds_issued = t;
        self.slots.push(Slot::Outstanding {
            obs_at_issue: self.updates.len(),
            delta: None,
            direction: None,
        });
        Ok(())
    }

    fn stamp(&mut self, t: usize, delta_value: f64, dir: Vec<f64>) {
        if let Slot::Outstanding {
            delta, direction, ..
        } = &mut self.slots[t - 1]
        {
            *delta = Some(delta_value);
            *direction = Some(dir);
        }
    }

    fn pending(&self, origin: usize) -> Result<(usize, Option<f64>, Option<&Vec<f64>>), WrapperError> {
        match self.slots.get(origin.wrapping_sub(1)) {
            None => Err(WrapperError::UnknownRound(origin)),
            Some(Slot::Done) => Err(WrapperError::DuplicateFeedback(origin)),
            Some(Slot::Outstanding {
                obs_at_issue,
                delta,
                direction,
            }) => Ok((*obs_at_issue, *delta, direction.as_ref())),
        }
    }

    /// Forwards a loss vector for `origin` to the base learner, deriving the
    /// dual delay and dual backlog from the wrapper's own history.
    fn consume(
        &mut self,
        origin: usize,
        arrival: usize,
        c: Vec<f64>,
        delta_issue: Option<f64>,
        delta_arrival: Option<f64>,
    ) -> Result<(), WrapperError> {
        let (obs_at_issue, _, _) = self.pending(origin)?;
        let n = self.updates.len() + 1;
        // Observations that arrived strictly between issuing `origin` and
        // now.
        let lag = (n - 1) - obs_at_issue;
        // Predictions issued and still unanswered at this instant, excluding
        // `origin` itself.
        let outstanding = self.rounds_issued - n;
        let eta = self.schedule.next_rate(outstanding, delta_arrival);
        let packet = BaseUpdatePacket {
            c,
            lag,
            outstanding,
        };
        self.ledger.record(&packet, eta, self.base.current());
        self.base.step(&packet, eta)?;
        self.slots[origin - 1] = Slot::Done;
        self.updates.push(UpdateRecord {
            origin,
            arrival,
            lag,
            outstanding,
            eta,
            delta_issue,
            delta_arrival,
            preemptive: self.rounds_issued < arrival,
        });
        Ok(())
    }

    fn report(&mut self) -> PlayerReport {
        let dim = self.base.domain().dim();
        PlayerReport {
            ledger: std::mem::replace(&mut self.ledger, DriftRegretLedger::new(dim, false)),
            updates: std::mem::take(&mut self.updates),
            base_final: self.base.current().to_vec(),
            skip: None,
        }
    }
}

/// First-order reduction: predictions are the base output, gradients are
/// forwarded unchanged.
pub struct FirstOrderPlayer {
    core: ReductionCore,
}

impl FirstOrderPlayer {
    pub fn new(
        learner: LearnerKind,
        domain: Domain,
        schedule: RateSchedule,
        diagnostics: bool,
    ) -> Result<Self, WrapperError> {
        Ok(FirstOrderPlayer {
            core: ReductionCore::new(learner, domain, schedule, diagnostics)?,
        })
    }
}

impl DelayedPlayer for FirstOrderPlayer {
    fn feedback_mode(&self) -> FeedbackMode {
        FeedbackMode::Gradient
    }

    fn dim(&self) -> usize {
        self.core.base.domain().dim()
    }

    fn predict(&mut self, t: usize) -> Result<Prediction, WrapperError> {
        self.core.issue(t)?;
        Ok(Prediction::Point(self.core.base.current().to_vec()))
    }

    fn receive(&mut self, packet: FeedbackPacket) -> Result<(), WrapperError> {
        let Payload::Gradient(g) = packet.payload else {
            return Err(WrapperError::WrongPayload {
                expected: "gradient",
            });
        };
        self.core.consume(packet.origin, packet.arrival, g, None, None)
    }

    fn base_point(&self) -> &[f64] {
        self.core.base.current()
    }

    fn finish(&mut self) -> PlayerReport {
        self.core.report()
    }
}

/// Bandit reduction with one-point gradient estimates.
pub struct BanditPlayer {
    core: ReductionCore,
    smoothing: SmoothingSchedule,
    seed: u64,
}

impl BanditPlayer {
    pub fn new(
        learner: LearnerKind,
        domain: Domain,
        schedule: RateSchedule,
        smoothing: SmoothingSchedule,
        seed: u64,
        diagnostics: bool,
    ) -> Result<Self, WrapperError> {
        Ok(BanditPlayer {
            core: ReductionCore::new(learner, domain, schedule, diagnostics)?,
            smoothing,
            seed,
        })
    }

    fn explore_direction(&self, t: usize) -> Vec<f64> {
        let mut rng = substream(self.seed, tag::EXPLORE, t as u64);
        sample_sphere(&mut rng, self.dim())
    }
}

impl DelayedPlayer for BanditPlayer {
    fn feedback_mode(&self) -> FeedbackMode {
        FeedbackMode::Value
    }

    fn dim(&self) -> usize {
        self.core.base.domain().dim()
    }

    fn predict(&mut self, t: usize) -> Result<Prediction, WrapperError> {
        self.core.issue(t)?;
        let delta = self.smoothing.delta_at(t as f64);
        let r = self.core.base.domain().inscribed_radius();
        let u = self.explore_direction(t);
        let mut x = crate::linalg::scale(self.core.base.current(), 1.0 - delta / r);
        axpy(&mut x, delta, &u);
        self.core.stamp(t, delta, u);
        Ok(Prediction::Point(x))
    }

    fn receive(&mut self, packet: FeedbackPacket) -> Result<(), WrapperError> {
        let Payload::Value(v) = packet.payload else {
            return Err(WrapperError::WrongPayload { expected: "value" });
        };
        let (_, delta, direction) = self.core.pending(packet.origin)?;
        let delta = delta.expect("bandit rounds are stamped at issue time");
        let u = direction.expect("bandit rounds are stamped at issue time").clone();
        let estimate = one_point_estimate(v, delta, &u, self.dim())?;
        let delta_arrival = self.smoothing.delta_at(packet.arrival as f64);
        self.core.consume(
            packet.origin,
            packet.arrival,
            estimate,
            Some(delta),
            Some(delta_arrival),
        )
    }

    fn base_point(&self) -> &[f64] {
        self.core.base.current()
    }

    fn finish(&mut self) -> PlayerReport {
        self.core.report()
    }
}

/// Two-point bandit reduction: plays the symmetric pair around the shrunk
/// base point and forwards two-point estimates.
pub struct TwoPointPlayer {
    core: ReductionCore,
    smoothing: SmoothingSchedule,
    seed: u64,
}

impl TwoPointPlayer {
    pub fn new(
        learner: LearnerKind,
        domain: Domain,
        schedule: RateSchedule,
        smoothing: SmoothingSchedule,
        seed: u64,
        diagnostics: bool,
    ) -> Result<Self, WrapperError> {
        Ok(TwoPointPlayer {
            core: ReductionCore::new(learner, domain, schedule, diagnostics)?,
            smoothing,
            seed,
        })
    }
}

impl DelayedPlayer for TwoPointPlayer {
    fn feedback_mode(&self) -> FeedbackMode {
        FeedbackMode::TwoValues
    }

    fn dim(&self) -> usize {
        self.core.base.domain().dim()
    }

    fn predict(&mut self, t: usize) -> Result<Prediction, WrapperError> {
        self.core.issue(t)?;
        let delta = self.smoothing.delta_at(t as f64);
        let r = self.core.base.domain().inscribed_radius();
        let mut rng = substream(self.seed, tag::EXPLORE, t as u64);
        let u = sample_sphere(&mut rng, self.dim());
        let center = crate::linalg::scale(self.core.base.current(), 1.0 - delta / r);
        let mut plus = center.clone();
        axpy(&mut plus, delta, &u);
        let mut minus = center;
        axpy(&mut minus, -delta, &u);
        self.core.stamp(t, delta, u);
        Ok(Prediction::Pair(plus, minus))
    }

    fn receive(&mut self, packet: FeedbackPacket) -> Result<(), WrapperError> {
        let Payload::TwoValues(v_plus, v_minus) = packet.payload else {
            return Err(WrapperError::WrongPayload {
                expected: "two values",
            });
        };
        let (_, delta, direction) = self.core.pending(packet.origin)?;
        let delta = delta.expect("two-point rounds are stamped at issue time");
        let u = direction.expect("two-point rounds are stamped at issue time").clone();
        let estimate = two_point_estimate(v_plus, v_minus, delta, &u, self.dim())?;
        let delta_arrival = self.smoothing.delta_at(packet.arrival as f64);
        self.core.consume(
            packet.origin,
            packet.arrival,
            estimate,
            Some(delta),
            Some(delta_arrival),
        )
    }

    fn base_point(&self) -> &[f64] {
        self.core.base.current()
    }

    fn finish(&mut self) -> PlayerReport {
        self.core.report()
    }
}

/// Adaptive skipping wrapper.
///
/// Maintains a tracking set of rounds awaiting feedback and a cumulative
/// count `D_t` (its own total modified delay so far). At the start of round
/// `t`, any tracked `s` with `(t - s)^2 > D_t` is answered preemptively with
/// zero feedback and its eventual true packet is dropped. The inner player
/// therefore sees a valid delayed problem with smaller delays and zero
/// losses on skipped rounds. The threshold uses exact integer comparison,
/// and tracked rounds are scanned in ascending order.
pub struct SkipWrapper<P: DelayedPlayer> {
    inner: P,
    tracking: BTreeSet<usize>,
    cumulative: u64,
    cumulative_log: Vec<u64>,
    skipped: Vec<usize>,
    modified_delays: Vec<usize>,
    round: usize,
}

impl<P: DelayedPlayer> SkipWrapper<P> {
    pub fn new(inner: P) -> Self {
        SkipWrapper {
            inner,
            tracking: BTreeSet::new(),
            cumulative: 0,
            cumulative_log: Vec::new(),
            skipped: Vec::new(),
            modified_delays: Vec::new(),
            round: 0,
        }
    }

    fn zero_payload(&self) -> Payload {
        match self.inner.feedback_mode() {
            FeedbackMode::Gradient => Payload::Gradient(vec![0.0; self.inner.dim()]),
            FeedbackMode::Value => Payload::Value(0.0),
            FeedbackMode::TwoValues => Payload::TwoValues(0.0, 0.0),
        }
    }
}

impl<P: DelayedPlayer> DelayedPlayer for SkipWrapper<P> {
    fn feedback_mode(&self) -> FeedbackMode {
        self.inner.feedback_mode()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn predict(&mut self, t: usize) -> Result<Prediction, WrapperError> {
        if t != self.round + 1 {
            return Err(WrapperError::RoundOrder {
                expected: self.round + 1,
                got: t,
            });
        }
        self.round = t;
        self.cumulative += self.tracking.len() as u64;
        self.cumulative_log.push(self.cumulative);
        self.modified_delays.push(0);
        let stale: Vec<usize> = self
            .tracking
            .iter()
            .copied()
            .filter(|&s| {
                let gap = (t - s) as u64;
                gap * gap > self.cumulative
            })
            .collect();
        for s in stale {
            self.inner.receive(FeedbackPacket {
                origin: s,
                arrival: t,
                payload: self.zero_payload(),
            })?;
            self.tracking.remove(&s);
            self.skipped.push(s);
            self.modified_delays[s - 1] = t - s;
        }
        let prediction = self.inner.predict(t)?;
        self.tracking.insert(t);
        Ok(prediction)
    }

    fn receive(&mut self, packet: FeedbackPacket) -> Result<(), WrapperError> {
        if packet.origin == 0 || packet.origin > self.round {
            return Err(WrapperError::UnknownRound(packet.origin));
        }
        if !self.tracking.contains(&packet.origin) {
            // Already answered, either truly or by a preemptive zero packet.
            return Ok(());
        }
        let (origin, arrival) = (packet.origin, packet.arrival);
        self.inner.receive(packet)?;
        self.tracking.remove(&origin);
        self.modified_delays[origin - 1] = arrival - origin;
        Ok(())
    }

    fn base_point(&self) -> &[f64] {
        self.inner.base_point()
    }

    fn finish(&mut self) -> PlayerReport {
        let mut report = self.inner.finish();
        report.skip = Some(SkipReport {
            skipped: std::mem::take(&mut self.skipped),
            modified_total: self.modified_delays.iter().sum(),
            modified_delays: std::mem::take(&mut self.modified_delays),
            cumulative: std::mem::take(&mut self.cumulative_log),
        });
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::base_olo::lr_general;
    use crate::losses::LossFamily;
    use crate::rng::{substream, tag};
    use crate::timeline::{profile, realize, DelaySchedule};

    fn ball(k: usize, radius: f64) -> Domain {
        Domain::ball_origin(k, radius).unwrap()
    }

    fn general_schedule(domain: &Domain) -> RateSchedule {
        RateSchedule::General {
            diameter: domain.diameter(),
            grad_bound: 1.0,
        }
    }

    /// Drives a first-order player over a schedule, delivering gradients of
    /// an explicit linear family.
    fn drive_first_order(
        player: &mut dyn DelayedPlayer,
        schedule: &DelaySchedule,
        family: &LossFamily,
    ) -> Vec<Vec<f64>> {
        let horizon = schedule.horizon();
        let mut arrivals: Vec<Vec<usize>> = vec![Vec::new(); horizon + 1];
        for t in 1..=horizon {
            arrivals[t + schedule.delay(t)].push(t);
        }
        let mut played = Vec::new();
        for t in 1..=horizon {
            let Prediction::Point(x) = player.predict(t).unwrap() else {
                panic!("first-order players emit single points")
            };
            played.push(x);
            for &s in &arrivals[t] {
                let g = family.grad(s, &played[s - 1]).unwrap();
                player
                    .receive(FeedbackPacket {
                        origin: s,
                        arrival: t,
                        payload: Payload::Gradient(g),
                    })
                    .unwrap();
            }
        }
        played
    }

    fn random_linear_family(domain: &Domain, horizon: usize, seed: u64) -> LossFamily {
        let mut rng = substream(seed, tag::TEST, 0);
        let k = domain.dim();
        let vectors = (0..horizon)
            .map(|_| {
                let u = sample_sphere(&mut rng, k);
                crate::linalg::scale(&u, rng.random_range(0.1..1.0))
            })
            .collect();
        LossFamily::explicit_linear(domain.clone(), vectors, Some((1.0, domain.circumscribed_radius()))).unwrap()
    }

    #[test]
    fn zero_delays_reduce_to_the_bare_learner() {
        let domain = ball(2, 1.0);
        let horizon = 40;
        let family = random_linear_family(&domain, horizon, 1);
        let schedule = DelaySchedule::new(vec![0; horizon]).unwrap();
        let mut player = FirstOrderPlayer::new(
            LearnerKind::Pftrl,
            domain.clone(),
            general_schedule(&domain),
            false,
        )
        .unwrap();
        let played = drive_first_order(&mut player, &schedule, &family);

        // Bare learner on the same gradient stream with the same rates.
        let mut bare = BaseLearner::new(LearnerKind::Pftrl, domain.clone(), None).unwrap();
        let mut expected = Vec::new();
        for n in 1..=horizon {
            expected.push(bare.current().to_vec());
            let g = family.grad(n, bare.current()).unwrap();
            let eta = lr_general(n, 0, domain.diameter(), 1.0);
            bare.step(
                &BaseUpdatePacket {
                    c: g,
                    lag: 0,
                    outstanding: 0,
                },
                eta,
            )
            .unwrap();
        }
        assert_eq!(played, expected);
    }

    #[test]
    fn worked_example_consumes_gradients_in_observation_order() {
        let domain = ball(2, 1.0);
        let schedule = DelaySchedule::new(vec![4, 2, 0, 0, 0]).unwrap();
        let family = random_linear_family(&domain, 5, 2);
        let mut player = FirstOrderPlayer::new(
            LearnerKind::Omd,
            domain.clone(),
            general_schedule(&domain),
            false,
        )
        .unwrap();
        drive_first_order(&mut player, &schedule, &family);
        let report = player.finish();
        let origins: Vec<usize> = report.updates.iter().map(|u| u.origin).collect();
        assert_eq!(origins, vec![3, 2, 4, 1, 5]);
    }

    #[test]
    fn forwarded_duals_match_the_offline_profile() {
        let mut rng = substream(7, tag::TEST, 0);
        for _ in 0..20 {
            let horizon = 50;
            let delays: Vec<usize> = (0..horizon)
                .map(|i| rng.random_range(0..=(horizon - 1 - i)))
                .collect();
            let schedule = DelaySchedule::new(delays).unwrap();
            let domain = ball(3, 1.0);
            let family = random_linear_family(&domain, horizon, rng.random());
            let mut player = FirstOrderPlayer::new(
                LearnerKind::Pftrl,
                domain.clone(),
                general_schedule(&domain),
                false,
            )
            .unwrap();
            drive_first_order(&mut player, &schedule, &family);
            let report = player.finish();
            let p = profile(&realize(&schedule));
            for (n, upd) in report.updates.iter().enumerate() {
                assert_eq!(upd.origin - 1, p.rho[n]);
                assert_eq!(upd.lag, p.dual_delay[p.rho[n]], "update {n}");
                assert_eq!(upd.outstanding, p.dual_backlog[p.rho[n]], "update {n}");
            }
            // The forwarded outstanding counts are consistent with the
            // forwarded lags: nu_n = #{m : m - lag_m <= n < m}.
            let lags: Vec<usize> = report.updates.iter().map(|u| u.lag).collect();
            for n in 1..=lags.len() {
                let nu = (1..=lags.len())
                    .filter(|&m| m > n && m - lags[m - 1] <= n)
                    .count();
                assert_eq!(report.updates[n - 1].outstanding, nu);
            }
        }
    }

    #[test]
    fn duplicate_and_unknown_feedback_are_rejected() {
        let domain = ball(1, 1.0);
        let mut player = FirstOrderPlayer::new(
            LearnerKind::Omd,
            domain.clone(),
            general_schedule(&domain),
            false,
        )
        .unwrap();
        player.predict(1).unwrap();
        assert!(matches!(
            player.predict(3),
            Err(WrapperError::RoundOrder { expected: 2, got: 3 })
        ));
        let packet = |origin| FeedbackPacket {
            origin,
            arrival: 1,
            payload: Payload::Gradient(vec![0.5]),
        };
        player.receive(packet(1)).unwrap();
        assert!(matches!(
            player.receive(packet(1)),
            Err(WrapperError::DuplicateFeedback(1))
        ));
        assert!(matches!(
            player.receive(packet(9)),
            Err(WrapperError::UnknownRound(9))
        ));
        assert!(matches!(
            player.receive(FeedbackPacket {
                origin: 1,
                arrival: 1,
                payload: Payload::Value(0.0),
            }),
            Err(WrapperError::WrongPayload { .. })
        ));
    }

    #[test]
    fn bandit_full_shrink_plays_on_the_inscribed_sphere() {
        let domain = ball(3, 0.8);
        let r = domain.inscribed_radius();
        let mut player = BanditPlayer::new(
            LearnerKind::Omd,
            domain.clone(),
            RateSchedule::Fixed { eta: 0.1 },
            SmoothingSchedule::Fixed { delta: r },
            5,
            false,
        )
        .unwrap();
        let Prediction::Point(x) = player.predict(1).unwrap() else {
            panic!()
        };
        assert!((crate::linalg::norm(&x) - r).abs() <= 1e-12);
    }

    #[test]
    fn bandit_zero_losses_keep_omd_still() {
        let domain = ball(2, 1.0);
        let mut player = BanditPlayer::new(
            LearnerKind::Omd,
            domain.clone(),
            RateSchedule::Fixed { eta: 0.5 },
            SmoothingSchedule::Fixed { delta: 0.3 },
            5,
            false,
        )
        .unwrap();
        for t in 1..=30 {
            player.predict(t).unwrap();
            player
                .receive(FeedbackPacket {
                    origin: t,
                    arrival: t,
                    payload: Payload::Value(0.0),
                })
                .unwrap();
            assert_eq!(player.base_point(), &[0.0, 0.0]);
        }
        let report = player.finish();
        assert_eq!(report.ledger.drift_total(), 0.0);
    }

    #[test]
    fn bandit_predictions_stay_feasible() {
        let domains = [ball(2, 1.0), ball(4, 0.5)];
        for domain in domains {
            let nu = 1.0;
            let k = domain.dim();
            let mut player = BanditPlayer::new(
                LearnerKind::Pftrl,
                domain.clone(),
                RateSchedule::Bco {
                    diameter: domain.diameter(),
                    grad_bound: 1.0,
                    nu,
                    k,
                    r: domain.inscribed_radius(),
                },
                SmoothingSchedule::BcoConvex {
                    r: domain.inscribed_radius(),
                    nu,
                    k,
                },
                9,
                false,
            )
            .unwrap();
            let mut rng = substream(13, tag::TEST, 0);
            for t in 1..=10_000usize {
                let Prediction::Point(x) = player.predict(t).unwrap() else {
                    panic!()
                };
                assert!(domain.contains(&x, 1e-9), "round {t}");
                player
                    .receive(FeedbackPacket {
                        origin: t,
                        arrival: t,
                        payload: Payload::Value(rng.random_range(-1.0..1.0)),
                    })
                    .unwrap();
            }
        }
    }

    #[test]
    fn two_point_pair_is_symmetric_and_feasible() {
        let domain = ball(3, 1.0);
        let mut player = TwoPointPlayer::new(
            LearnerKind::Pftrl,
            domain.clone(),
            RateSchedule::TwoPoint {
                diameter: domain.diameter(),
                grad_bound: 1.0,
                k: 3,
            },
            SmoothingSchedule::TwoPointConvex {
                r: domain.inscribed_radius(),
            },
            11,
            false,
        )
        .unwrap();
        let mut rng = substream(14, tag::TEST, 0);
        for t in 1..=10_000usize {
            let Prediction::Pair(plus, minus) = player.predict(t).unwrap() else {
                panic!()
            };
            assert!(domain.contains(&plus, 1e-9));
            assert!(domain.contains(&minus, 1e-9));
            let delta = SmoothingSchedule::TwoPointConvex {
                r: domain.inscribed_radius(),
            }
            .delta_at(t as f64);
            let factor = 1.0 - delta / domain.inscribed_radius();
            let base = player.base_point();
            for i in 0..3 {
                let mid = (plus[i] + minus[i]) / 2.0;
                assert!((mid - factor * base[i]).abs() <= 1e-12);
            }
            player
                .receive(FeedbackPacket {
                    origin: t,
                    arrival: t,
                    payload: Payload::TwoValues(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ),
                })
                .unwrap();
        }
    }

    #[test]
    fn two_point_estimate_of_linear_losses_is_a_projection() {
        let domain = ball(2, 1.0);
        let a = vec![0.3, -0.4];
        let family =
            LossFamily::explicit_linear(domain.clone(), vec![a.clone(); 5], None).unwrap();
        let mut player = TwoPointPlayer::new(
            LearnerKind::Omd,
            domain.clone(),
            RateSchedule::Fixed { eta: 0.2 },
            SmoothingSchedule::Fixed { delta: 0.25 },
            3,
            true,
        )
        .unwrap();
        for t in 1..=5usize {
            let Prediction::Pair(plus, minus) = player.predict(t).unwrap() else {
                panic!()
            };
            player
                .receive(FeedbackPacket {
                    origin: t,
                    arrival: t,
                    payload: Payload::TwoValues(
                        family.value(t, &plus).unwrap(),
                        family.value(t, &minus).unwrap(),
                    ),
                })
                .unwrap();
        }
        let report = player.finish();
        let detail = report.ledger.detail().unwrap();
        let k = 2.0;
        for norm_c in &detail.c_norms {
            assert!(*norm_c <= k * crate::linalg::norm(&a) + 1e-12);
        }
    }

    #[test]
    fn steadiness_base_point_changes_only_on_arrivals() {
        let domain = ball(2, 1.0);
        let horizon = 60;
        let mut rng = substream(15, tag::TEST, 0);
        let delays: Vec<usize> = (0..horizon)
            .map(|i| rng.random_range(0..=(horizon - 1 - i).min(11)))
            .collect();
        let schedule = DelaySchedule::new(delays).unwrap();
        let family = random_linear_family(&domain, horizon, 3);
        let mut arrivals: Vec<Vec<usize>> = vec![Vec::new(); horizon + 1];
        for t in 1..=horizon {
            arrivals[t + schedule.delay(t)].push(t);
        }
        let mut player = FirstOrderPlayer::new(
            LearnerKind::Pftrl,
            domain.clone(),
            general_schedule(&domain),
            false,
        )
        .unwrap();
        let mut played: Vec<Vec<f64>> = Vec::new();
        let mut base_before = player.base_point().to_vec();
        for t in 1..=horizon {
            let Prediction::Point(x) = player.predict(t).unwrap() else {
                panic!()
            };
            assert_eq!(
                x, base_before,
                "prediction must equal the base point from the previous round"
            );
            played.push(x);
            for &s in &arrivals[t] {
                let g = family.grad(s, &played[s - 1]).unwrap();
                player
                    .receive(FeedbackPacket {
                        origin: s,
                        arrival: t,
                        payload: Payload::Gradient(g),
                    })
                    .unwrap();
            }
            if arrivals[t].is_empty() {
                assert_eq!(player.base_point(), base_before.as_slice());
            }
            base_before = player.base_point().to_vec();
        }
    }

    #[test]
    fn skipping_with_zero_delays_is_inert() {
        let domain = ball(1, 1.0);
        let inner = FirstOrderPlayer::new(
            LearnerKind::Omd,
            domain.clone(),
            general_schedule(&domain),
            false,
        )
        .unwrap();
        let mut player = SkipWrapper::new(inner);
        for t in 1..=20usize {
            player.predict(t).unwrap();
            player
                .receive(FeedbackPacket {
                    origin: t,
                    arrival: t,
                    payload: Payload::Gradient(vec![0.1]),
                })
                .unwrap();
        }
        let report = player.finish();
        let skip = report.skip.unwrap();
        assert!(skip.skipped.is_empty());
        assert!(skip.modified_delays.iter().all(|&d| d == 0));
    }

    #[test]
    fn skipping_hand_simulation_single_spike() {
        // T = 12, d_1 = 10, rest immediate: the spike is skipped at round 3
        // where D_3 = 2 and the gap 2 exceeds sqrt(2).
        let horizon = 12;
        let mut delays = vec![0; horizon];
        delays[0] = 10;
        let schedule = DelaySchedule::new(delays).unwrap();
        let domain = ball(1, 1.0);
        let family = random_linear_family(&domain, horizon, 4);
        let inner = FirstOrderPlayer::new(
            LearnerKind::Omd,
            domain.clone(),
            general_schedule(&domain),
            false,
        )
        .unwrap();
        let mut player = SkipWrapper::new(inner);
        drive_first_order(&mut player, &schedule, &family);
        let report = player.finish();
        let skip = report.skip.unwrap();
        assert_eq!(skip.skipped, vec![1]);
        assert_eq!(skip.modified_delays[0], 2);
        assert_eq!(skip.cumulative[2], 2);
        assert_eq!(skip.modified_total, 2);
        assert!(skip.skipped.len() * skip.skipped.len() <= 4 * skip.modified_total);
        // The inner player consumed exactly one packet per round.
        assert_eq!(report.updates.len(), horizon);
    }

    fn check_skip_invariants(schedule: &DelaySchedule, skip: &SkipReport) {
        let total = skip.modified_total;
        let q = skip.skipped.len();
        assert!(q * q <= 4 * total, "|Q*|^2 = {} vs 4 d'_tot = {}", q * q, 4 * total);
        for t in 1..=schedule.horizon() {
            let d_mod = skip.modified_delays[t - 1];
            assert!(d_mod <= schedule.delay(t));
            if d_mod >= 1 {
                // Not removed before its forwarding round u = t + d_mod:
                // (d_mod - 1)^2 <= D_{u-1}.
                let u = t + d_mod;
                if u >= 2 {
                    let d_cum = skip.cumulative[u - 2];
                    assert!(
                        ((d_mod - 1) as u64).pow(2) <= d_cum,
                        "round {t}: d' = {d_mod}, D = {d_cum}"
                    );
                }
            }
        }
        // Against the checked family of candidate skip sets: the empty set,
        // the realized set, and every top-j set by true delay.
        let mut by_delay: Vec<usize> = (1..=schedule.horizon()).collect();
        by_delay.sort_by_key(|&t| std::cmp::Reverse(schedule.delay(t)));
        let total_true: usize = schedule.delays().iter().sum();
        let mut family_min = (total_true as f64).sqrt();
        let q_star_rest: usize = (1..=schedule.horizon())
            .filter(|t| !skip.skipped.contains(t))
            .map(|t| schedule.delay(t))
            .sum();
        family_min = family_min.min(q as f64 + (q_star_rest as f64).sqrt());
        let mut rest = total_true;
        for (j, &t) in by_delay.iter().enumerate() {
            rest -= schedule.delay(t);
            family_min = family_min.min((j + 1) as f64 + (rest as f64).sqrt());
        }
        let lhs = q as f64 + (total as f64).sqrt();
        assert!(
            lhs <= 3.0 * family_min + 1e-9,
            "skip bound: {lhs} vs 3 * {family_min}"
        );
    }

    #[test]
    fn skipping_invariants_on_a_spike_instance() {
        let horizon = 400usize;
        let head = (horizon as f64).sqrt().floor() as usize;
        let delays: Vec<usize> = (1..=horizon)
            .map(|t| if t <= head { horizon - t } else { 0 })
            .collect();
        let schedule = DelaySchedule::new(delays).unwrap();
        let domain = ball(2, 1.0);
        let family = random_linear_family(&domain, horizon, 6);
        let inner = FirstOrderPlayer::new(
            LearnerKind::Pftrl,
            domain.clone(),
            general_schedule(&domain),
            false,
        )
        .unwrap();
        let mut player = SkipWrapper::new(inner);
        drive_first_order(&mut player, &schedule, &family);
        let report = player.finish();
        let skip = report.skip.unwrap();
        assert!(!skip.skipped.is_empty());
        check_skip_invariants(&schedule, &skip);
        assert_eq!(report.updates.len(), horizon, "one packet per round");
    }

    #[test]
    fn skipping_invariants_on_random_schedules() {
        let mut rng = substream(16, tag::TEST, 0);
        for trial in 0..20 {
            let horizon = rng.random_range(20..=120usize);
            let delays: Vec<usize> = (0..horizon)
                .map(|i| {
                    let cap = horizon - 1 - i;
                    if rng.random_range(0..10) == 0 {
                        cap.min(rng.random_range(0..horizon))
                    } else {
                        cap.min(rng.random_range(0..4))
                    }
                })
                .collect();
            let schedule = DelaySchedule::new(delays).unwrap();
            let domain = ball(1, 1.0);
            let family = random_linear_family(&domain, horizon, trial);
            let inner = FirstOrderPlayer::new(
                LearnerKind::Omd,
                domain.clone(),
                general_schedule(&domain),
                false,
            )
            .unwrap();
            let mut player = SkipWrapper::new(inner);
            drive_first_order(&mut player, &schedule, &family);
            let report = player.finish();
            check_skip_invariants(&schedule, &report.skip.unwrap());
        }
    }

    #[test]
    fn skipper_rejects_round_regressions() {
        let domain = ball(1, 1.0);
        let inner = FirstOrderPlayer::new(
            LearnerKind::Omd,
            domain.clone(),
            general_schedule(&domain),
            false,
        )
        .unwrap();
        let mut player = SkipWrapper::new(inner);
        player.predict(1).unwrap();
        assert!(matches!(
            player.predict(1),
            Err(WrapperError::RoundOrder { expected: 2, got: 1 })
        ));
    }
}
