//! Delay schedules realized as event orderings, and the delay-structure
//! identities defined on them.
//!
//! A schedule assigns each round `t` a delay `d_t`; feedback for the round-`t`
//! prediction arrives in round `t + d_t`. Placing the `2T` tagged events
//! `Pred(t)` / `Obs(t)` on one timeline induces four integer sequences:
//!
//! - `delay[t]`: predictions issued while `t`'s feedback is outstanding,
//! - `backlog[t]`: earlier predictions still outstanding when `t` is issued,
//! - `dual_delay[t]`: observations arriving while `t`'s feedback is
//!   outstanding,
//! - `dual_backlog[t]`: predictions still outstanding when `t`'s feedback
//!   arrives,
//!
//! plus the observation-ordering permutation `rho` (rounds sorted by arrival)
//! and its inverse `beta`. All four sequences share the same total, the
//! backlog maxima agree, and the duals satisfy exact pointwise relations;
//! [`verify_identities`] checks the whole catalogue and reports
//! counterexample indices on failure.
//!
//! Timestamps are never materialized as real numbers: the canonical
//! realization would place the observation of round `t` at
//! `t + d_t + 1 - 2^{-t}`, which underflows for `t > 50`, so the order is
//! built combinatorially — `Obs(t)` goes right after `Pred(t + d_t)`, ties
//! within an arrival round broken by ascending prediction index. That
//! ordering coincides with the canonical one at every horizon.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TimelineError {
    #[error("round {round}: delay {delay} exceeds remaining horizon {remaining}")]
    DelayPastHorizon {
        round: usize,
        delay: usize,
        remaining: usize,
    },
    #[error("event order is malformed: {0}")]
    MalformedOrder(String),
    #[error("sequence length {got} does not match horizon {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("schedule csv: {0}")]
    Csv(String),
}

/// Per-round delays defining a delayed-feedback problem instance.
///
/// `delays[i]` is the delay of round `i + 1`; rounds are 1-based in all
/// formulas and serialized forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelaySchedule {
    delays: Vec<usize>,
}

impl DelaySchedule {
    /// Validates `0 <= d_t <= T - t`: feedback never arrives after round `T`.
    pub fn new(delays: Vec<usize>) -> Result<Self, TimelineError> {
        let horizon = delays.len();
        for (i, &d) in delays.iter().enumerate() {
            let remaining = horizon - (i + 1);
            if d > remaining {
                return Err(TimelineError::DelayPastHorizon {
                    round: i + 1,
                    delay: d,
                    remaining,
                });
            }
        }
        Ok(DelaySchedule { delays })
    }

    pub fn horizon(&self) -> usize {
        self.delays.len()
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    /// Delay of 1-based round `t`.
    pub fn delay(&self, t: usize) -> usize {
        self.delays[t - 1]
    }

    pub fn total_delay(&self) -> usize {
        self.delays.iter().sum()
    }

    pub fn max_delay(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }

    /// Serializes as CSV with header `t,d` and 1-based rounds.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,d\n");
        for (i, d) in self.delays.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, d));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, TimelineError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "t,d" => {}
            other => {
                return Err(TimelineError::Csv(format!(
                    "expected header 't,d', got {other:?}"
                )))
            }
        }
        let mut delays = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (t_str, d_str) = line.split_once(',').ok_or_else(|| {
                TimelineError::Csv(format!("line {}: missing comma", lineno + 2))
            })?;
            let t: usize = t_str
                .trim()
                .parse()
                .map_err(|e| TimelineError::Csv(format!("line {}: bad round: {e}", lineno + 2)))?;
            if t != delays.len() + 1 {
                return Err(TimelineError::Csv(format!(
                    "line {}: rounds must be contiguous from 1, got {t}",
                    lineno + 2
                )));
            }
            let d: usize = d_str
                .trim()
                .parse()
                .map_err(|e| TimelineError::Csv(format!("line {}: bad delay: {e}", lineno + 2)))?;
            delays.push(d);
        }
        DelaySchedule::new(delays)
    }
}

/// A tagged timeline event; round indices are 0-based internally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Pred(usize),
    Obs(usize),
}

/// Total order over the `2T` events `{Pred(t), Obs(t)}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventOrder {
    horizon: usize,
    events: Vec<Event>,
}

impl EventOrder {
    /// Builds an order from raw events, checking that it is a valid
    /// interleaving: every round predicted once and observed once, prediction
    /// indices increasing, and each observation after its own prediction.
    pub fn from_events(horizon: usize, events: Vec<Event>) -> Result<Self, TimelineError> {
        if events.len() != 2 * horizon {
            return Err(TimelineError::MalformedOrder(format!(
                "expected {} events, got {}",
                2 * horizon,
                events.len()
            )));
        }
        let mut pred_pos = vec![usize::MAX; horizon];
        let mut obs_pos = vec![usize::MAX; horizon];
        let mut next_pred = 0usize;
        for (pos, ev) in events.iter().enumerate() {
            match *ev {
                Event::Pred(t) => {
                    if t >= horizon || pred_pos[t] != usize::MAX {
                        return Err(TimelineError::MalformedOrder(format!(
                            "bad or duplicate prediction for round {}",
                            t + 1
                        )));
                    }
                    if t != next_pred {
                        return Err(TimelineError::MalformedOrder(format!(
                            "predictions out of index order at round {}",
                            t + 1
                        )));
                    }
                    next_pred += 1;
                    pred_pos[t] = pos;
                }
                Event::Obs(t) => {
                    if t >= horizon || obs_pos[t] != usize::MAX {
                        return Err(TimelineError::MalformedOrder(format!(
                            "bad or duplicate observation for round {}",
                            t + 1
                        )));
                    }
                    if pred_pos[t] == usize::MAX {
                        return Err(TimelineError::MalformedOrder(format!(
                            "observation of round {} precedes its prediction",
                            t + 1
                        )));
                    }
                    obs_pos[t] = pos;
                }
            }
        }
        Ok(EventOrder { horizon, events })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }
}

/// Realizes a schedule as its canonical event order.
///
/// Round `a` contributes `Pred(a)` followed by `Obs(s)` for every `s` with
/// `s + d_s = a`, in ascending `s`.
pub fn realize(schedule: &DelaySchedule) -> EventOrder {
    let horizon = schedule.horizon();
    let mut arrivals: Vec<Vec<usize>> = vec![Vec::new(); horizon];
    for (s, &d) in schedule.delays().iter().enumerate() {
        arrivals[s + d].push(s);
    }
    let mut events = Vec::with_capacity(2 * horizon);
    for a in 0..horizon {
        events.push(Event::Pred(a));
        for &s in &arrivals[a] {
            events.push(Event::Obs(s));
        }
    }
    EventOrder { horizon, events }
}

/// The four delay-structure sequences plus the observation-ordering
/// permutation and its inverse, all 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayProfile {
    pub delay: Vec<usize>,
    pub backlog: Vec<usize>,
    pub dual_delay: Vec<usize>,
    pub dual_backlog: Vec<usize>,
    /// `rho[n]` is the round observed n-th.
    pub rho: Vec<usize>,
    /// `beta[t]` is the arrival rank of round `t`; inverse of `rho`.
    pub beta: Vec<usize>,
    pub total_delay: usize,
}

impl DelayProfile {
    pub fn horizon(&self) -> usize {
        self.delay.len()
    }

    pub fn max_backlog(&self) -> usize {
        self.backlog.iter().copied().max().unwrap_or(0)
    }

    /// Applies the observation-ordering: `out[n] = seq[rho[n]]`.
    pub fn observation_reorder<A: Clone>(&self, seq: &[A]) -> Result<Vec<A>, TimelineError> {
        if seq.len() != self.horizon() {
            return Err(TimelineError::LengthMismatch {
                expected: self.horizon(),
                got: seq.len(),
            });
        }
        Ok(self.rho.iter().map(|&t| seq[t].clone()).collect())
    }

    /// Inverse of [`DelayProfile::observation_reorder`]: `out[t] = seq[beta[t]]`.
    pub fn prediction_reorder<A: Clone>(&self, seq: &[A]) -> Result<Vec<A>, TimelineError> {
        if seq.len() != self.horizon() {
            return Err(TimelineError::LengthMismatch {
                expected: self.horizon(),
                got: seq.len(),
            });
        }
        Ok(self.beta.iter().map(|&n| seq[n].clone()).collect())
    }

    /// Recovers the defining schedule.
    pub fn schedule(&self) -> DelaySchedule {
        DelaySchedule {
            delays: self.delay.clone(),
        }
    }
}

/// Computes the profile of an event order by counting the four definitions.
///
/// One pass records event positions together with running prediction and
/// observation counts; each sequence entry is then a difference of two
/// counts, exactly the cardinalities in the definitions.
pub fn profile(order: &EventOrder) -> DelayProfile {
    let horizon = order.horizon;
    // preds_before[p] / obs_before[p]: events of each kind strictly before
    // position p.
    let mut pred_pos = vec![0usize; horizon];
    let mut obs_pos = vec![0usize; horizon];
    let mut preds_before = vec![0usize; 2 * horizon + 1];
    let mut obs_before = vec![0usize; 2 * horizon + 1];
    let mut rho = Vec::with_capacity(horizon);
    let mut preds = 0usize;
    let mut obs = 0usize;
    for (pos, ev) in order.events.iter().enumerate() {
        preds_before[pos] = preds;
        obs_before[pos] = obs;
        match *ev {
            Event::Pred(t) => {
                pred_pos[t] = pos;
                preds += 1;
            }
            Event::Obs(t) => {
                obs_pos[t] = pos;
                rho.push(t);
                obs += 1;
            }
        }
    }
    preds_before[2 * horizon] = preds;
    obs_before[2 * horizon] = obs;

    let mut beta = vec![0usize; horizon];
    for (n, &t) in rho.iter().enumerate() {
        beta[t] = n;
    }

    let mut delay = vec![0usize; horizon];
    let mut backlog = vec![0usize; horizon];
    let mut dual_delay = vec![0usize; horizon];
    let mut dual_backlog = vec![0usize; horizon];
    for t in 0..horizon {
        let pp = pred_pos[t];
        let po = obs_pos[t];
        // Predictions strictly inside (pred, obs): all preds before the
        // observation minus the t + 1 preds at or before pred_pos[t].
        delay[t] = preds_before[po] - (t + 1);
        // Earlier rounds still outstanding at issue time: t predecessors
        // minus those already observed.
        backlog[t] = t - obs_before[pp];
        // Observations strictly inside (pred, obs).
        dual_delay[t] = beta[t] - obs_before[pp];
        // Rounds issued before the arrival and observed after it (excluding
        // t itself).
        dual_backlog[t] = preds_before[po] - beta[t] - 1;
    }
    let total_delay = delay.iter().sum();
    DelayProfile {
        delay,
        backlog,
        dual_delay,
        dual_backlog,
        rho,
        beta,
        total_delay,
    }
}

/// Outcome of a single identity check.
#[derive(Debug, Clone)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: Option<String>,
}

/// Pass/fail per identity, with counterexample indices on failure.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

impl fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "pass" } else { "FAIL" };
            match &c.detail {
                Some(d) => writeln!(f, "{:<24} {status}  ({d})", c.name)?,
                None => writeln!(f, "{:<24} {status}", c.name)?,
            }
        }
        Ok(())
    }
}

fn check(name: &'static str, failure: Option<String>) -> IdentityCheck {
    IdentityCheck {
        name,
        passed: failure.is_none(),
        detail: failure,
    }
}

/// Verifies the full identity catalogue on a profile. Integer identities are
/// exact; the two telescoping diagnostics carry a 1e-9 tolerance.
pub fn verify_identities(p: &DelayProfile) -> IdentityReport {
    let horizon = p.horizon();
    let mut checks = Vec::new();

    // All four sums equal the total delay.
    let sums = [
        ("delay", p.delay.iter().sum::<usize>()),
        ("backlog", p.backlog.iter().sum::<usize>()),
        ("dual_delay", p.dual_delay.iter().sum::<usize>()),
        ("dual_backlog", p.dual_backlog.iter().sum::<usize>()),
    ];
    let failure = sums
        .iter()
        .find(|(_, s)| *s != p.total_delay)
        .map(|(n, s)| format!("sum over {n} is {s}, expected {}", p.total_delay));
    checks.push(check("sum-equalities", failure));

    // Backlog maxima agree; dual-delay max is within a factor two of the
    // delay max.
    let max = |v: &[usize]| v.iter().copied().max().unwrap_or(0);
    let (bmax, dbmax) = (max(&p.backlog), max(&p.dual_backlog));
    let (dmax, ddmax) = (max(&p.delay), max(&p.dual_delay));
    let failure = if bmax != dbmax {
        Some(format!("backlog max {bmax} != dual-backlog max {dbmax}"))
    } else if dmax > 2 * ddmax || ddmax > 2 * dmax {
        Some(format!(
            "dual-delay max {ddmax} outside [{}/2, 2*{}]",
            dmax, dmax
        ))
    } else {
        None
    };
    checks.push(check("max-equalities", failure));

    // dual_delay[t] = backlog[t] + beta(t) - t and
    // dual_backlog[t] = delay[t] + t - beta(t), in 1-based terms; the shift
    // cancels so 0-based indices satisfy the same relation.
    let failure = (0..horizon).find_map(|t| {
        let lhs1 = p.dual_delay[t] as i64;
        let rhs1 = p.backlog[t] as i64 + p.beta[t] as i64 - t as i64;
        let lhs2 = p.dual_backlog[t] as i64;
        let rhs2 = p.delay[t] as i64 + t as i64 - p.beta[t] as i64;
        (lhs1 != rhs1 || lhs2 != rhs2).then(|| format!("round {}", t + 1))
    });
    checks.push(check("pointwise-duals", failure));

    let failure = (0..horizon)
        .find(|&n| p.beta[p.rho[n]] != n)
        .map(|n| format!("rank {n}"));
    checks.push(check("inverse-permutations", failure));

    // Prefix sums of observation-ordered dual delays never exceed those of
    // dual backlogs.
    let mut acc_dd = 0usize;
    let mut acc_db = 0usize;
    let failure = (0..horizon).find_map(|n| {
        acc_dd += p.dual_delay[p.rho[n]];
        acc_db += p.dual_backlog[p.rho[n]];
        (acc_dd > acc_db).then(|| format!("prefix {}: {acc_dd} > {acc_db}", n + 1))
    });
    checks.push(check("prefix-domination", failure));

    // backlog[t+1] <= backlog[t] + 1; observation-ordered dual backlog drops
    // by at most one per step.
    let failure = (0..horizon.saturating_sub(1)).find_map(|i| {
        if p.backlog[i + 1] > p.backlog[i] + 1 {
            return Some(format!("backlog jump at round {}", i + 2));
        }
        let cur = p.dual_backlog[p.rho[i]];
        let next = p.dual_backlog[p.rho[i + 1]];
        (next + 1 < cur).then(|| format!("dual-backlog drop at rank {}", i + 2))
    });
    checks.push(check("increment-bounds", failure));

    // The n-th issued-with-rank prediction lies strictly between the
    // (n - dual_delay - 1)-th and (n - dual_delay)-th arrivals: equivalently
    // the number of observations before it equals n - dual_delay - 1
    // (1-based), and the rank offset is feasible.
    let failure = (0..horizon).find_map(|n| {
        let t = p.rho[n];
        let dd = p.dual_delay[t];
        if dd > n {
            return Some(format!("rank {}: dual delay {dd} exceeds rank", n + 1));
        }
        let obs_before_pred = t as i64 - p.backlog[t] as i64;
        (obs_before_pred != (n - dd) as i64).then(|| format!("rank {}", n + 1))
    });
    checks.push(check("observation-placement", failure));

    // Telescoping diagnostics (tolerance 1e-9 on the bound).
    const TOL: f64 = 1e-9;
    let log_bound = bmax as f64 * (std::f64::consts::E * horizon.max(1) as f64).ln();
    let sum_db: f64 = (0..horizon)
        .map(|n| p.dual_backlog[p.rho[n]] as f64 / (n + 1) as f64)
        .sum();
    let failure = (sum_db > log_bound + TOL)
        .then(|| format!("sum {sum_db} exceeds bound {log_bound}"));
    checks.push(check("telescoped-dual-backlog", failure));

    let sum_dd: f64 = (0..horizon)
        .map(|n| p.dual_delay[p.rho[n]] as f64 / (n + 1) as f64)
        .sum();
    let dd_bound = log_bound.min(2.0 * (p.total_delay as f64).sqrt());
    let failure =
        (sum_dd > dd_bound + TOL).then(|| format!("sum {sum_dd} exceeds bound {dd_bound}"));
    checks.push(check("telescoped-dual-delay", failure));

    IdentityReport { checks }
}
