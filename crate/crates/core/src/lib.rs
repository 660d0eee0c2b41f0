//! Online convex optimization with delayed feedback.
//!
//! The library is organized around a reduction pipeline:
//!
//! - [`timeline`] realizes per-round delay schedules as event orderings and
//!   derives the delay, backlog, dual-delay, and dual-backlog structure,
//!   together with an exact identity verifier.
//! - [`geometry`] provides compact convex domains (balls and boxes) with
//!   closed-form Euclidean projection.
//! - [`losses`] hosts oblivious adversary loss streams with value/gradient
//!   oracles and the offline best-in-hindsight comparator.
//! - [`base_olo`] implements drift-penalized online linear optimization
//!   learners (proximal FTRL and online mirror descent) plus their
//!   delay-adaptive learning-rate schedules.
//! - [`estimators`] covers sphere sampling, smoothed losses, and the one- and
//!   two-point gradient estimators.
//! - [`wrappers`] turns a base learner into a delayed-feedback player
//!   (first-order, bandit, two-point) and adds the adaptive skipping wrapper.
//! - [`harness`] runs episodes, accounts regret against the offline
//!   comparator, sweeps horizons, and fits scaling exponents.

pub mod base_olo;
pub mod estimators;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod rng;
pub mod timeline;
pub mod wrappers;
