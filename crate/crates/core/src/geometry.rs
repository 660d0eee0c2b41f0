//! Compact convex domains with closed-form Euclidean projection.
//!
//! Only balls and boxes are supported: both admit exact projections, which
//! keeps every learner update free of iterative subproblems. Each domain
//! carries the radius metadata used throughout the bounds: a diameter upper
//! bound `D` and inscribed/circumscribed radii `r`, `R` about the origin
//! (`r B ⊆ K ⊆ R B`). The metadata is stored at construction, not
//! recomputed, so experiments may declare deliberately loose constants.

use rand::Rng;
use thiserror::Error;

use crate::linalg::{dot, norm, sub};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: domain has dim {expected}, point has dim {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shrink factor {0} outside [0, 1]")]
    InvalidFactor(f64),
    #[error("ball radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("ball must contain the origin strictly inside (|center| = {center_norm}, radius = {radius})")]
    OriginOutsideBall { center_norm: f64, radius: f64 },
    #[error("box must satisfy lo < hi componentwise (violated at coordinate {0})")]
    EmptyBox(usize),
    #[error("declared radii violate 0 < r <= R or the containment r B ⊆ K ⊆ R B: {0}")]
    BadRadii(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainShape {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

/// A compact convex feasible set with projection and radius metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    shape: DomainShape,
    dim: usize,
    diameter: f64,
    inscribed: f64,
    circumscribed: f64,
}

impl Domain {
    /// Ball centered at the origin; the tight metadata has `r = R = radius`.
    pub fn ball_origin(dim: usize, radius: f64) -> Result<Self, GeometryError> {
        Self::ball(vec![0.0; dim], radius)
    }

    /// General ball. The origin must lie strictly inside so that an
    /// inscribed radius about the origin exists.
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        let c = norm(&center);
        if c >= radius {
            return Err(GeometryError::OriginOutsideBall {
                center_norm: c,
                radius,
            });
        }
        Ok(Domain {
            dim: center.len(),
            diameter: 2.0 * radius,
            inscribed: radius - c,
            circumscribed: radius + c,
            shape: DomainShape::Ball { center, radius },
        })
    }

    /// Axis-aligned box with declared inscribed/circumscribed radii.
    ///
    /// The declared radii are validated against the containment
    /// `r B ⊆ K ⊆ R B`, which requires `lo_i <= -r` and `hi_i >= r` in every
    /// coordinate and the farthest corner inside the `R`-ball.
    pub fn box_domain(
        lo: Vec<f64>,
        hi: Vec<f64>,
        inscribed: f64,
        circumscribed: f64,
    ) -> Result<Self, GeometryError> {
        assert_eq!(lo.len(), hi.len(), "box bounds must share a dimension");
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a < b) {
                return Err(GeometryError::EmptyBox(i));
            }
        }
        if !(inscribed > 0.0) || inscribed > circumscribed {
            return Err(GeometryError::BadRadii(format!(
                "r = {inscribed}, R = {circumscribed}"
            )));
        }
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if *a > -inscribed || *b < inscribed {
                return Err(GeometryError::BadRadii(format!(
                    "inscribed ball of radius {inscribed} leaves the box at coordinate {i}"
                )));
            }
        }
        let corner: f64 = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| a.abs().max(b.abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        if corner > circumscribed {
            return Err(GeometryError::BadRadii(format!(
                "farthest corner has norm {corner} > R = {circumscribed}"
            )));
        }
        let diameter = norm(&sub(&hi, &lo));
        Ok(Domain {
            dim: lo.len(),
            diameter,
            inscribed,
            circumscribed,
            shape: DomainShape::Box { lo, hi },
        })
    }

    /// Replaces the stored metadata with looser constants. The diameter may
    /// only grow; `r` may only shrink; `R` may only grow.
    pub fn with_loose_metadata(
        mut self,
        diameter: Option<f64>,
        inscribed: Option<f64>,
        circumscribed: Option<f64>,
    ) -> Result<Self, GeometryError> {
        if let Some(d) = diameter {
            if d < self.diameter {
                return Err(GeometryError::BadRadii(format!(
                    "declared diameter {d} below the tight value {}",
                    self.diameter
                )));
            }
            self.diameter = d;
        }
        if let Some(r) = inscribed {
            if !(r > 0.0) || r > self.inscribed {
                return Err(GeometryError::BadRadii(format!(
                    "declared r = {r} must lie in (0, {}]",
                    self.inscribed
                )));
            }
            self.inscribed = r;
        }
        if let Some(big_r) = circumscribed {
            if big_r < self.circumscribed {
                return Err(GeometryError::BadRadii(format!(
                    "declared R = {big_r} below the tight value {}",
                    self.circumscribed
                )));
            }
            self.circumscribed = big_r;
        }
        Ok(self)
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Diameter upper bound `D`.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Inscribed radius `r` about the origin.
    pub fn inscribed_radius(&self) -> f64 {
        self.inscribed
    }

    /// Circumscribed radius `R` about the origin.
    pub fn circumscribed_radius(&self) -> f64 {
        self.circumscribed
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() != self.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Euclidean projection onto the domain. Exact and idempotent.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_dim(x)?;
        Ok(match &self.shape {
            DomainShape::Ball { center, radius } => {
                let d = crate::linalg::dist(x, center);
                if d <= *radius {
                    x.to_vec()
                } else {
                    let s = radius / d;
                    center
                        .iter()
                        .zip(x)
                        .map(|(c, xi)| c + s * (xi - c))
                        .collect()
                }
            }
            DomainShape::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(xi, (a, b))| xi.clamp(*a, *b))
                .collect(),
        })
    }

    /// Membership test with absolute tolerance on the defining constraints.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim {
            return false;
        }
        match &self.shape {
            DomainShape::Ball { center, radius } => {
                crate::linalg::dist(x, center) <= radius + tol
            }
            DomainShape::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(xi, (a, b))| *xi >= a - tol && *xi <= b + tol),
        }
    }

    /// Scaling toward the origin: `x ↦ factor · x` with `factor = 1 - δ/r`.
    ///
    /// For any `x` in the domain and unit vector `u`, the image satisfies
    /// `factor·x + δ·u ∈ K` whenever `δ = (1 - factor)·r`.
    pub fn shrink(&self, factor: f64, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        if !(0.0..=1.0).contains(&factor) {
            return Err(GeometryError::InvalidFactor(factor));
        }
        self.check_dim(x)?;
        Ok(crate::linalg::scale(x, factor))
    }

    /// Minimizer of the linear objective `⟨a, x⟩` over the domain.
    pub fn linear_minimizer(&self, a: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_dim(a)?;
        Ok(match &self.shape {
            DomainShape::Ball { center, radius } => {
                let n = norm(a);
                if n == 0.0 {
                    center.clone()
                } else {
                    center
                        .iter()
                        .zip(a)
                        .map(|(c, ai)| c - radius * ai / n)
                        .collect()
                }
            }
            DomainShape::Box { lo, hi } => a
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(ai, (l, h))| {
                    if *ai > 0.0 {
                        *l
                    } else if *ai < 0.0 {
                        *h
                    } else {
                        0.0f64.clamp(*l, *h)
                    }
                })
                .collect(),
        })
    }

    /// Draws a point from the domain (uniform for boxes, uniform for
    /// origin-centered balls). Used for sampled validation, not learning.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.shape {
            DomainShape::Ball { center, radius } => {
                let u = crate::estimators::sample_ball(rng, self.dim);
                center.iter().zip(&u).map(|(c, ui)| c + radius * ui).collect()
            }
            DomainShape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| rng.random_range(*a..*b))
                .collect(),
        }
    }

    /// Support value `max_{x∈K} ⟨a, x⟩`; handy for validating declared
    /// bounds on linear losses.
    pub fn support(&self, a: &[f64]) -> Result<f64, GeometryError> {
        let x = self.linear_minimizer(&crate::linalg::scale(a, -1.0))?;
        Ok(dot(a, &x))
    }
}
