//! Experiment configuration: a nested TOML file mapped onto harness setups.
//!
//! See `configs/example.toml` at the repository root for a commented
//! walkthrough of every field. Validation is strict: unknown fields,
//! missing kind-specific parameters, and cross-field inconsistencies are
//! reported with their field paths before anything runs.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use delayed_oco::base_olo::LearnerKind;
use delayed_oco::geometry::Domain;
use delayed_oco::harness::{
    DelayGenerator, DelaySource, EpisodeSetup, PlayerSpec, RateKind, SmoothingKind, WrapperKind,
};
use delayed_oco::losses::{ComparatorOptions, LinearDraw, LossConstants, LossSpec};
use delayed_oco::timeline::DelaySchedule;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field_err<T>(field: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Field {
        field: field.to_string(),
        message: message.into(),
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub loss: LossConfig,
    pub delay: DelayConfig,
    pub player: PlayerConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub comparator: ComparatorConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub kind: String,
    pub dim: usize,
    pub radius: Option<f64>,
    pub center: Option<Vec<f64>>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub inscribed: Option<f64>,
    pub circumscribed: Option<f64>,
    pub diameter: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: String,
    pub scale: Option<f64>,
    pub draw: Option<String>,
    pub walk_step: Option<f64>,
    pub lambda: Option<f64>,
    pub center_shift: Option<Vec<f64>>,
    pub spread: Option<f64>,
    pub b_scale: Option<f64>,
    pub width_frac: Option<f64>,
    /// Declared gradient bound; validated by sampling.
    pub g: Option<f64>,
    /// Declared value bound; validated by sampling.
    pub m: Option<f64>,
    /// Declared smoothness ratio; must equal M / (G r).
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    pub kind: String,
    pub value: Option<usize>,
    pub p: Option<f64>,
    pub delays: Option<Vec<usize>>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerConfig {
    pub wrapper: String,
    #[serde(default)]
    pub skipping: bool,
    pub learner: String,
    pub schedule: String,
    pub eta: Option<f64>,
    pub smoothing: Option<String>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: Option<usize>,
    pub t_grid: Option<Vec<usize>>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparatorConfig {
    pub budget: Option<usize>,
    pub epsilon_scale: Option<f64>,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        ComparatorConfig {
            budget: None,
            epsilon_scale: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub schedules: Option<usize>,
    pub max_horizon: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub inject_fault: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            schedules: None,
            max_horizon: None,
            seed: None,
            inject_fault: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.build_domain()?;
        self.build_loss_spec()?;
        self.build_delay_source()?;
        self.build_player_spec()?;
        if self.run.seeds.is_empty() {
            return field_err("run.seeds", "at least one seed is required");
        }
        if self.run.horizon.is_none() && self.run.t_grid.is_none() {
            return field_err("run", "one of horizon or t_grid is required");
        }
        if let Some(grid) = &self.run.t_grid {
            if grid.is_empty() {
                return field_err("run.t_grid", "must not be empty");
            }
            if grid.iter().any(|&t| t == 0) {
                return field_err("run.t_grid", "horizons must be positive");
            }
        }
        if self.run.horizon == Some(0) {
            return field_err("run.horizon", "must be positive");
        }
        Ok(())
    }

    pub fn build_domain(&self) -> Result<Domain, ConfigError> {
        let d = &self.domain;
        let base = match d.kind.as_str() {
            "ball" => {
                let radius = match d.radius {
                    Some(r) => r,
                    None => return field_err("domain.radius", "required for kind \"ball\""),
                };
                if d.lo.is_some() || d.hi.is_some() {
                    return field_err("domain", "lo/hi are box fields");
                }
                let center = d.center.clone().unwrap_or_else(|| vec![0.0; d.dim]);
                if center.len() != d.dim {
                    return field_err("domain.center", "dimension mismatch");
                }
                Domain::ball(center, radius)
                    .map_err(|e| ConfigError::Field {
                        field: "domain".into(),
                        message: e.to_string(),
                    })?
            }
            "box" => {
                let (lo, hi) = match (&d.lo, &d.hi) {
                    (Some(lo), Some(hi)) => (lo.clone(), hi.clone()),
                    _ => return field_err("domain", "box needs lo and hi"),
                };
                if lo.len() != d.dim || hi.len() != d.dim {
                    return field_err("domain", "lo/hi dimension mismatch");
                }
                let (r, big_r) = match (d.inscribed, d.circumscribed) {
                    (Some(r), Some(big_r)) => (r, big_r),
                    _ => {
                        return field_err(
                            "domain",
                            "box needs declared inscribed and circumscribed radii",
                        )
                    }
                };
                Domain::box_domain(lo, hi, r, big_r).map_err(|e| ConfigError::Field {
                    field: "domain".into(),
                    message: e.to_string(),
                })?
            }
            other => return field_err("domain.kind", format!("unknown kind {other:?}")),
        };
        // Optional loose overrides for balls (boxes already declared theirs).
        if d.kind == "ball" && (d.inscribed.is_some() || d.circumscribed.is_some() || d.diameter.is_some())
        {
            return base
                .with_loose_metadata(d.diameter, d.inscribed, d.circumscribed)
                .map_err(|e| ConfigError::Field {
                    field: "domain".into(),
                    message: e.to_string(),
                });
        }
        Ok(base)
    }

    pub fn build_loss_spec(&self) -> Result<LossSpec, ConfigError> {
        let l = &self.loss;
        match l.kind.as_str() {
            "linear" => {
                let scale = match l.scale {
                    Some(s) if s >= 0.0 => s,
                    Some(s) => return field_err("loss.scale", format!("must be >= 0, got {s}")),
                    None => return field_err("loss.scale", "required for kind \"linear\""),
                };
                let draw = match l.draw.as_deref() {
                    None | Some("iid") => LinearDraw::Iid,
                    Some("walk") => LinearDraw::Walk {
                        step: l.walk_step.unwrap_or(0.05),
                    },
                    Some(other) => {
                        return field_err("loss.draw", format!("unknown draw {other:?}"))
                    }
                };
                Ok(LossSpec::Linear { scale, draw })
            }
            "quadratic" => {
                let lambda = match l.lambda {
                    Some(v) if v > 0.0 => v,
                    Some(v) => return field_err("loss.lambda", format!("must be > 0, got {v}")),
                    None => return field_err("loss.lambda", "required for kind \"quadratic\""),
                };
                let center_shift = l
                    .center_shift
                    .clone()
                    .unwrap_or_else(|| vec![0.0; self.domain.dim]);
                if center_shift.len() != self.domain.dim {
                    return field_err("loss.center_shift", "dimension mismatch");
                }
                Ok(LossSpec::Quadratic {
                    lambda,
                    center_shift,
                    spread: l.spread.unwrap_or(0.0),
                    b_scale: l.b_scale.unwrap_or(0.0),
                })
            }
            "smoothed_piecewise" => {
                let scale = match l.scale {
                    Some(s) if s > 0.0 => s,
                    _ => {
                        return field_err(
                            "loss.scale",
                            "positive scale required for kind \"smoothed_piecewise\"",
                        )
                    }
                };
                Ok(LossSpec::SmoothedPiecewise {
                    scale,
                    width_frac: l.width_frac.unwrap_or(1e-3),
                })
            }
            other => field_err("loss.kind", format!("unknown kind {other:?}")),
        }
    }

    pub fn declared_constants(&self) -> Result<Option<LossConstants>, ConfigError> {
        match (self.loss.g, self.loss.m) {
            (None, None) => Ok(None),
            (Some(g), Some(m)) => Ok(Some(LossConstants {
                g,
                m,
                lambda: self.loss.lambda.unwrap_or(0.0),
            })),
            _ => field_err("loss", "declare g and m together or not at all"),
        }
    }

    pub fn build_delay_source(&self) -> Result<DelaySource, ConfigError> {
        let d = &self.delay;
        let source = match d.kind.as_str() {
            "zero" => DelaySource::Generated(DelayGenerator::Zero),
            "constant" => match d.value {
                Some(v) => DelaySource::Generated(DelayGenerator::Constant { delay: v }),
                None => return field_err("delay.value", "required for kind \"constant\""),
            },
            "uniform" => match d.value {
                Some(v) => DelaySource::Generated(DelayGenerator::Uniform { max_delay: v }),
                None => return field_err("delay.value", "required for kind \"uniform\""),
            },
            "spike" => DelaySource::Generated(DelayGenerator::Spike),
            "geometric" => match d.p {
                Some(p) if p > 0.0 && p < 1.0 => {
                    DelaySource::Generated(DelayGenerator::Geometric { p })
                }
                Some(p) => return field_err("delay.p", format!("must lie in (0, 1), got {p}")),
                None => return field_err("delay.p", "required for kind \"geometric\""),
            },
            "explicit" => match &d.delays {
                Some(delays) => DelaySource::Explicit(
                    DelaySchedule::new(delays.clone()).map_err(|e| ConfigError::Field {
                        field: "delay.delays".into(),
                        message: e.to_string(),
                    })?,
                ),
                None => return field_err("delay.delays", "required for kind \"explicit\""),
            },
            "csv" => match &d.path {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                            path: path.clone(),
                            source,
                        })?;
                    DelaySource::Explicit(DelaySchedule::from_csv(&text).map_err(|e| {
                        ConfigError::Field {
                            field: "delay.path".into(),
                            message: e.to_string(),
                        }
                    })?)
                }
                None => return field_err("delay.path", "required for kind \"csv\""),
            },
            other => return field_err("delay.kind", format!("unknown kind {other:?}")),
        };
        Ok(source)
    }

    pub fn build_player_spec(&self) -> Result<PlayerSpec, ConfigError> {
        let p = &self.player;
        let wrapper = match p.wrapper.as_str() {
            "oco" => WrapperKind::FirstOrder,
            "bco" => WrapperKind::Bandit,
            "two_point" => WrapperKind::TwoPoint,
            other => return field_err("player.wrapper", format!("unknown wrapper {other:?}")),
        };
        let learner = match p.learner.as_str() {
            "pftrl" => LearnerKind::Pftrl,
            "omd" => LearnerKind::Omd,
            other => return field_err("player.learner", format!("unknown learner {other:?}")),
        };
        let rate = match p.schedule.as_str() {
            "general" => RateKind::General,
            "strongly_convex" => {
                if self.loss.lambda.unwrap_or(0.0) <= 0.0 {
                    return field_err(
                        "player.schedule",
                        "strongly_convex requires loss.lambda > 0",
                    );
                }
                RateKind::StronglyConvex
            }
            "bco" => RateKind::Bco,
            "two_point" => RateKind::TwoPoint,
            "fixed" => match p.eta {
                Some(eta) if eta > 0.0 => RateKind::Fixed(eta),
                _ => return field_err("player.eta", "positive eta required for fixed schedule"),
            },
            other => return field_err("player.schedule", format!("unknown schedule {other:?}")),
        };
        let smoothing = match (&p.smoothing, wrapper) {
            (None, WrapperKind::FirstOrder) => None,
            (None, _) => {
                return field_err("player.smoothing", "required for bandit wrappers")
            }
            (Some(_), WrapperKind::FirstOrder) => {
                return field_err("player.smoothing", "first-order play does not smooth")
            }
            (Some(kind), _) => Some(match kind.as_str() {
                "bco_convex" => SmoothingKind::BcoConvex,
                "bco_strongly" => SmoothingKind::BcoStronglyConvex,
                "twopoint_convex" => SmoothingKind::TwoPointConvex,
                "twopoint_strongly" => SmoothingKind::TwoPointStronglyConvex,
                "fixed" => match p.delta {
                    Some(delta) if delta > 0.0 => SmoothingKind::Fixed(delta),
                    _ => {
                        return field_err(
                            "player.delta",
                            "positive delta required for fixed smoothing",
                        )
                    }
                },
                other => {
                    return field_err("player.smoothing", format!("unknown smoothing {other:?}"))
                }
            }),
        };
        Ok(PlayerSpec {
            wrapper,
            skipping: p.skipping,
            learner,
            rate,
            smoothing,
        })
    }

    pub fn comparator_options(&self) -> ComparatorOptions {
        let defaults = ComparatorOptions::default();
        ComparatorOptions {
            budget: self.comparator.budget.unwrap_or(defaults.budget),
            epsilon_scale: self
                .comparator
                .epsilon_scale
                .unwrap_or(defaults.epsilon_scale),
        }
    }

    /// The single-run horizon: `run.horizon`, else the largest grid entry.
    pub fn single_horizon(&self) -> usize {
        self.run
            .horizon
            .or_else(|| self.run.t_grid.as_ref().and_then(|g| g.iter().max().copied()))
            .expect("validated")
    }

    pub fn t_grid(&self) -> Vec<usize> {
        match &self.run.t_grid {
            Some(grid) => {
                let mut g = grid.clone();
                g.sort_unstable();
                g.dedup();
                g
            }
            None => vec![self.single_horizon()],
        }
    }

    /// Assembles the harness setup for a given horizon.
    pub fn build_setup(&self, audit: bool) -> Result<EpisodeSetup, ConfigError> {
        Ok(EpisodeSetup {
            domain: self.build_domain()?,
            loss: self.build_loss_spec()?,
            declared: self.declared_constants()?,
            delay: self.build_delay_source()?,
            player: self.build_player_spec()?,
            horizon: self.single_horizon(),
            comparator: self.comparator_options(),
            audit,
            diagnostics: false,
            nu_override: self.loss.nu,
        })
    }
}
