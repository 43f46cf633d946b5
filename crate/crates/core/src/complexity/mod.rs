//! Complexity annotations: largest Lyapunov exponent, dimension proxy and
//! the weighted composite score.

mod benettin;
mod wolf;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Kind, SystemSpec, Trajectory};
use crate::error::Result;

pub use benettin::{benettin_lambda, benettin_lambda_oracle};
pub use wolf::{autocorrelation, average_mutual_information, select_delay, wolf_lambda, EmbeddingConfig};

/// (λ_max, d, C) for one trajectory. `lambda_max` is `+∞` when the estimate
/// failed; such records are treated as maximally difficult.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScore {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub lambda_max: f64,
    pub dimension: usize,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub composite: f64,
}

impl ComplexityScore {
    pub fn new(lambda_max: f64, dimension: usize, weights: Weights) -> Self {
        ComplexityScore {
            lambda_max,
            dimension,
            composite: composite_score(lambda_max, dimension as f64, weights.lambda, weights.dimension),
        }
    }

    pub fn is_sentinel(&self) -> bool {
        self.lambda_max == f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub lambda: f64,
    pub dimension: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            lambda: 1.0,
            dimension: 0.0,
        }
    }
}

/// C = w1·λ + w2·d
pub fn composite_score(lambda_max: f64, dimension: f64, w1: f64, w2: f64) -> f64 {
    w1 * lambda_max + w2 * dimension
}

/// Degrees-of-freedom proxy: the state dimension for ODEs, the grid size for
/// the PDE, and the observable dimension (1) for the delay equation, whose
/// true phase space is infinite-dimensional.
pub fn attractor_dimension(spec: &SystemSpec) -> usize {
    match spec.kind {
        Kind::Ode | Kind::Pde => spec.state_dim,
        Kind::Dde => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    FixedPoint,
    Periodic,
    Chaotic,
    Unknown,
}

impl Regime {
    /// Exponents within this band of zero count as periodic.
    pub const NEUTRAL_BAND: f64 = 0.05;

    pub fn from_lambda(lambda: f64) -> Self {
        if !lambda.is_finite() {
            Regime::Unknown
        } else if lambda > Self::NEUTRAL_BAND {
            Regime::Chaotic
        } else if lambda < -Self::NEUTRAL_BAND {
            Regime::FixedPoint
        } else {
            Regime::Periodic
        }
    }
}

/// Scores a standardized trajectory from its first channel. A failed estimate
/// yields the `+∞` sentinel instead of an error.
pub fn score_trajectory(traj: &Trajectory, cfg: &EmbeddingConfig, weights: Weights) -> ComplexityScore {
    let series = traj.channel(0);
    let cfg = cfg.with_delay_for(&series);
    let lambda = match wolf_lambda(&series, &cfg, traj.dt_effective) {
        Ok(l) if l.is_finite() => l,
        Ok(_) => f64::INFINITY,
        Err(e) => {
            log::warn!("{} (seed {}): {e}; tagging as maximal difficulty", traj.spec, traj.seed);
            f64::INFINITY
        }
    };
    ComplexityScore::new(lambda, attractor_dimension(&traj.spec), weights)
}

/// Convenience wrapper returning the estimate error instead of the sentinel.
pub fn estimate_lambda(traj: &Trajectory, cfg: &EmbeddingConfig) -> Result<f64> {
    let series = traj.channel(0);
    let cfg = cfg.with_delay_for(&series);
    wolf_lambda(&series, &cfg, traj.dt_effective)
}
