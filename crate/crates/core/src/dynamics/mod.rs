//! Synthetic system zoo and trajectory generation.
//!
//! Seven families are supported: four low-dimensional ODEs (Lorenz-63,
//! Rössler, Duffing, van der Pol), the cyclic Lorenz-96 ODE, the Mackey-Glass
//! delay equation and the Kuramoto-Sivashinsky PDE on a periodic grid. ODEs
//! and the DDE are stepped with fixed-step RK4; the PDE with ETDRK4 on a
//! Fourier discretization.

mod dde;
mod integrate;
mod ks;
mod sweep;
mod systems;

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dde::{dde_step, mackey_glass_rhs, DelayHistory};
pub use integrate::{
    generate, integrate_trajectory, rk4_step, standardize, system_derivative, Rk4, BLOWUP_THRESHOLD,
};
pub(crate) use integrate::mean_std;
pub use ks::{ks_step, KsSolver};
pub use sweep::{sweep_parameters, Job};
pub use systems::{OdeSystem, TangentField, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Lorenz63,
    Lorenz96,
    Rossler,
    Duffing,
    VanDerPol,
    MackeyGlass,
    KuramotoSivashinsky,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kind {
    Ode,
    Dde,
    Pde,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Lorenz63,
        Family::Lorenz96,
        Family::Rossler,
        Family::Duffing,
        Family::VanDerPol,
        Family::MackeyGlass,
        Family::KuramotoSivashinsky,
    ];

    pub fn kind(self) -> Kind {
        match self {
            Family::MackeyGlass => Kind::Dde,
            Family::KuramotoSivashinsky => Kind::Pde,
            _ => Kind::Ode,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Lorenz63 => "lorenz63",
            Family::Lorenz96 => "lorenz96",
            Family::Rossler => "rossler",
            Family::Duffing => "duffing",
            Family::VanDerPol => "van_der_pol",
            Family::MackeyGlass => "mackey_glass",
            Family::KuramotoSivashinsky => "kuramoto_sivashinsky",
        }
    }

    /// Parameters of the vector field with their textbook default values.
    pub fn default_params(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            Family::Lorenz63 => &[("sigma", 10.0), ("rho", 28.0), ("beta", 8.0 / 3.0)],
            Family::Lorenz96 => &[("F", 8.0), ("N", 40.0)],
            Family::Rossler => &[("a", 0.2), ("b", 0.2), ("c", 5.7)],
            Family::Duffing => &[
                ("delta", 0.3),
                ("alpha", -1.0),
                ("beta", 1.0),
                ("gamma", 0.5),
                ("omega", 1.2),
            ],
            Family::VanDerPol => &[("mu", 1.0)],
            Family::MackeyGlass => &[("beta", 0.2), ("gamma", 0.1), ("n", 10.0), ("tau", 17.0)],
            Family::KuramotoSivashinsky => &[("L", 22.0), ("N", 64.0)],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    /// Default (dt, stride) pair. Strides put roughly 15-50 recorded rows in
    /// one characteristic oscillation of each family.
    pub fn default_step(self) -> (f64, usize) {
        match self {
            Family::Lorenz63 => (0.01, 5),
            Family::Rossler => (0.01, 25),
            Family::VanDerPol => (0.01, 20),
            Family::Duffing => (0.01, 20),
            Family::Lorenz96 => (0.05, 1),
            Family::MackeyGlass => (0.1, 10),
            Family::KuramotoSivashinsky => (0.25, 1),
        }
    }

    /// Draws a generic initial condition (for the DDE: the constant history
    /// level) for a spec of this family.
    pub fn random_initial_state<R: Rng>(self, spec: &SystemSpec, rng: &mut R) -> Vec<f64> {
        match self {
            Family::Lorenz63 => vec![
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(5.0..35.0),
            ],
            Family::Rossler => vec![
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(0.0..1.0),
            ],
            Family::VanDerPol => vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
            Family::Duffing => vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            Family::Lorenz96 => {
                let f = spec.param("F");
                (0..spec.state_dim)
                    .map(|_| f + rng.random_range(-1.0..1.0))
                    .collect()
            }
            Family::MackeyGlass => vec![rng.random_range(0.5..1.5)],
            Family::KuramotoSivashinsky => {
                let n = spec.state_dim;
                let l = spec.param("L");
                let modes: Vec<(f64, f64)> = (0..4)
                    .map(|_| {
                        (
                            rng.random_range(-1.0..1.0),
                            rng.random_range(0.0..std::f64::consts::TAU),
                        )
                    })
                    .collect();
                (0..n)
                    .map(|i| {
                        let x = l * i as f64 / n as f64;
                        modes
                            .iter()
                            .enumerate()
                            .map(|(k, (a, phi))| {
                                let q = std::f64::consts::TAU * (k + 1) as f64 / l;
                                a * (q * x + phi).cos()
                            })
                            .sum()
                    })
                    .collect()
            }
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown system family `{s}`")))
    }
}

/// A parameterized dynamical system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub family: Family,
    pub params: BTreeMap<String, f64>,
    pub kind: Kind,
    pub state_dim: usize,
}

impl SystemSpec {
    /// Builds a spec from the family defaults with `overrides` applied.
    pub fn with_params<'a>(
        family: Family,
        overrides: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self> {
        let mut params = family.default_params();
        for (name, value) in overrides {
            match params.get_mut(name) {
                Some(slot) => *slot = value,
                None => {
                    return Err(Error::arg(format!(
                        "unknown parameter `{name}` for family {family}"
                    )))
                }
            }
        }
        Self::from_params(family, params)
    }

    pub fn new(family: Family) -> Self {
        Self::from_params(family, family.default_params()).expect("family defaults are valid")
    }

    pub fn lorenz63(sigma: f64, rho: f64, beta: f64) -> Result<Self> {
        Self::with_params(
            Family::Lorenz63,
            [("sigma", sigma), ("rho", rho), ("beta", beta)],
        )
    }

    /// Builds and validates a spec from a complete parameter map.
    pub fn from_params(family: Family, params: BTreeMap<String, f64>) -> Result<Self> {
        let required = family.default_params();
        for name in params.keys() {
            if !required.contains_key(name) {
                return Err(Error::arg(format!(
                    "unknown parameter `{name}` for family {family}"
                )));
            }
        }
        for name in required.keys() {
            match params.get(name) {
                None => {
                    return Err(Error::arg(format!(
                        "missing parameter `{name}` for family {family}"
                    )))
                }
                Some(v) if !v.is_finite() => {
                    return Err(Error::arg(format!(
                        "parameter `{name}` of {family} is not finite"
                    )))
                }
                _ => {}
            }
        }
        let state_dim = match family {
            Family::Lorenz63 | Family::Rossler => 3,
            Family::Duffing | Family::VanDerPol => 2,
            Family::MackeyGlass => 1,
            Family::Lorenz96 => {
                let n = integer_param(&params, "N")?;
                if n < 4 {
                    return Err(Error::arg("Lorenz-96 needs N >= 4"));
                }
                n
            }
            Family::KuramotoSivashinsky => {
                let n = integer_param(&params, "N")?;
                if !n.is_power_of_two() || n < 4 {
                    return Err(Error::arg(
                        "Kuramoto-Sivashinsky grid size N must be a power of two >= 4",
                    ));
                }
                if params["L"] <= 0.0 {
                    return Err(Error::arg("domain length L must be positive"));
                }
                n
            }
        };
        if family == Family::MackeyGlass {
            if params["tau"] <= 0.0 {
                return Err(Error::arg("Mackey-Glass delay tau must be positive"));
            }
        }
        Ok(SystemSpec {
            family,
            params,
            kind: family.kind(),
            state_dim,
        })
    }

    /// Re-checks the invariants of a spec that did not come from a constructor
    /// (e.g. one read back from a manifest).
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::from_params(self.family, self.params.clone())?;
        if rebuilt.kind != self.kind || rebuilt.state_dim != self.state_dim {
            return Err(Error::arg(format!(
                "spec {self} has inconsistent kind/state_dim"
            )));
        }
        Ok(())
    }

    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    pub fn default_integrator(&self) -> IntegratorConfig {
        IntegratorConfig::for_family(self.family)
    }
}

fn integer_param(params: &BTreeMap<String, f64>, name: &str) -> Result<usize> {
    let v = params[name];
    if v < 1.0 || v.fract() != 0.0 {
        return Err(Error::arg(format!(
            "parameter `{name}` must be a positive integer, got {v}"
        )));
    }
    Ok(v as usize)
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.family)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub burn_in_steps: usize,
    pub record_steps: usize,
    pub record_stride: usize,
}

impl IntegratorConfig {
    pub const DEFAULT_RECORD_STEPS: usize = 4096;
    pub const DEFAULT_BURN_IN_STEPS: usize = 2000;

    pub fn for_family(family: Family) -> Self {
        let (dt, record_stride) = family.default_step();
        IntegratorConfig {
            dt,
            burn_in_steps: Self::DEFAULT_BURN_IN_STEPS,
            record_steps: Self::DEFAULT_RECORD_STEPS,
            record_stride,
        }
    }

    pub fn dt_effective(&self) -> f64 {
        self.dt * self.record_stride as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::arg(format!("dt must be positive, got {}", self.dt)));
        }
        if self.record_steps == 0 || self.record_stride == 0 {
            return Err(Error::arg("record_steps and record_stride must be positive"));
        }
        Ok(())
    }
}

/// A recorded multichannel time series, `samples` is T rows by C channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Array2<f64>,
    pub dt_effective: f64,
    pub spec: SystemSpec,
    pub seed: u64,
    pub standardized: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples.column(c).to_vec()
    }
}
