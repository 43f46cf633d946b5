use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dde::{dde_step, DelayHistory};
use super::ks::KsSolver;
use super::sweep::Job;
use super::systems::{OdeSystem, VectorField};
use super::{IntegratorConfig, Kind, SystemSpec, Trajectory};
use crate::error::{Error, Result};

/// Any state component above this magnitude aborts generation.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

const MIN_STD: f64 = 1e-12;

/// Evaluates the vector field of an ODE spec at `(state, t)`.
pub fn system_derivative(spec: &SystemSpec, state: &[f64], t: f64) -> Result<Vec<f64>> {
    if spec.kind != Kind::Ode {
        return Err(Error::arg(format!("{spec} is not an ODE")));
    }
    if state.len() != spec.state_dim {
        return Err(Error::arg(format!(
            "state has length {}, {spec} needs {}",
            state.len(),
            spec.state_dim
        )));
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("state contains non-finite values"));
    }
    let sys = OdeSystem::from_spec(spec)?;
    let mut out = vec![0.0; state.len()];
    sys.eval(t, state, &mut out);
    Ok(out)
}

/// Reusable scratch space for classical fourth-order Runge-Kutta steps.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` from `t` to `t + dt` in place.
    pub fn step<F>(&mut self, mut field: F, t: f64, dt: f64, x: &mut [f64]) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = x.len();
        let half = 0.5 * dt;

        field(t, x, &mut self.k1);
        check_stage(&self.k1, t)?;
        for i in 0..n {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        field(t + half, &self.tmp, &mut self.k2);
        check_stage(&self.k2, t + half)?;
        for i in 0..n {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        field(t + half, &self.tmp, &mut self.k3);
        check_stage(&self.k3, t + half)?;
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        field(t + dt, &self.tmp, &mut self.k4);
        check_stage(&self.k4, t + dt)?;

        let sixth = dt / 6.0;
        for i in 0..n {
            x[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

fn check_stage(k: &[f64], t: f64) -> Result<()> {
    if k.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBlowup {
            t,
            context: "non-finite RK4 stage".into(),
        })
    }
}

/// One RK4 step of `field` from `state` at time `t`.
pub fn rk4_step<F>(field: F, state: &[f64], t: f64, dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(dt > 0.0) {
        return Err(Error::arg(format!("dt must be positive, got {dt}")));
    }
    let mut x = state.to_vec();
    Rk4::new(state.len()).step(field, t, dt, &mut x)?;
    Ok(x)
}

/// Integrates `spec` from `x0`, discarding the burn-in and recording
/// `record_steps` rows, one every `record_stride` integration steps.
/// The result is not standardized.
pub fn integrate_trajectory(
    spec: &SystemSpec,
    x0: &[f64],
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<Trajectory> {
    cfg.validate()?;
    if x0.len() != spec.state_dim {
        return Err(Error::arg(format!(
            "initial state has length {}, {spec} needs {}",
            x0.len(),
            spec.state_dim
        )));
    }
    let mut stepper = Stepper::new(spec, x0, cfg.dt)?;
    let mut samples = Array2::zeros((cfg.record_steps, spec.state_dim));
    let mut step = 0usize;
    let fail = |step: usize, reason: String| Error::Generation {
        spec: spec.to_string(),
        step,
        reason,
    };

    let advance = |stepper: &mut Stepper, step: &mut usize| -> Result<()> {
        stepper.advance().map_err(|e| fail(*step, e.to_string()))?;
        *step += 1;
        if let Some(v) = stepper
            .state()
            .iter()
            .find(|v| !v.is_finite() || v.abs() > BLOWUP_THRESHOLD)
        {
            return Err(fail(*step, format!("state component {v} exceeds blowup threshold")));
        }
        Ok(())
    };

    for _ in 0..cfg.burn_in_steps {
        advance(&mut stepper, &mut step)?;
    }
    for mut row in samples.rows_mut() {
        for _ in 0..cfg.record_stride {
            advance(&mut stepper, &mut step)?;
        }
        for (dst, src) in row.iter_mut().zip(stepper.state()) {
            *dst = *src;
        }
    }

    Ok(Trajectory {
        samples,
        dt_effective: cfg.dt_effective(),
        spec: spec.clone(),
        seed,
        standardized: false,
    })
}

enum Stepper {
    Ode {
        sys: OdeSystem,
        rk: Rk4,
        x: Vec<f64>,
        t: f64,
        dt: f64,
    },
    Dde {
        spec: SystemSpec,
        history: DelayHistory,
        x: [f64; 1],
    },
    Pde {
        solver: KsSolver,
        u: Vec<f64>,
    },
}

impl Stepper {
    fn new(spec: &SystemSpec, x0: &[f64], dt: f64) -> Result<Self> {
        Ok(match spec.kind {
            Kind::Ode => Stepper::Ode {
                sys: OdeSystem::from_spec(spec)?,
                rk: Rk4::new(x0.len()),
                x: x0.to_vec(),
                t: 0.0,
                dt,
            },
            Kind::Dde => Stepper::Dde {
                spec: spec.clone(),
                history: DelayHistory::constant(spec, x0[0], dt)?,
                x: [x0[0]],
            },
            Kind::Pde => Stepper::Pde {
                solver: KsSolver::new(spec.state_dim, spec.param("L"), dt)?,
                u: x0.to_vec(),
            },
        })
    }

    fn advance(&mut self) -> Result<()> {
        match self {
            Stepper::Ode { sys, rk, x, t, dt } => {
                let sys = &*sys;
                rk.step(|t, x, dx| sys.eval(t, x, dx), *t, *dt, x)?;
                *t += *dt;
            }
            Stepper::Dde { spec, history, x } => {
                let next = dde_step(spec, history, history.head_time(), history.dt())?;
                history.push(spec, next)?;
                x[0] = next;
            }
            Stepper::Pde { solver, u } => solver.step(u)?,
        }
        Ok(())
    }

    fn state(&self) -> &[f64] {
        match self {
            Stepper::Ode { x, .. } => x,
            Stepper::Dde { x, .. } => x,
            Stepper::Pde { u, .. } => u,
        }
    }
}

/// Per-channel (x - mean) / std with the population standard deviation.
pub fn standardize(traj: &Trajectory) -> Result<Trajectory> {
    let samples = standardize_columns(&traj.samples).map_err(|c| {
        Error::Degenerate(format!(
            "channel {c} of {} (seed {}) is near-constant",
            traj.spec, traj.seed
        ))
    })?;
    Ok(Trajectory {
        samples,
        standardized: true,
        ..traj.clone()
    })
}

/// Standardizes every column, returning the index of the first column whose
/// standard deviation is below the degeneracy floor.
pub(crate) fn standardize_columns(samples: &Array2<f64>) -> std::result::Result<Array2<f64>, usize> {
    let mut out = samples.clone();
    for (c, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let (mean, std) = mean_std(col.iter().copied());
        if !(std > MIN_STD) {
            return Err(c);
        }
        col.mapv_inplace(|v| (v - mean) / std);
    }
    Ok(out)
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        sum += v;
        n += 1;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Runs one generation job: draws the initial condition from the job seed,
/// integrates and standardizes.
pub fn generate(job: &Job) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let x0 = job.spec.family.random_initial_state(&job.spec, &mut rng);
    let raw = integrate_trajectory(&job.spec, &x0, &job.integrator, job.seed)?;
    standardize(&raw)
}
