use std::collections::VecDeque;

use super::{Family, SystemSpec};
use crate::error::{Error, Result};

/// ẋ = β·x(t−τ)/(1 + x(t−τ)^n) − γ·x(t)
pub fn mackey_glass_rhs(x: f64, delayed: f64, beta: f64, gamma: f64, n: f64) -> f64 {
    beta * delayed / (1.0 + delayed.abs().powf(n)) - gamma * x
}

#[derive(Debug, Clone, Copy)]
struct MgParams {
    beta: f64,
    gamma: f64,
    n: f64,
    tau: f64,
}

impl MgParams {
    fn from_spec(spec: &SystemSpec) -> Result<Self> {
        if spec.family != Family::MackeyGlass {
            return Err(Error::arg(format!("{spec} is not a Mackey-Glass system")));
        }
        Ok(MgParams {
            beta: spec.param("beta"),
            gamma: spec.param("gamma"),
            n: spec.param("n"),
            tau: spec.param("tau"),
        })
    }

    fn rhs(&self, x: f64, delayed: f64) -> f64 {
        mackey_glass_rhs(x, delayed, self.beta, self.gamma, self.n)
    }
}

/// Solution history on a uniform grid `t_k = k·dt`, storing values and
/// slopes so that delayed lookups can use cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct DelayHistory {
    dt: f64,
    /// Value of the solution for all times before the first stored knot.
    prehistory: Option<f64>,
    start_index: i64,
    values: VecDeque<f64>,
    slopes: VecDeque<f64>,
    keep: usize,
}

impl DelayHistory {
    /// History that is constant at `level` for all t ≤ 0.
    pub fn constant(spec: &SystemSpec, level: f64, dt: f64) -> Result<Self> {
        let p = MgParams::from_spec(spec)?;
        check_grid(p.tau, dt)?;
        let mut values = VecDeque::new();
        let mut slopes = VecDeque::new();
        values.push_back(level);
        slopes.push_back(p.rhs(level, level));
        Ok(DelayHistory {
            dt,
            prehistory: Some(level),
            start_index: 0,
            values,
            slopes,
            keep: keep_for(p.tau, dt),
        })
    }

    /// History from sampled values ending at `t = 0` with no prehistory;
    /// slopes are estimated by finite differences.
    pub fn from_samples(spec: &SystemSpec, samples: &[f64], dt: f64) -> Result<Self> {
        let p = MgParams::from_spec(spec)?;
        check_grid(p.tau, dt)?;
        if samples.len() < 2 {
            return Err(Error::arg("history needs at least two samples"));
        }
        let n = samples.len();
        let slopes = (0..n)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                (samples[b] - samples[a]) / ((b - a) as f64 * dt)
            })
            .collect();
        Ok(DelayHistory {
            dt,
            prehistory: None,
            start_index: -(n as i64 - 1),
            values: samples.iter().copied().collect(),
            slopes,
            keep: keep_for(p.tau, dt).max(n),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn head_index(&self) -> i64 {
        self.start_index + self.values.len() as i64 - 1
    }

    pub fn head_time(&self) -> f64 {
        self.head_index() as f64 * self.dt
    }

    pub fn head_value(&self) -> f64 {
        *self.values.back().expect("history is never empty")
    }

    /// Earliest time covered by stored knots (or −∞ with a prehistory).
    pub fn earliest_time(&self) -> f64 {
        match self.prehistory {
            Some(_) => f64::NEG_INFINITY,
            None => self.start_index as f64 * self.dt,
        }
    }

    /// Interpolated value at fractional grid position `pos` (time / dt).
    fn at_position(&self, pos: f64) -> Result<f64> {
        let rel = pos - self.start_index as f64;
        if rel < 0.0 {
            return self.prehistory.ok_or_else(|| {
                Error::arg("delayed lookup precedes the stored history".to_string())
            });
        }
        let last = (self.values.len() - 1) as f64;
        if rel > last + 1e-9 {
            return Err(Error::arg("delayed lookup beyond the history head"));
        }
        let i = (rel.floor() as usize).min(self.values.len() - 1);
        let theta = rel - i as f64;
        if i + 1 >= self.values.len() || theta <= 0.0 {
            return Ok(self.values[i]);
        }
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.dt, self.slopes[i + 1] * self.dt);
        let t2 = theta * theta;
        let t3 = t2 * theta;
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + theta) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1)
    }

    /// Appends the value at the next grid point and drops knots older than
    /// the delay requires.
    pub fn push(&mut self, spec: &SystemSpec, value: f64) -> Result<()> {
        let p = MgParams::from_spec(spec)?;
        let next = (self.head_index() + 1) as f64;
        self.values.push_back(value);
        // placeholder so the lookup below sees a consistent grid
        self.slopes.push_back(0.0);
        let delayed = self.at_position(next - p.tau / self.dt)?;
        *self.slopes.back_mut().unwrap() = p.rhs(value, delayed);
        while self.values.len() > self.keep {
            self.values.pop_front();
            self.slopes.pop_front();
            self.start_index += 1;
            self.prehistory = None;
        }
        Ok(())
    }
}

fn check_grid(tau: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !(tau > 0.0) {
        return Err(Error::arg("dt and tau must be positive"));
    }
    if tau < dt {
        return Err(Error::arg(format!(
            "delay {tau} is shorter than the step {dt}"
        )));
    }
    Ok(())
}

fn keep_for(tau: f64, dt: f64) -> usize {
    (tau / dt).ceil() as usize + 3
}

/// One RK4 step of the Mackey-Glass equation from the history head at `t`;
/// returns the value at `t + dt`.
pub fn dde_step(spec: &SystemSpec, history: &DelayHistory, t: f64, dt: f64) -> Result<f64> {
    let p = MgParams::from_spec(spec)?;
    if (dt - history.dt).abs() > 1e-12 * dt {
        return Err(Error::arg("step must match the history grid spacing"));
    }
    if (t - history.head_time()).abs() > 1e-9 * dt.max(t.abs()) {
        return Err(Error::arg("step must start at the history head"));
    }
    if t - p.tau < history.earliest_time() - 1e-9 * dt {
        return Err(Error::arg(format!(
            "history covers [{}, {t}] but the delay needs {}",
            history.earliest_time(),
            t - p.tau
        )));
    }
    let head = history.head_index() as f64;
    let lag = p.tau / dt;
    let d0 = history.at_position(head - lag)?;
    let dh = history.at_position(head - lag + 0.5)?;
    let d1 = history.at_position(head - lag + 1.0)?;

    let x = history.head_value();
    let k1 = p.rhs(x, d0);
    let k2 = p.rhs(x + 0.5 * dt * k1, dh);
    let k3 = p.rhs(x + 0.5 * dt * k2, dh);
    let k4 = p.rhs(x + dt * k3, d1);
    let next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if !next.is_finite() {
        return Err(Error::NumericalBlowup {
            t,
            context: "non-finite Mackey-Glass step".into(),
        });
    }
    Ok(next)
}
