//! Model-based largest Lyapunov exponent from the variational equations.

use crate::dynamics::{OdeSystem, Rk4, SystemSpec, TangentField};
use crate::error::{Error, Result};

/// Integration steps between tangent-vector renormalizations.
const RENORM_EVERY: usize = 10;
/// Fraction of the horizon integrated before the exponent is accumulated.
const TRANSIENT_FRAC: f64 = 0.1;
/// Relative change of the running average allowed over the final 20%.
const DRIFT_TOL: f64 = 0.01;
/// Absolute drift floor so exponents near zero can still converge.
const DRIFT_FLOOR: f64 = 1e-3;

/// Largest Lyapunov exponent of `field` started at `x0`, in 1/time units of
/// the integration clock. The tangent system is carried alongside the state
/// with RK4 and renormalized every few steps; the log growth is averaged over
/// `horizon` after a transient of a tenth of the horizon.
pub fn benettin_lambda<F: TangentField>(field: &F, x0: &[f64], horizon: f64, dt: f64) -> Result<f64> {
    let n = field.dim();
    if x0.len() != n {
        return Err(Error::arg(format!(
            "initial state has length {}, field needs {n}",
            x0.len()
        )));
    }
    if !(dt > 0.0) || !(horizon > dt) {
        return Err(Error::arg("need dt > 0 and horizon > dt"));
    }

    let mut rk_state = Rk4::new(n);
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let transient_steps = ((TRANSIENT_FRAC * horizon) / dt).round() as usize;
    for _ in 0..transient_steps {
        rk_state.step(|t, x, dx| field.eval(t, x, dx), t, dt, &mut x)?;
        t += dt;
    }

    // augmented state [x, v]
    let mut z = vec![0.0; 2 * n];
    z[..n].copy_from_slice(&x);
    let v0 = 1.0 / (n as f64).sqrt();
    z[n..].iter_mut().for_each(|v| *v = v0);
    let mut rk = Rk4::new(2 * n);
    let augmented = |t: f64, z: &[f64], dz: &mut [f64]| {
        let (x, v) = z.split_at(n);
        let (dx, dv) = dz.split_at_mut(n);
        field.eval(t, x, dx);
        field.jvp(t, x, v, dv);
    };

    let steps = (horizon / dt).round() as usize;
    let checkpoint = (steps as f64 * 0.8) as usize;
    let mut log_sum = 0.0;
    let mut avg_at_checkpoint = None;
    let t_start = t;
    for step in 1..=steps {
        rk.step(augmented, t, dt, &mut z)?;
        t += dt;
        if step % RENORM_EVERY == 0 || step == steps {
            let norm = z[n..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::NumericalBlowup {
                    t,
                    context: "tangent vector collapsed or diverged".into(),
                });
            }
            log_sum += norm.ln();
            z[n..].iter_mut().for_each(|v| *v /= norm);
        }
        if avg_at_checkpoint.is_none() && step >= checkpoint && step % RENORM_EVERY == 0 {
            avg_at_checkpoint = Some(log_sum / (t - t_start));
        }
    }
    let lambda = log_sum / (t - t_start);
    let earlier = avg_at_checkpoint.unwrap_or(lambda);
    let drift = (lambda - earlier).abs();
    if drift > (DRIFT_TOL * lambda.abs()).max(DRIFT_FLOOR) {
        return Err(Error::NonConvergence {
            drift,
            context: format!("running average moved from {earlier:.4} to {lambda:.4}"),
        });
    }
    Ok(lambda)
}

/// [`benettin_lambda`] for an ODE spec.
pub fn benettin_lambda_oracle(spec: &SystemSpec, x0: &[f64], horizon: f64, dt: f64) -> Result<f64> {
    let sys = OdeSystem::from_spec(spec)?;
    benettin_lambda(&sys, x0, horizon, dt)
}
