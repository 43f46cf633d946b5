use super::{Family, Kind, SystemSpec};
use crate::error::{Error, Result};

/// Right-hand side of a (possibly nonautonomous) first-order system.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]);
}

/// A vector field that can also apply its Jacobian to a tangent vector.
pub trait TangentField: VectorField {
    fn jvp(&self, t: f64, x: &[f64], v: &[f64], out: &mut [f64]);
}

/// Parameters of an ODE family unpacked for fast evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum OdeSystem {
    Lorenz63 { sigma: f64, rho: f64, beta: f64 },
    Lorenz96 { forcing: f64, n: usize },
    Rossler { a: f64, b: f64, c: f64 },
    /// ẍ + δẋ + αx + βx³ = γ cos(ωt), as (x, ẋ).
    Duffing { delta: f64, alpha: f64, beta: f64, gamma: f64, omega: f64 },
    VanDerPol { mu: f64 },
}

impl OdeSystem {
    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        if spec.kind != Kind::Ode {
            return Err(Error::arg(format!("{spec} is not an ODE")));
        }
        let p = |k: &str| spec.param(k);
        Ok(match spec.family {
            Family::Lorenz63 => OdeSystem::Lorenz63 {
                sigma: p("sigma"),
                rho: p("rho"),
                beta: p("beta"),
            },
            Family::Lorenz96 => OdeSystem::Lorenz96 {
                forcing: p("F"),
                n: spec.state_dim,
            },
            Family::Rossler => OdeSystem::Rossler {
                a: p("a"),
                b: p("b"),
                c: p("c"),
            },
            Family::Duffing => OdeSystem::Duffing {
                delta: p("delta"),
                alpha: p("alpha"),
                beta: p("beta"),
                gamma: p("gamma"),
                omega: p("omega"),
            },
            Family::VanDerPol => OdeSystem::VanDerPol { mu: p("mu") },
            Family::MackeyGlass | Family::KuramotoSivashinsky => unreachable!("kind checked"),
        })
    }
}

impl VectorField for OdeSystem {
    fn dim(&self) -> usize {
        match self {
            OdeSystem::Lorenz63 { .. } | OdeSystem::Rossler { .. } => 3,
            OdeSystem::Duffing { .. } | OdeSystem::VanDerPol { .. } => 2,
            OdeSystem::Lorenz96 { n, .. } => *n,
        }
    }

    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        match *self {
            OdeSystem::Lorenz63 { sigma, rho, beta } => {
                dx[0] = sigma * (x[1] - x[0]);
                dx[1] = x[0] * (rho - x[2]) - x[1];
                dx[2] = x[0] * x[1] - beta * x[2];
            }
            OdeSystem::Lorenz96 { forcing, n } => {
                for i in 0..n {
                    let ip1 = (i + 1) % n;
                    let im1 = (i + n - 1) % n;
                    let im2 = (i + n - 2) % n;
                    dx[i] = (x[ip1] - x[im2]) * x[im1] - x[i] + forcing;
                }
            }
            OdeSystem::Rossler { a, b, c } => {
                dx[0] = -x[1] - x[2];
                dx[1] = x[0] + a * x[1];
                dx[2] = b + x[2] * (x[0] - c);
            }
            OdeSystem::Duffing {
                delta,
                alpha,
                beta,
                gamma,
                omega,
            } => {
                dx[0] = x[1];
                dx[1] = -delta * x[1] - alpha * x[0] - beta * x[0].powi(3)
                    + gamma * (omega * t).cos();
            }
            OdeSystem::VanDerPol { mu } => {
                dx[0] = x[1];
                dx[1] = mu * (1.0 - x[0] * x[0]) * x[1] - x[0];
            }
        }
    }
}

impl TangentField for OdeSystem {
    fn jvp(&self, _t: f64, x: &[f64], v: &[f64], out: &mut [f64]) {
        match *self {
            OdeSystem::Lorenz63 { sigma, rho, beta } => {
                out[0] = sigma * (v[1] - v[0]);
                out[1] = (rho - x[2]) * v[0] - v[1] - x[0] * v[2];
                out[2] = x[1] * v[0] + x[0] * v[1] - beta * v[2];
            }
            OdeSystem::Lorenz96 { n, .. } => {
                for i in 0..n {
                    let ip1 = (i + 1) % n;
                    let im1 = (i + n - 1) % n;
                    let im2 = (i + n - 2) % n;
                    out[i] = (v[ip1] - v[im2]) * x[im1] + (x[ip1] - x[im2]) * v[im1] - v[i];
                }
            }
            OdeSystem::Rossler { a, c, .. } => {
                out[0] = -v[1] - v[2];
                out[1] = v[0] + a * v[1];
                out[2] = x[2] * v[0] + (x[0] - c) * v[2];
            }
            OdeSystem::Duffing {
                delta, alpha, beta, ..
            } => {
                out[0] = v[1];
                out[1] = -delta * v[1] - (alpha + 3.0 * beta * x[0] * x[0]) * v[0];
            }
            OdeSystem::VanDerPol { mu } => {
                out[0] = v[1];
                out[1] = (-2.0 * mu * x[0] * x[1] - 1.0) * v[0] + mu * (1.0 - x[0] * x[0]) * v[1];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jvp(sys: &OdeSystem, t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        let n = x.len();
        let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        sys.eval(t, &xp, &mut fp);
        sys.eval(t, &xm, &mut fm);
        fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let specs = [
            SystemSpec::new(Family::Lorenz63),
            SystemSpec::with_params(Family::Lorenz96, [("N", 6.0)]).unwrap(),
            SystemSpec::new(Family::Rossler),
            SystemSpec::new(Family::Duffing),
            SystemSpec::new(Family::VanDerPol),
        ];
        for spec in &specs {
            let sys = OdeSystem::from_spec(spec).unwrap();
            let n = sys.dim();
            let x: Vec<f64> = (0..n).map(|i| 0.3 + 0.7 * i as f64).collect();
            let v: Vec<f64> = (0..n).map(|i| 1.0 - 0.4 * i as f64).collect();
            let mut out = vec![0.0; n];
            sys.jvp(0.7, &x, &v, &mut out);
            let fd = fd_jvp(&sys, 0.7, &x, &v);
            for (a, b) in out.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{spec}: {a} vs {b}");
            }
        }
    }
}
