use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dynamics::mean_std;
use crate::error::{Error, Result};

pub const DEFAULT_VPH_FRAC: f64 = 0.10;

/// Population standard deviation of each column.
pub fn channel_sigma(truth: ArrayView2<f64>) -> Vec<f64> {
    truth
        .axis_iter(Axis(1))
        .map(|c| mean_std(c.iter().copied()).1)
        .collect()
}

fn check_sigma(sigma: &[f64]) -> Result<()> {
    match sigma.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
        Some(c) => Err(Error::Degenerate(format!(
            "ground truth channel {c} has standard deviation {}",
            sigma[c]
        ))),
        None => Ok(()),
    }
}

/// Per-step error: RMS over channels of the σ-normalized difference. Only
/// the common prefix of the two series is scored.
pub fn step_errors(predicted: ArrayView2<f64>, truth: ArrayView2<f64>, sigma: &[f64]) -> Result<Vec<f64>> {
    if predicted.ncols() != truth.ncols() || sigma.len() != truth.ncols() {
        return Err(Error::arg("prediction, truth and sigma disagree on channels"));
    }
    check_sigma(sigma)?;
    let n = predicted.nrows().min(truth.nrows());
    let c = truth.ncols() as f64;
    Ok((0..n)
        .map(|t| {
            let ss: f64 = (0..truth.ncols())
                .map(|k| ((predicted[[t, k]] - truth[[t, k]]) / sigma[k]).powi(2))
                .sum();
            (ss / c).sqrt()
        })
        .collect())
}

/// Number of leading steps whose error stays at or below `eta`.
pub fn vph_from_errors(errors: &[f64], eta: f64) -> usize {
    errors.iter().position(|&e| !(e <= eta)).unwrap_or(errors.len())
}

/// Valid prediction horizon in steps. A prediction shorter than the truth
/// (a truncated rollout) ends the horizon at its last step.
pub fn vph10(predicted: ArrayView2<f64>, truth: ArrayView2<f64>, sigma: &[f64], eta_frac: f64) -> Result<usize> {
    if !(eta_frac > 0.0 && eta_frac < 1.0) {
        return Err(Error::arg("threshold fraction must lie in (0, 1)"));
    }
    Ok(vph_from_errors(&step_errors(predicted, truth, sigma)?, eta_frac))
}

/// Mean squared σ-normalized error over all steps and channels.
pub fn normalized_mse(predicted: ArrayView2<f64>, truth: ArrayView2<f64>, sigma: &[f64]) -> Result<f64> {
    if predicted.dim() != truth.dim() {
        return Err(Error::arg("prediction and truth differ in shape"));
    }
    let e = step_errors(predicted, truth, sigma)?;
    Ok(e.iter().map(|v| v * v).sum::<f64>() / e.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonEstimate {
    pub t_valid: f64,
    /// set when η ≤ ε: the model starts beyond tolerance
    pub zero_horizon: bool,
}

/// T ≈ (1/λ)·ln(η/ε), in the time units of λ.
pub fn eq1_horizon(lambda_max: f64, epsilon: f64, eta: f64) -> Result<HorizonEstimate> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::UndefinedHorizon(format!(
            "λ_max = {lambda_max} is not positive; the error-growth horizon applies to chaotic regimes only"
        )));
    }
    if !(epsilon > 0.0) || !(eta > 0.0) {
        return Err(Error::arg("ε and η must be positive"));
    }
    if eta <= epsilon {
        return Ok(HorizonEstimate {
            t_valid: 0.0,
            zero_horizon: true,
        });
    }
    Ok(HorizonEstimate {
        t_valid: (eta / epsilon).ln() / lambda_max,
        zero_horizon: false,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, sa) = mean_std(ra.iter().copied());
    let (mb, sb) = mean_std(rb.iter().copied());
    let cov = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / ra.len() as f64;
    cov / (sa * sb)
}
