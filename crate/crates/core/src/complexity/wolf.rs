//! Data-driven largest Lyapunov exponent from a scalar series: delay
//! embedding plus fixed-evolution-time neighbor tracking with replacement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separation (relative to the embedded attractor's RMS radius) above which
/// the tracked neighbor is replaced.
const MAX_SEPARATION: f64 = 0.2;
/// Separations below this relative scale carry no usable direction.
const MIN_SEPARATION: f64 = 1e-9;
/// Angular tolerances tried in order when choosing a replacement neighbor.
const ANGLE_STEPS: [f64; 4] = [0.3, 0.6, 1.2, std::f64::consts::PI];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub embed_dim: usize,
    pub delay: usize,
    pub theiler_window: usize,
    pub evolve_steps: usize,
    pub window_len: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            embed_dim: 6,
            delay: 10,
            theiler_window: 60,
            evolve_steps: 5,
            window_len: 1024,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 || self.delay < 1 || self.evolve_steps < 1 {
            return Err(Error::arg("need embed_dim >= 2, delay >= 1, evolve_steps >= 1"));
        }
        if self.window_len <= self.embed_dim * self.delay + self.evolve_steps {
            return Err(Error::arg(format!(
                "window_len {} must exceed embed_dim*delay + evolve_steps = {}",
                self.window_len,
                self.embed_dim * self.delay + self.evolve_steps
            )));
        }
        Ok(())
    }

    /// Same configuration with the delay picked from `series` by
    /// [`select_delay`] and the Theiler window set to `delay · embed_dim`.
    pub fn with_delay_for(&self, series: &[f64]) -> Self {
        let max_lag = (self.window_len.saturating_sub(self.evolve_steps + 1)) / (2 * self.embed_dim);
        let delay = select_delay(series, max_lag.max(1)).unwrap_or(DEFAULT_DELAY);
        EmbeddingConfig {
            delay,
            theiler_window: delay * self.embed_dim,
            ..*self
        }
    }
}

const DEFAULT_DELAY: usize = 10;

/// Sample autocorrelation at lags `0..=max_lag`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let var: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum();
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|lag| {
            if var == 0.0 {
                return 0.0;
            }
            let cov: f64 = (0..n - lag)
                .map(|i| (series[i] - mean) * (series[i + lag] - mean))
                .sum();
            cov / var
        })
        .collect()
}

/// Histogram estimate of the mutual information between `series[t]` and
/// `series[t + lag]` for lags `0..=max_lag`, in nats.
pub fn average_mutual_information(series: &[f64], max_lag: usize, bins: usize) -> Vec<f64> {
    let n = series.len();
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) || bins == 0 {
        return vec![0.0; max_lag + 1];
    }
    let width = (hi - lo) / bins as f64;
    let bin_of: Vec<usize> = series
        .iter()
        .map(|&v| (((v - lo) / width) as usize).min(bins - 1))
        .collect();
    let mut joint = vec![0usize; bins * bins];
    (0..=max_lag.min(n.saturating_sub(2)))
        .map(|lag| {
            joint.iter_mut().for_each(|c| *c = 0);
            let mut pa = vec![0usize; bins];
            let mut pb = vec![0usize; bins];
            let m = n - lag;
            for t in 0..m {
                let (a, b) = (bin_of[t], bin_of[t + lag]);
                joint[a * bins + b] += 1;
                pa[a] += 1;
                pb[b] += 1;
            }
            let total = m as f64;
            let mut info = 0.0;
            for a in 0..bins {
                for b in 0..bins {
                    let c = joint[a * bins + b];
                    if c > 0 {
                        let pab = c as f64 / total;
                        info += pab * (pab * total * total / (pa[a] as f64 * pb[b] as f64)).ln();
                    }
                }
            }
            info
        })
        .collect()
}

const MI_BINS: usize = 16;

/// Delay for embedding `series`: the first local minimum of the average
/// mutual information within `max_lag`, falling back to the first local
/// minimum of the autocorrelation.
pub fn select_delay(series: &[f64], max_lag: usize) -> Option<usize> {
    let first_min = |curve: &[f64]| {
        (1..curve.len().saturating_sub(1)).find(|&l| curve[l] < curve[l - 1] && curve[l] <= curve[l + 1])
    };
    first_min(&average_mutual_information(series, max_lag + 1, MI_BINS))
        .or_else(|| first_min(&autocorrelation(series, max_lag + 1)))
}

/// Mean of per-window Wolf estimates over windows of `window_len` samples
/// overlapping by half. Returned in 1/time units (per step divided by
/// `dt_effective`).
pub fn wolf_lambda(series: &[f64], cfg: &EmbeddingConfig, dt_effective: f64) -> Result<f64> {
    cfg.validate()?;
    if !(dt_effective > 0.0) {
        return Err(Error::arg("dt_effective must be positive"));
    }
    if series.len() < 2 * cfg.window_len {
        return Err(Error::arg(format!(
            "series of length {} is shorter than two windows of {}",
            series.len(),
            cfg.window_len
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("series contains non-finite values"));
    }
    let step = (cfg.window_len / 2).max(1);
    let mut estimates = Vec::new();
    let mut start = 0;
    while start + cfg.window_len <= series.len() {
        if let Some(rate) = window_rate(&series[start..start + cfg.window_len], cfg) {
            estimates.push(rate);
        }
        start += step;
    }
    if estimates.is_empty() {
        return Err(Error::Estimation(
            "no valid neighbor pairs in any window".into(),
        ));
    }
    let per_step = estimates.iter().sum::<f64>() / estimates.len() as f64;
    Ok(per_step / dt_effective)
}

struct Embedding<'a> {
    data: &'a [f64],
    dim: usize,
    delay: usize,
    len: usize,
}

impl<'a> Embedding<'a> {
    fn new(data: &'a [f64], dim: usize, delay: usize) -> Self {
        let len = data.len() - (dim - 1) * delay;
        Embedding {
            data,
            dim,
            delay,
            len,
        }
    }

    #[inline]
    fn coord(&self, i: usize, d: usize) -> f64 {
        self.data[i + d * self.delay]
    }

    fn dist(&self, a: usize, b: usize) -> f64 {
        (0..self.dim)
            .map(|d| {
                let diff = self.coord(a, d) - self.coord(b, d);
                diff * diff
            })
            .sum::<f64>()
            .sqrt()
    }

    fn rms_radius(&self) -> f64 {
        let mut total = 0.0;
        for d in 0..self.dim {
            let vals = (0..self.len).map(|i| self.coord(i, d));
            let mean = vals.clone().sum::<f64>() / self.len as f64;
            total += vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.len as f64;
        }
        total.sqrt()
    }

    /// Cosine of the angle between (b − a) and (c − a).
    fn cos_angle(&self, a: usize, b: usize, c: usize) -> f64 {
        let (mut dot, mut nb, mut nc) = (0.0, 0.0, 0.0);
        for d in 0..self.dim {
            let u = self.coord(b, d) - self.coord(a, d);
            let v = self.coord(c, d) - self.coord(a, d);
            dot += u * v;
            nb += u * u;
            nc += v * v;
        }
        if nb == 0.0 || nc == 0.0 {
            return 1.0;
        }
        dot / (nb * nc).sqrt()
    }
}

/// Average log growth per step within one window, or `None` if no neighbor
/// pair could be tracked.
fn window_rate(window: &[f64], cfg: &EmbeddingConfig) -> Option<f64> {
    let emb = Embedding::new(window, cfg.embed_dim, cfg.delay);
    let k = cfg.evolve_steps;
    if emb.len <= k + 1 {
        return None;
    }
    let radius = emb.rms_radius();
    if !(radius > 0.0) {
        return None;
    }
    let max_sep = MAX_SEPARATION * radius;
    let min_sep = MIN_SEPARATION * radius;
    let last_start = emb.len - k; // fiducial and neighbor indices must stay below this

    let candidates = |i: usize| {
        (0..last_start).filter(move |&c| c.abs_diff(i) > cfg.theiler_window)
    };
    let nearest = |i: usize| -> Option<usize> {
        candidates(i)
            .map(|c| (c, emb.dist(i, c)))
            .filter(|&(_, d)| d > min_sep)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, _)| c)
    };
    // replacement keeping the separation direction of `old` as far as possible
    let replace = |i: usize, old: usize| -> Option<usize> {
        let pool: Vec<(usize, f64, f64)> = candidates(i)
            .filter_map(|c| {
                let d = emb.dist(i, c);
                (d > min_sep && d <= max_sep).then(|| (c, d, emb.cos_angle(i, old, c)))
            })
            .collect();
        for &angle in &ANGLE_STEPS {
            let limit = angle.cos();
            if let Some(&(c, _, _)) = pool
                .iter()
                .filter(|p| p.2 >= limit)
                .min_by(|a, b| a.1.total_cmp(&b.1))
            {
                return Some(c);
            }
        }
        nearest(i)
    };

    let mut log_sum = 0.0;
    let mut evolutions = 0usize;
    let mut i = 0usize;
    let mut j = nearest(i);
    while i < last_start {
        let Some(jj) = j else {
            i += k;
            if i < last_start {
                j = nearest(i);
            }
            continue;
        };
        let d0 = emb.dist(i, jj);
        let d1 = emb.dist(i + k, jj + k);
        if d0 > min_sep && d1 > min_sep {
            log_sum += (d1 / d0).ln();
            evolutions += 1;
        }
        i += k;
        if i >= last_start {
            break;
        }
        let jn = jj + k;
        j = if d1 > max_sep || d1 <= min_sep || jn >= last_start || jn.abs_diff(i) <= cfg.theiler_window {
            if jn < emb.len {
                replace(i, jn)
            } else {
                nearest(i)
            }
        } else {
            Some(jn)
        };
    }
    (evolutions > 0).then(|| log_sum / (evolutions * k) as f64)
}
