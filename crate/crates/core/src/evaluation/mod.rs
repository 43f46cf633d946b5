//! Closed-loop forecasting and horizon metrics.

mod metrics;
mod rq2;

use ndarray::{s, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Hidden, ModelState};

pub use metrics::{
    channel_sigma, eq1_horizon, normalized_mse, spearman, step_errors, vph10, vph_from_errors, HorizonEstimate,
    DEFAULT_VPH_FRAC,
};
pub use rq2::{
    held_out_lorenz, read_results_csv, run_noise_experiment, run_rq2, summarize, train_for_ordering, write_results_csv,
    HeldOut, NoiseConfig, ResultRow, Rq2Config, SummaryRow,
};

/// Anything that maps an observation stream to next-step predictions.
pub trait Forecaster {
    type State;

    fn start(&self) -> Self::State;

    /// Consumes observation `x` and predicts the next one.
    fn advance(&self, state: &mut Self::State, x: &[f64]) -> Result<Vec<f64>>;
}

impl Forecaster for ModelState {
    type State = Hidden;

    fn start(&self) -> Hidden {
        self.initial_hidden()
    }

    fn advance(&self, state: &mut Hidden, x: &[f64]) -> Result<Vec<f64>> {
        self.step(state, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// (steps, channels); fewer than requested rows when truncated
    pub predictions: Array2<f64>,
    /// step at which a non-finite prediction stopped the rollout
    pub truncated_at: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// perturb only the observed seed window
    SeedWindow,
    /// perturb the seed window and every fed-back prediction
    SeedWindowAndContext,
}

struct Noise<'a> {
    dist: Normal<f64>,
    rng: &'a mut ChaCha8Rng,
    mode: NoiseMode,
}

fn rollout_inner<F: Forecaster>(
    model: &F,
    seed_window: ArrayView2<f64>,
    horizon: usize,
    mut noise: Option<Noise<'_>>,
) -> Result<Rollout> {
    let channels = seed_window.ncols();
    if seed_window.nrows() == 0 {
        return Err(Error::arg("empty seed window"));
    }
    let mut out = Array2::zeros((horizon, channels));
    if horizon == 0 {
        return Ok(Rollout {
            predictions: out,
            truncated_at: None,
        });
    }
    let truncate = |out: Array2<f64>, k: usize| Rollout {
        predictions: out.slice(s![..k, ..]).to_owned(),
        truncated_at: Some(k),
    };
    let mut state = model.start();
    let mut next = Vec::new();
    for row in seed_window.rows() {
        let mut x = row.to_vec();
        if let Some(n) = noise.as_mut() {
            x.iter_mut().for_each(|v| *v += n.dist.sample(n.rng));
        }
        match model.advance(&mut state, &x) {
            Ok(p) => next = p,
            Err(_) => return Ok(truncate(out, 0)),
        }
    }
    for k in 0..horizon {
        if next.len() != channels || next.iter().any(|v| !v.is_finite()) {
            return Ok(truncate(out, k));
        }
        out.row_mut(k).assign(&ndarray::ArrayView1::from(&next[..]));
        if k + 1 == horizon {
            break;
        }
        let mut x = next.clone();
        if let Some(n) = noise.as_mut() {
            if n.mode == NoiseMode::SeedWindowAndContext {
                x.iter_mut().for_each(|v| *v += n.dist.sample(n.rng));
            }
        }
        match model.advance(&mut state, &x) {
            Ok(p) => next = p,
            Err(_) => return Ok(truncate(out, k + 1)),
        }
    }
    Ok(Rollout {
        predictions: out,
        truncated_at: None,
    })
}

/// Warms the model up on `seed_window` (rows are time) with carried hidden
/// state, then feeds each prediction back as the next input for `horizon`
/// steps.
pub fn rollout<F: Forecaster>(model: &F, seed_window: ArrayView2<f64>, horizon: usize) -> Result<Rollout> {
    rollout_inner(model, seed_window, horizon, None)
}

/// [`rollout`] with Gaussian input noise of standard deviation `sigma`.
pub fn rollout_noisy<F: Forecaster>(
    model: &F,
    seed_window: ArrayView2<f64>,
    horizon: usize,
    sigma: f64,
    mode: NoiseMode,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout> {
    if sigma == 0.0 {
        return rollout(model, seed_window, horizon);
    }
    let dist = Normal::new(0.0, sigma).map_err(|e| Error::arg(format!("noise level {sigma}: {e}")))?;
    rollout_inner(model, seed_window, horizon, Some(Noise { dist, rng, mode }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub vph_threshold_frac: f64,
    /// rollout length in steps
    pub max_horizon: usize,
    /// forecast origins per held-out series
    pub starts_per_series: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            vph_threshold_frac: DEFAULT_VPH_FRAC,
            max_horizon: 400,
            starts_per_series: 4,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.vph_threshold_frac > 0.0 && self.vph_threshold_frac < 1.0) {
            return Err(Error::arg("vph_threshold_frac must lie in (0, 1)"));
        }
        if self.max_horizon == 0 || self.starts_per_series == 0 {
            return Err(Error::arg("max_horizon and starts_per_series must be positive"));
        }
        Ok(())
    }
}

/// One forecast origin: the observed window and the continuation to score.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSegment {
    pub seed_window: Array2<f64>,
    pub truth: Array2<f64>,
    /// per-channel σ of the whole ground-truth series
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSet {
    pub segments: Vec<EvalSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub vph10: f64,
    pub nmse: f64,
    pub truncated: usize,
}

impl EvalSet {
    /// Evenly spaced forecast origins over each series (rows are time).
    pub fn from_series(series: &[Array2<f64>], window: usize, cfg: &EvalConfig) -> Result<Self> {
        cfg.validate()?;
        let need = window + cfg.max_horizon;
        let mut segments = Vec::new();
        for (i, x) in series.iter().enumerate() {
            if x.nrows() < need {
                return Err(Error::arg(format!(
                    "held-out series {i} has {} rows, needs {need}",
                    x.nrows()
                )));
            }
            let sigma = channel_sigma(x.view());
            let span = x.nrows() - need;
            let n = cfg.starts_per_series;
            for k in 0..n {
                let start = if n == 1 { 0 } else { k * span / (n - 1) };
                segments.push(EvalSegment {
                    seed_window: x.slice(s![start..start + window, ..]).to_owned(),
                    truth: x.slice(s![start + window..start + need, ..]).to_owned(),
                    sigma: sigma.clone(),
                });
            }
        }
        Ok(EvalSet { segments })
    }

    /// [`EvalSet::from_series`] for one scalar series.
    pub fn from_scalar(values: &[f64], window: usize, cfg: &EvalConfig) -> Result<Self> {
        let x = Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape");
        Self::from_series(&[x], window, cfg)
    }

    fn score(seg: &EvalSegment, r: &Rollout, frac: f64) -> Result<(f64, f64)> {
        let vph = vph10(r.predictions.view(), seg.truth.view(), &seg.sigma, frac)?;
        let n = r.predictions.nrows();
        let nmse = if n == 0 {
            f64::INFINITY
        } else {
            normalized_mse(r.predictions.view(), seg.truth.slice(s![..n, ..]), &seg.sigma)?
        };
        Ok((vph as f64, nmse))
    }

    fn summarize(scores: &[(f64, f64)], truncated: usize) -> EvalSummary {
        let n = scores.len().max(1) as f64;
        EvalSummary {
            vph10: scores.iter().map(|s| s.0).sum::<f64>() / n,
            nmse: scores.iter().map(|s| s.1).sum::<f64>() / n,
            truncated,
        }
    }

    /// Mean VPH-10 and normalized MSE over all segments.
    pub fn evaluate<F: Forecaster>(&self, model: &F, cfg: &EvalConfig) -> Result<EvalSummary> {
        let mut scores = Vec::with_capacity(self.segments.len());
        let mut truncated = 0;
        for seg in &self.segments {
            let r = rollout(model, seg.seed_window.view(), seg.truth.nrows())?;
            truncated += usize::from(r.truncated_at.is_some());
            scores.push(Self::score(seg, &r, cfg.vph_threshold_frac)?);
        }
        Ok(Self::summarize(&scores, truncated))
    }

    /// [`EvalSet::evaluate`] under input noise; a zero level reproduces the
    /// clean evaluation exactly.
    pub fn evaluate_noisy<F: Forecaster>(
        &self,
        model: &F,
        cfg: &EvalConfig,
        sigma: f64,
        mode: NoiseMode,
        seed: u64,
    ) -> Result<EvalSummary> {
        if sigma == 0.0 {
            return self.evaluate(model, cfg);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scores = Vec::with_capacity(self.segments.len());
        let mut truncated = 0;
        for seg in &self.segments {
            let r = rollout_noisy(model, seg.seed_window.view(), seg.truth.nrows(), sigma, mode, &mut rng)?;
            truncated += usize::from(r.truncated_at.is_some());
            scores.push(Self::score(seg, &r, cfg.vph_threshold_frac)?);
        }
        Ok(Self::summarize(&scores, truncated))
    }

    /// Mean σ-normalized absolute one-step error with the true inputs fed at
    /// every step of each segment.
    pub fn one_step_error<F: Forecaster>(&self, model: &F) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for seg in &self.segments {
            let mut state = model.start();
            let mut pred = Vec::new();
            for row in seg.seed_window.rows() {
                pred = model.advance(&mut state, &row.to_vec())?;
            }
            for row in seg.truth.rows() {
                let err: f64 = pred
                    .iter()
                    .zip(row.iter())
                    .zip(&seg.sigma)
                    .map(|((p, t), s)| ((p - t) / s).powi(2))
                    .sum::<f64>()
                    / row.len() as f64;
                total += err.sqrt();
                count += 1;
                pred = model.advance(&mut state, &row.to_vec())?;
            }
        }
        Ok(total / count.max(1) as f64)
    }
}

/// One row per noise level: (σ_noise, mean VPH-10 over seeds, mean NMSE).
pub fn noise_robustness<F: Forecaster>(
    model: &F,
    set: &EvalSet,
    levels: &[f64],
    seeds: &[u64],
    cfg: &EvalConfig,
    mode: NoiseMode,
) -> Result<Vec<(f64, f64, f64)>> {
    if seeds.is_empty() {
        return Err(Error::arg("need at least one noise seed"));
    }
    levels
        .iter()
        .map(|&sigma| {
            if sigma == 0.0 {
                let s = set.evaluate(model, cfg)?;
                return Ok((sigma, s.vph10, s.nmse));
            }
            let mut vph = 0.0;
            let mut nmse = 0.0;
            for &seed in seeds {
                let s = set.evaluate_noisy(model, cfg, sigma, mode, seed)?;
                vph += s.vph10;
                nmse += s.nmse;
            }
            let n = seeds.len() as f64;
            Ok((sigma, vph / n, nmse / n))
        })
        .collect()
}
