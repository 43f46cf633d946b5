//! Ordering comparison and noise-robustness harnesses.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalConfig, EvalSet, NoiseMode};
use crate::curriculum::{CurriculumConfig, CurriculumSchedule, CurriculumSource, Mode};
use crate::dynamics::{generate, IntegratorConfig, Job, SystemSpec};
use crate::error::{Error, Result};
use crate::library::{record_id, LibraryEntry};
use crate::model::{train, ModelConfig, ModelState, TrainingConfig};

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub ordering: String,
    pub seed: u64,
    pub epoch: usize,
    pub vph10: f64,
    pub nmse: f64,
    pub sigma_noise: f64,
}

/// Held-out chaotic Lorenz-63 trajectories and the forecast origins cut
/// from them.
#[derive(Debug, Clone)]
pub struct HeldOut {
    pub ids: Vec<String>,
    pub set: EvalSet,
}

/// Lorenz-63 at ρ = 28 from `seeds`, standardized, channel 0 only.
pub fn held_out_lorenz(seeds: &[u64], window: usize, cfg: &EvalConfig) -> Result<HeldOut> {
    if seeds.is_empty() {
        return Err(Error::arg("need at least one held-out seed"));
    }
    let spec = SystemSpec::lorenz63(10.0, 28.0, 8.0 / 3.0)?;
    let integrator = IntegratorConfig::for_family(spec.family);
    let mut ids = Vec::with_capacity(seeds.len());
    let mut series = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let traj = generate(&Job {
            spec: spec.clone(),
            seed,
            integrator,
        })?;
        ids.push(record_id(&spec, seed));
        series.push(first_channel(&traj.samples));
    }
    Ok(HeldOut {
        ids,
        set: EvalSet::from_series(&series, window, cfg)?,
    })
}

fn first_channel(samples: &Array2<f64>) -> Array2<f64> {
    samples.column(0).to_owned().insert_axis(ndarray::Axis(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rq2Config {
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub curriculum: CurriculumConfig,
    pub orderings: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub eval: EvalConfig,
    /// evaluate the held-out set every this many epochs (and at the last)
    pub eval_every: usize,
}

impl Default for Rq2Config {
    fn default() -> Self {
        Rq2Config {
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            curriculum: CurriculumConfig::default(),
            orderings: Mode::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            eval: EvalConfig::default(),
            eval_every: 1,
        }
    }
}

fn check_leakage(library: &[LibraryEntry], held_out: &HeldOut) -> Result<()> {
    let held: BTreeSet<&str> = held_out.ids.iter().map(String::as_str).collect();
    if let Some(r) = library.iter().find(|e| held.contains(e.record.id.as_str())) {
        return Err(Error::Leakage(format!(
            "held-out trajectory {} is part of the training library",
            r.record.id
        )));
    }
    Ok(())
}

/// Trains one model under `mode` and returns it with its per-epoch
/// held-out scores.
pub fn train_for_ordering(
    library: &[LibraryEntry],
    held_out: &HeldOut,
    cfg: &Rq2Config,
    mode: Mode,
    seed: u64,
) -> Result<(ModelState, Vec<ResultRow>)> {
    check_leakage(library, held_out)?;
    if library.is_empty() {
        return Err(Error::arg("training library is empty"));
    }
    let mut model_cfg = cfg.model;
    model_cfg.input_channels = 1;
    let training = TrainingConfig { seed, ..cfg.training };
    let pool: Vec<Array2<f64>> = library.iter().map(|e| first_channel(&e.samples)).collect();
    let keys: Vec<(f64, usize)> = library
        .iter()
        .map(|e| (e.record.score.lambda_max, e.record.score.dimension))
        .collect();
    let lambdas: Vec<f64> = keys.iter().map(|k| k.0).collect();
    let schedule = CurriculumSchedule::build(&lambdas, &cfg.curriculum, training.epochs, mode)?;
    let source = CurriculumSource::new(pool, &keys, schedule, training.batch_size, model_cfg.window_len)?;

    let mut state = ModelState::new(model_cfg, seed)?;
    let mut rows = Vec::new();
    let every = cfg.eval_every.max(1);
    let last = training.epochs.saturating_sub(1);
    train(&mut state, &source, &training, |epoch, s| {
        if (epoch + 1) % every != 0 && epoch != last {
            return Ok(None);
        }
        let summary = held_out.set.evaluate(s, &cfg.eval)?;
        rows.push(ResultRow {
            experiment: "rq2".into(),
            ordering: mode.name().into(),
            seed,
            epoch,
            vph10: summary.vph10,
            nmse: summary.nmse,
            sigma_noise: 0.0,
        });
        Ok(Some(summary.vph10))
    })?;
    Ok((state, rows))
}

/// Every (ordering, seed) pair trained with identical budgets, batch sizes
/// and initializations; rows sorted by ordering, seed and epoch.
pub fn run_rq2(library: &[LibraryEntry], held_out: &HeldOut, cfg: &Rq2Config) -> Result<Vec<ResultRow>> {
    check_leakage(library, held_out)?;
    if cfg.orderings.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::arg("need at least one ordering and one seed"));
    }
    let runs: Vec<(Mode, u64)> = cfg
        .orderings
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let results: Vec<Result<Vec<ResultRow>>> = runs
        .par_iter()
        .map(|&(mode, seed)| train_for_ordering(library, held_out, cfg, mode, seed).map(|r| r.1))
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    sort_rows(&mut rows);
    Ok(rows)
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (&a.experiment, &a.ordering, a.seed, a.epoch)
            .cmp(&(&b.experiment, &b.ordering, b.seed, b.epoch))
            .then(a.sigma_noise.total_cmp(&b.sigma_noise))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub levels: Vec<f64>,
    pub mode: NoiseMode,
    /// noise draws per level
    pub seeds: Vec<u64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            levels: vec![0.0, 0.05, 0.1, 0.2, 0.5],
            mode: NoiseMode::SeedWindowAndContext,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

/// Scores trained models under each input-noise level. `models` pairs an
/// ordering name and training seed with its final state.
pub fn run_noise_experiment(
    models: &[(String, u64, usize, ModelState)],
    held_out: &HeldOut,
    eval: &EvalConfig,
    noise: &NoiseConfig,
) -> Result<Vec<ResultRow>> {
    if noise.levels.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::arg("noise levels must be finite and non-negative"));
    }
    let per_model: Vec<Result<Vec<ResultRow>>> = models
        .par_iter()
        .map(|(ordering, seed, epoch, state)| {
            let table = super::noise_robustness(state, &held_out.set, &noise.levels, &noise.seeds, eval, noise.mode)?;
            Ok(table
                .into_iter()
                .map(|(sigma, vph, nmse)| ResultRow {
                    experiment: "noise".into(),
                    ordering: ordering.clone(),
                    seed: *seed,
                    epoch: *epoch,
                    vph10: vph,
                    nmse,
                    sigma_noise: sigma,
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_model {
        rows.extend(r?);
    }
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Load {
        file: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Mean and 95% normal-approximation half-width over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub ordering: String,
    pub sigma_noise: f64,
    pub epoch: usize,
    pub n: usize,
    pub vph10_mean: f64,
    pub vph10_ci95: f64,
    pub nmse_mean: f64,
    pub nmse_ci95: f64,
}

/// Aggregates the final-epoch row of every (experiment, ordering, σ, seed).
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    type Key = (String, String, u64);
    let mut last: BTreeMap<(Key, u64), &ResultRow> = BTreeMap::new();
    for r in rows {
        let key = ((r.experiment.clone(), r.ordering.clone(), r.sigma_noise.to_bits()), r.seed);
        match last.get(&key) {
            Some(prev) if prev.epoch >= r.epoch => {}
            _ => {
                last.insert(key, r);
            }
        }
    }
    let mut groups: BTreeMap<Key, Vec<&ResultRow>> = BTreeMap::new();
    for ((k, _), r) in last {
        groups.entry(k).or_default().push(r);
    }
    let ci = |xs: &[f64]| -> (f64, f64) {
        let (mean, sd) = crate::dynamics::mean_std(xs.iter().copied());
        let n = xs.len() as f64;
        let sample_sd = if n > 1.0 { sd * (n / (n - 1.0)).sqrt() } else { 0.0 };
        (mean, 1.96 * sample_sd / n.sqrt())
    };
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((experiment, ordering, sigma), rs)| {
            let vph: Vec<f64> = rs.iter().map(|r| r.vph10).collect();
            let nmse: Vec<f64> = rs.iter().map(|r| r.nmse).collect();
            let (vm, vc) = ci(&vph);
            let (nm, nc) = ci(&nmse);
            SummaryRow {
                experiment,
                ordering,
                sigma_noise: f64::from_bits(sigma),
                epoch: rs.iter().map(|r| r.epoch).max().unwrap_or(0),
                n: rs.len(),
                vph10_mean: vm,
                vph10_ci95: vc,
                nmse_mean: nm,
                nmse_ci95: nc,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.experiment, &a.ordering)
            .cmp(&(&b.experiment, &b.ordering))
            .then(a.sigma_noise.total_cmp(&b.sigma_noise))
    });
    out
}
