//! Complexity-staged data scheduling.
//!
//! Stage `s` of a forward curriculum admits every record with
//! `λ_max ≤ τ_s`; stages accumulate, and the final stage admits the whole
//! library including records whose estimate failed (`λ = +∞`). A reversed
//! curriculum admits the hardest records first using mirrored thresholds;
//! random mixing admits everything at every stage.

mod batch;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::{sample_batch, Batch, BatchSource, CurriculumSource, SeriesSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Forward,
    Reversed,
    RandomMix,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Forward, Mode::RandomMix, Mode::Reversed];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Forward => "forward",
            Mode::Reversed => "reversed",
            Mode::RandomMix => "random_mix",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown curriculum mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pacing {
    Quantile,
    Linear,
}

/// Curriculum settings as they appear in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub num_stages: usize,
    pub pacing: Pacing,
    /// Explicit per-stage epoch counts; equal pacing over the training epochs
    /// when absent.
    pub epochs_per_stage: Option<Vec<usize>>,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            num_stages: 5,
            pacing: Pacing::Quantile,
            epochs_per_stage: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    /// τ_1 ≤ … ≤ τ_S
    pub thresholds: Vec<f64>,
    /// τ'_1 ≥ … ≥ τ'_S, lower bounds of the reversed stages
    pub mirror_thresholds: Vec<f64>,
    pub epochs_per_stage: Vec<usize>,
    pub mode: Mode,
}

/// Records admitted at one stage, as indices into the library, ordered by
/// (λ_max, dimension, index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSubset {
    pub stage: usize,
    pub members: Vec<usize>,
}

fn finite_sorted(scores: &[f64]) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    if v.is_empty() {
        return Err(Error::Scheduling("no finite complexity scores".into()));
    }
    if scores.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
        return Err(Error::arg("scores must be finite or +inf"));
    }
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn rank(s: usize, n: usize, stages: usize) -> usize {
    // nearest-rank position of the s/S quantile, 1-based
    (s * n).div_ceil(stages).max(1)
}

fn warn_collapse(sorted: &[f64], stages: usize) {
    let mut distinct = sorted.to_vec();
    distinct.dedup();
    if stages > distinct.len() {
        log::warn!(
            "{stages} stages over {} distinct scores: thresholds collapse",
            distinct.len()
        );
    }
}

/// Stage thresholds over the finite scores (`+∞` sentinels are ignored).
/// Quantile pacing uses nearest-rank `s/S` quantiles; linear pacing splits
/// `[min, max]` evenly. The last threshold is always the maximum.
pub fn make_stage_thresholds(scores: &[f64], stages: usize, pacing: Pacing) -> Result<Vec<f64>> {
    if stages == 0 {
        return Err(Error::arg("need at least one stage"));
    }
    let sorted = finite_sorted(scores)?;
    let n = sorted.len();
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let mut t: Vec<f64> = match pacing {
        Pacing::Quantile => {
            warn_collapse(&sorted, stages);
            (1..=stages).map(|s| sorted[rank(s, n, stages) - 1]).collect()
        }
        Pacing::Linear => (1..=stages)
            .map(|s| lo + (hi - lo) * s as f64 / stages as f64)
            .collect(),
    };
    t[stages - 1] = hi;
    Ok(t)
}

/// Lower bounds for the reversed stages, the mirror image of
/// [`make_stage_thresholds`]: stage `s` admits the same number of records
/// counted from the top. The last bound is always the minimum.
pub fn make_mirror_thresholds(scores: &[f64], stages: usize, pacing: Pacing) -> Result<Vec<f64>> {
    if stages == 0 {
        return Err(Error::arg("need at least one stage"));
    }
    let sorted = finite_sorted(scores)?;
    let n = sorted.len();
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let mut t: Vec<f64> = match pacing {
        Pacing::Quantile => (1..=stages).map(|s| sorted[n - rank(s, n, stages)]).collect(),
        Pacing::Linear => (1..=stages)
            .map(|s| hi - (hi - lo) * s as f64 / stages as f64)
            .collect(),
    };
    t[stages - 1] = lo;
    Ok(t)
}

/// Equal pacing of `epochs` over `stages`, earlier stages taking any
/// remainder.
pub fn equal_pacing(epochs: usize, stages: usize) -> Result<Vec<usize>> {
    if stages == 0 || epochs < stages {
        return Err(Error::arg(format!(
            "cannot pace {epochs} epochs over {stages} stages"
        )));
    }
    let base = epochs / stages;
    let extra = epochs % stages;
    Ok((0..stages).map(|s| base + usize::from(s < extra)).collect())
}

impl CurriculumSchedule {
    pub fn build(scores: &[f64], cfg: &CurriculumConfig, epochs: usize, mode: Mode) -> Result<Self> {
        let epochs_per_stage = match &cfg.epochs_per_stage {
            Some(list) => {
                if list.len() != cfg.num_stages || list.iter().any(|&e| e == 0) {
                    return Err(Error::arg(format!(
                        "epochs_per_stage needs {} positive entries",
                        cfg.num_stages
                    )));
                }
                list.clone()
            }
            None => equal_pacing(epochs, cfg.num_stages)?,
        };
        Ok(CurriculumSchedule {
            thresholds: make_stage_thresholds(scores, cfg.num_stages, cfg.pacing)?,
            mirror_thresholds: make_mirror_thresholds(scores, cfg.num_stages, cfg.pacing)?,
            epochs_per_stage,
            mode,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.thresholds.len()
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_per_stage.iter().sum()
    }
}

/// 1-based stage active at 0-based epoch `epoch`; clamps to the last stage.
pub fn stage_of_epoch(schedule: &CurriculumSchedule, epoch: usize) -> usize {
    let mut end = 0;
    for (s, &n) in schedule.epochs_per_stage.iter().enumerate() {
        end += n;
        if epoch < end {
            return s + 1;
        }
    }
    schedule.num_stages()
}

/// Records admitted at `stage` given each record's (λ_max, dimension).
pub fn active_subset(keys: &[(f64, usize)], schedule: &CurriculumSchedule, stage: usize) -> Result<StageSubset> {
    let stages = schedule.num_stages();
    if stage == 0 || stage > stages {
        return Err(Error::arg(format!("stage {stage} outside 1..={stages}")));
    }
    let last = stage == stages;
    let admit = |lambda: f64| -> bool {
        if last || schedule.mode == Mode::RandomMix {
            return true;
        }
        if !lambda.is_finite() {
            return false;
        }
        match schedule.mode {
            Mode::Forward => lambda <= schedule.thresholds[stage - 1],
            Mode::Reversed => lambda >= schedule.mirror_thresholds[stage - 1],
            Mode::RandomMix => true,
        }
    };
    let mut members: Vec<usize> = (0..keys.len()).filter(|&i| admit(keys[i].0)).collect();
    if members.is_empty() {
        return Err(Error::Scheduling(format!(
            "stage {stage} of the {} curriculum admits no records",
            schedule.mode
        )));
    }
    members.sort_by(|&a, &b| {
        keys[a]
            .0
            .total_cmp(&keys[b].0)
            .then(keys[a].1.cmp(&keys[b].1))
            .then(a.cmp(&b))
    });
    Ok(StageSubset { stage, members })
}

/// Every stage's subset, checking that stages only ever grow.
pub fn all_subsets(keys: &[(f64, usize)], schedule: &CurriculumSchedule) -> Result<Vec<StageSubset>> {
    let subsets = (1..=schedule.num_stages())
        .map(|s| active_subset(keys, schedule, s))
        .collect::<Result<Vec<_>>>()?;
    for w in subsets.windows(2) {
        let next: std::collections::HashSet<usize> = w[1].members.iter().copied().collect();
        if !w[0].members.iter().all(|m| next.contains(m)) {
            return Err(Error::Scheduling(format!(
                "stage {} is not contained in stage {}",
                w[0].stage, w[1].stage
            )));
        }
    }
    Ok(subsets)
}
