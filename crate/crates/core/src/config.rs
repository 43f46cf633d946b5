//! Declarative experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::complexity::{EmbeddingConfig, Weights};
use crate::curriculum::{CurriculumConfig, Mode};
use crate::dynamics::{sweep_parameters, Family, IntegratorConfig, Job};
use crate::error::{Error, Result};
use crate::evaluation::{EvalConfig, NoiseConfig, Rq2Config};
use crate::library::Column;
use crate::model::{ModelConfig, TrainingConfig};

/// One parameter grid over a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub family: Family,
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<f64>>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeldOutConfig {
    /// Lorenz-63 (ρ = 28) seeds reserved for evaluation
    pub seeds: Vec<u64>,
    /// evaluate every this many epochs during training
    pub eval_every: usize,
}

impl Default for HeldOutConfig {
    fn default() -> Self {
        HeldOutConfig {
            seeds: vec![1000, 1001, 1002, 1003],
            eval_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealDataConfig {
    pub path: PathBuf,
    pub column: Column,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_finetune_frac")]
    pub finetune_frac: f64,
}

fn default_train_frac() -> f64 {
    0.8
}

fn default_finetune_frac() -> f64 {
    0.1
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_orderings() -> Vec<Mode> {
    Mode::ALL.to_vec()
}

fn default_ordering() -> Mode {
    Mode::Forward
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub library: PathBuf,
    pub output: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sweeps: Vec<SweepConfig>,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub curriculum: CurriculumConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub held_out: HeldOutConfig,
    /// curriculum used by single-model training
    #[serde(default = "default_ordering")]
    pub ordering: Mode,
    #[serde(default = "default_orderings")]
    pub orderings: Vec<Mode>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real: Option<RealDataConfig>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: match e.path().to_string() {
                p if p == "." => "<root>".to_string(),
                p => p,
            },
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            file: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |path: &str, message: String| Error::Config {
            path: path.into(),
            message,
        };
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "seed list must not be empty".into()));
        }
        if self.orderings.is_empty() {
            return Err(invalid("orderings", "need at least one ordering".into()));
        }
        if self.curriculum.num_stages == 0 {
            return Err(invalid("curriculum.num_stages", "must be positive".into()));
        }
        self.model.validate().map_err(|e| invalid("model", e.to_string()))?;
        self.training.validate().map_err(|e| invalid("training", e.to_string()))?;
        self.eval.validate().map_err(|e| invalid("eval", e.to_string()))?;
        self.embedding.validate().map_err(|e| invalid("embedding", e.to_string()))?;
        Ok(())
    }

    /// Generation jobs of every sweep, in declaration order.
    pub fn jobs(&self) -> Result<Vec<Job>> {
        let mut jobs = Vec::new();
        for (i, s) in self.sweeps.iter().enumerate() {
            let part = sweep_parameters(s.family, &s.grid, &s.seeds, s.integrator).map_err(|e| Error::Config {
                path: format!("sweeps[{i}]"),
                message: e.to_string(),
            })?;
            jobs.extend(part);
        }
        Ok(jobs)
    }

    pub fn rq2(&self) -> Rq2Config {
        Rq2Config {
            model: self.model,
            training: self.training.clone(),
            curriculum: self.curriculum.clone(),
            orderings: self.orderings.clone(),
            seeds: self.seeds.clone(),
            eval: self.eval,
            eval_every: self.held_out.eval_every,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_defaulted() {
        let cfg = ExperimentConfig::parse(r#"{"library": "lib", "output": "out"}"#).unwrap();
        assert_eq!(cfg.curriculum.num_stages, 5);
        assert_eq!(cfg.training.epochs, 50);
        assert_eq!(cfg.training.learning_rate, 1e-3);
        assert_eq!(cfg.model.hidden_size, 32);
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        assert!(cfg.sweeps.is_empty());
    }

    #[test]
    fn misspelled_key_names_key_and_path() {
        let err = ExperimentConfig::parse(r#"{"library": "l", "output": "o", "training": {"leraning_rate": 0.1}}"#)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("leraning_rate"), "{msg}");
        assert!(msg.contains("training"), "{msg}");
    }

    #[test]
    fn missing_required_field() {
        let err = ExperimentConfig::parse(r#"{"library": "l"}"#).unwrap_err();
        assert!(err.to_string().contains("output"), "{err}");
    }

    #[test]
    fn type_mismatch_reports_path() {
        let err = ExperimentConfig::parse(r#"{"library": "l", "output": "o", "model": {"hidden_size": "big"}}"#)
            .unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "model.hidden_size"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        assert!(ExperimentConfig::parse(r#"{"library": "l", "output": "o", "seeds": []}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let text = r#"{
            "library": "lib", "output": "out", "seeds": [4, 5],
            "sweeps": [{"family": "lorenz63", "grid": {"rho": [14, 28]}, "seeds": [0, 1, 2]}],
            "curriculum": {"num_stages": 3, "pacing": "linear"},
            "training": {"epochs": 6, "learning_rate": 0.002},
            "noise": {"levels": [0, 0.5], "mode": "seed_window"},
            "real": {"path": "sunspots.csv", "column": "count"}
        }"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.jobs().unwrap().len(), 6);
        let again = ExperimentConfig::parse(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }
}
