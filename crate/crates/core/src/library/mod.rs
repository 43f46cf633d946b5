//! On-disk trajectory library, real-series ingestion and train/test splits.
//!
//! A library directory holds `manifest.json` (a JSON array of records) and a
//! `trajectories/` folder with one binary payload per record.

mod payload;
mod real;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::{score_trajectory, ComplexityScore, EmbeddingConfig, Regime, Weights};
use crate::dynamics::{generate, Job, Kind, SystemSpec, Trajectory};
use crate::error::{Error, Result};

pub use payload::{decode_payload, encode_payload, read_payload, sha256_hex, write_payload, TRAJECTORY_MAGIC};
pub use real::{finetune_subset, load_real_series, split_series, Column, RealSeries, SeriesStats};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAJECTORY_DIR: &str = "trajectories";
/// Flag set on delay-equation records whose dimension proxy is the observable
/// dimension rather than the (infinite) phase-space dimension.
pub const FLAG_DDE_DIMENSION: &str = "dde_dimension_proxy";
pub const FLAG_UNSCORED: &str = "lambda_estimate_failed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryRecord {
    pub id: String,
    pub file: String,
    pub seed: u64,
    #[serde(flatten)]
    pub spec: SystemSpec,
    #[serde(flatten)]
    pub score: ComplexityScore,
    pub regime: Regime,
    pub dt_effective: f64,
    #[serde(default)]
    pub flags: Vec<String>,
    /// sha256 of the payload file
    pub checksum: String,
}

/// A record together with its samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LibraryEntry {
    pub record: LibraryRecord,
    pub samples: Array2<f64>,
}

impl LibraryEntry {
    /// Annotates a standardized trajectory. The checksum is filled in when
    /// the entry is written.
    pub fn from_trajectory(traj: Trajectory, embedding: &EmbeddingConfig, weights: Weights) -> Self {
        let score = score_trajectory(&traj, embedding, weights);
        let id = record_id(&traj.spec, traj.seed);
        let mut flags = Vec::new();
        if traj.spec.kind == Kind::Dde {
            flags.push(FLAG_DDE_DIMENSION.to_string());
        }
        if score.is_sentinel() {
            flags.push(FLAG_UNSCORED.to_string());
        }
        LibraryEntry {
            record: LibraryRecord {
                file: format!("{TRAJECTORY_DIR}/{id}.bin"),
                id,
                seed: traj.seed,
                regime: Regime::from_lambda(score.lambda_max),
                score,
                spec: traj.spec,
                dt_effective: traj.dt_effective,
                flags,
                checksum: String::new(),
            },
            samples: traj.samples,
        }
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            samples: self.samples.clone(),
            dt_effective: self.record.dt_effective,
            spec: self.record.spec.clone(),
            seed: self.record.seed,
            standardized: true,
        }
    }
}

/// `{family}-{first 8 hex digits of sha256(params)}-s{seed}`
pub fn record_id(spec: &SystemSpec, seed: u64) -> String {
    let params = serde_json::to_vec(&spec.params).expect("parameter maps serialize");
    format!("{}-{}-s{seed}", spec.family, &sha256_hex(&params)[..8])
}

/// Generates, standardizes and scores every job in parallel. Jobs that blow
/// up or produce a degenerate channel are logged and returned separately.
pub fn build_entries(
    jobs: &[Job],
    embedding: &EmbeddingConfig,
    weights: Weights,
) -> (Vec<LibraryEntry>, Vec<(Job, Error)>) {
    let results: Vec<(usize, Result<LibraryEntry>)> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, job)| {
            (
                i,
                generate(job).map(|t| LibraryEntry::from_trajectory(t, embedding, weights)),
            )
        })
        .collect();
    let mut entries = Vec::new();
    let mut dropped = Vec::new();
    for (i, r) in results {
        match r {
            Ok(e) => entries.push(e),
            Err(err) => {
                log::warn!("dropping {} seed {}: {err}", jobs[i].spec, jobs[i].seed);
                dropped.push((jobs[i].clone(), err));
            }
        }
    }
    (entries, dropped)
}

fn check_unique(records: impl IntoIterator<Item = String>, file: &Path) -> Result<()> {
    let mut seen = HashSet::new();
    for id in records {
        if !seen.insert(id.clone()) {
            return Err(Error::Load {
                file: file.to_path_buf(),
                reason: format!("duplicate record id `{id}`"),
            });
        }
    }
    Ok(())
}

/// Canonical manifest bytes: compact JSON of the record array.
pub fn manifest_bytes(records: &[LibraryRecord]) -> Vec<u8> {
    serde_json::to_vec(records).expect("records serialize")
}

pub fn manifest_digest(records: &[LibraryRecord]) -> String {
    sha256_hex(&manifest_bytes(records))
}

/// Writes payloads and the manifest under `dir`, filling in checksums, and
/// returns the manifest digest.
pub fn write_library(entries: &mut [LibraryEntry], dir: &Path) -> Result<String> {
    check_unique(entries.iter().map(|e| e.record.id.clone()), &dir.join(MANIFEST_FILE))?;
    fs::create_dir_all(dir.join(TRAJECTORY_DIR))?;
    let checksums: Vec<Result<String>> = entries
        .par_iter()
        .map(|e| write_payload(&dir.join(&e.record.file), &e.samples))
        .collect();
    for (e, c) in entries.iter_mut().zip(checksums) {
        e.record.checksum = c?;
    }
    let records: Vec<LibraryRecord> = entries.iter().map(|e| e.record.clone()).collect();
    let body = serde_json::to_vec_pretty(&records).expect("records serialize");
    fs::write(dir.join(MANIFEST_FILE), body)?;
    Ok(manifest_digest(&records))
}

/// Reads and validates the manifest without loading payloads.
pub fn read_manifest(dir: &Path) -> Result<Vec<LibraryRecord>> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::Load {
        file: path.clone(),
        reason: e.to_string(),
    })?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    let records: Vec<LibraryRecord> = serde_path_to_error::deserialize(de).map_err(|e| Error::Load {
        file: path.clone(),
        reason: format!("{} at `{}`", e.inner(), e.path()),
    })?;
    check_unique(records.iter().map(|r| r.id.clone()), &path)?;
    Ok(records)
}

/// Loads one record's payload and verifies its checksum and shape.
pub fn load_samples(dir: &Path, record: &LibraryRecord) -> Result<Array2<f64>> {
    let path: PathBuf = dir.join(&record.file);
    let bytes = fs::read(&path).map_err(|e| Error::Load {
        file: path.clone(),
        reason: e.to_string(),
    })?;
    let samples = decode_payload(&bytes, &path)?;
    if !record.checksum.is_empty() && sha256_hex(&bytes) != record.checksum {
        return Err(Error::Load {
            file: path,
            reason: "checksum mismatch".into(),
        });
    }
    if samples.ncols() != record.spec.state_dim {
        return Err(Error::Load {
            file: path,
            reason: format!(
                "payload has {} channels, record declares {}",
                samples.ncols(),
                record.spec.state_dim
            ),
        });
    }
    Ok(samples)
}

pub fn read_library(dir: &Path) -> Result<Vec<LibraryEntry>> {
    let records = read_manifest(dir)?;
    records
        .into_par_iter()
        .map(|record| {
            let samples = load_samples(dir, &record)?;
            Ok(LibraryEntry { record, samples })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Family;

    fn entry(seed: u64, lambda: f64) -> LibraryEntry {
        let spec = SystemSpec::new(Family::Lorenz63);
        let id = record_id(&spec, seed);
        LibraryEntry {
            record: LibraryRecord {
                file: format!("{TRAJECTORY_DIR}/{id}.bin"),
                id,
                seed,
                score: ComplexityScore::new(lambda, 3, Weights::default()),
                regime: Regime::from_lambda(lambda),
                spec,
                dt_effective: 0.05,
                flags: vec![],
                checksum: String::new(),
            },
            samples: Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.1),
        }
    }

    #[test]
    fn ids_are_stable_and_distinct() {
        let spec = SystemSpec::new(Family::Lorenz63);
        assert_eq!(record_id(&spec, 3), record_id(&spec, 3));
        assert_ne!(record_id(&spec, 3), record_id(&spec, 4));
        let other = SystemSpec::lorenz63(10.0, 35.0, 8.0 / 3.0).unwrap();
        assert_ne!(record_id(&spec, 3), record_id(&other, 3));
        assert!(record_id(&spec, 3).starts_with("lorenz63-"));
        assert!(record_id(&spec, 3).ends_with("-s3"));
    }

    #[test]
    fn manifest_has_external_fields() {
        let e = entry(1, f64::INFINITY);
        let v = serde_json::to_value(&e.record).unwrap();
        for key in [
            "id", "file", "seed", "family", "params", "kind", "state_dim", "lambda_max", "dimension",
            "composite", "regime",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["lambda_max"], "inf");
        let back: LibraryRecord = serde_json::from_value(v).unwrap();
        assert!(back.score.is_sentinel());
    }

    #[test]
    fn duplicate_ids_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = vec![entry(1, 0.5), entry(1, 0.5)];
        assert!(matches!(write_library(&mut entries, dir.path()), Err(Error::Load { .. })));
    }
}
