use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Family, IntegratorConfig, SystemSpec};
use crate::error::{Error, Result};

/// A single generation job: a spec integrated from a seed-drawn initial
/// condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub spec: SystemSpec,
    pub seed: u64,
    pub integrator: IntegratorConfig,
}

/// Cartesian product of the parameter grid and the seed list. Parameters not
/// named in `grid` keep the family defaults. Jobs are ordered by the value
/// index of each parameter in name order (first name outermost), then by
/// seed.
pub fn sweep_parameters(
    family: Family,
    grid: &BTreeMap<String, Vec<f64>>,
    seeds: &[u64],
    integrator: Option<IntegratorConfig>,
) -> Result<Vec<Job>> {
    let defaults = family.default_params();
    for (name, values) in grid {
        if !defaults.contains_key(name) {
            return Err(Error::arg(format!(
                "unknown parameter `{name}` for family {family}"
            )));
        }
        if values.is_empty() {
            return Err(Error::arg(format!("empty value list for `{name}`")));
        }
    }
    let integrator = integrator.unwrap_or_else(|| IntegratorConfig::for_family(family));
    integrator.validate()?;

    let axes: Vec<(&String, &Vec<f64>)> = grid.iter().collect();
    let points: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut jobs = Vec::with_capacity(points * seeds.len());
    let mut index = vec![0usize; axes.len()];
    for _ in 0..points {
        let mut params = defaults.clone();
        for ((name, values), &i) in axes.iter().zip(&index) {
            params.insert((*name).clone(), values[i]);
        }
        let spec = SystemSpec::from_params(family, params)?;
        for &seed in seeds {
            jobs.push(Job {
                spec: spec.clone(),
                seed,
                integrator,
            });
        }
        // odometer increment, last axis fastest
        for d in (0..axes.len()).rev() {
            index[d] += 1;
            if index[d] < axes[d].1.len() {
                break;
            }
            index[d] = 0;
        }
    }
    Ok(jobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(entries: &[(&str, &[f64])]) -> BTreeMap<String, Vec<f64>> {
        entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_vec()))
            .collect()
    }

    #[test]
    fn empty_seed_list_gives_no_jobs() {
        let jobs = sweep_parameters(Family::Lorenz63, &grid(&[("rho", &[28.0])]), &[], None).unwrap();
        assert!(jobs.is_empty());
    }

    #[test]
    fn product_count_and_order() {
        let jobs = sweep_parameters(
            Family::Lorenz63,
            &grid(&[("rho", &[14.0, 28.0])]),
            &[1, 2, 3],
            None,
        )
        .unwrap();
        assert_eq!(jobs.len(), 6);
        let keys: Vec<(f64, u64)> = jobs.iter().map(|j| (j.spec.param("rho"), j.seed)).collect();
        assert_eq!(
            keys,
            vec![(14.0, 1), (14.0, 2), (14.0, 3), (28.0, 1), (28.0, 2), (28.0, 3)]
        );
    }

    #[test]
    fn multi_axis_order_is_lexicographic_by_name() {
        let jobs = sweep_parameters(
            Family::Rossler,
            &grid(&[("c", &[4.0, 5.7]), ("a", &[0.1, 0.2])]),
            &[0],
            None,
        )
        .unwrap();
        let keys: Vec<(f64, f64)> = jobs
            .iter()
            .map(|j| (j.spec.param("a"), j.spec.param("c")))
            .collect();
        assert_eq!(keys, vec![(0.1, 4.0), (0.1, 5.7), (0.2, 4.0), (0.2, 5.7)]);
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let err = sweep_parameters(Family::Lorenz63, &grid(&[("F", &[8.0])]), &[0], None);
        assert!(matches!(err, Err(Error::Argument(_))));
    }
}
