use ndarray::{s, Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{all_subsets, stage_of_epoch, CurriculumSchedule, StageSubset};
use crate::error::{Error, Result};

/// Teacher-forcing batch: `targets[b, t]` is the observation following
/// `inputs[b, t]`. Both are (batch, window, channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Array3<f64>,
    pub targets: Array3<f64>,
}

impl Batch {
    pub fn batch_size(&self) -> usize {
        self.inputs.dim().0
    }

    pub fn window_len(&self) -> usize {
        self.inputs.dim().1
    }

    pub fn channels(&self) -> usize {
        self.inputs.dim().2
    }
}

/// Draws `batch_size` windows: a member chosen uniformly, then a start
/// offset chosen uniformly among those leaving room for the shifted target.
pub fn sample_batch(
    pool: &[Array2<f64>],
    members: &[usize],
    batch_size: usize,
    window_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Batch> {
    if members.is_empty() {
        return Err(Error::Scheduling("cannot sample from an empty subset".into()));
    }
    if batch_size == 0 || window_len == 0 {
        return Err(Error::arg("batch_size and window_len must be positive"));
    }
    let channels = pool[members[0]].ncols();
    for &m in members {
        let series = &pool[m];
        if series.nrows() < window_len + 1 {
            return Err(Error::arg(format!(
                "series {m} has {} rows, window needs {}",
                series.nrows(),
                window_len + 1
            )));
        }
        if series.ncols() != channels {
            return Err(Error::arg("series in one subset must share a channel count"));
        }
    }
    let mut inputs = Array3::zeros((batch_size, window_len, channels));
    let mut targets = Array3::zeros((batch_size, window_len, channels));
    for b in 0..batch_size {
        let series = &pool[members[rng.random_range(0..members.len())]];
        let start = rng.random_range(0..series.nrows() - window_len);
        inputs
            .slice_mut(s![b, .., ..])
            .assign(&series.slice(s![start..start + window_len, ..]));
        targets
            .slice_mut(s![b, .., ..])
            .assign(&series.slice(s![start + 1..start + window_len + 1, ..]));
    }
    Ok(Batch { inputs, targets })
}

/// Supplies training batches for a given epoch.
pub trait BatchSource {
    fn sample(&self, epoch: usize, rng: &mut ChaCha8Rng) -> Result<Batch>;

    /// 1-based curriculum stage active at `epoch`.
    fn stage(&self, _epoch: usize) -> usize {
        1
    }
}

/// Curriculum-staged sampling over a pool of series.
#[derive(Debug, Clone)]
pub struct CurriculumSource {
    pool: Vec<Array2<f64>>,
    schedule: CurriculumSchedule,
    subsets: Vec<StageSubset>,
    pub batch_size: usize,
    pub window_len: usize,
}

impl CurriculumSource {
    /// `keys[i]` is the (λ_max, dimension) staging key of `pool[i]`.
    pub fn new(
        pool: Vec<Array2<f64>>,
        keys: &[(f64, usize)],
        schedule: CurriculumSchedule,
        batch_size: usize,
        window_len: usize,
    ) -> Result<Self> {
        if pool.len() != keys.len() {
            return Err(Error::arg("pool and keys differ in length"));
        }
        let subsets = all_subsets(keys, &schedule)?;
        Ok(CurriculumSource {
            pool,
            schedule,
            subsets,
            batch_size,
            window_len,
        })
    }

    pub fn subsets(&self) -> &[StageSubset] {
        &self.subsets
    }

    pub fn schedule(&self) -> &CurriculumSchedule {
        &self.schedule
    }
}

impl BatchSource for CurriculumSource {
    fn sample(&self, epoch: usize, rng: &mut ChaCha8Rng) -> Result<Batch> {
        let subset = &self.subsets[self.stage(epoch) - 1];
        sample_batch(&self.pool, &subset.members, self.batch_size, self.window_len, rng)
    }

    fn stage(&self, epoch: usize) -> usize {
        stage_of_epoch(&self.schedule, epoch)
    }
}

/// Windows drawn from a single series, for fine-tuning.
#[derive(Debug, Clone)]
pub struct SeriesSource {
    pool: [Array2<f64>; 1],
    pub batch_size: usize,
    pub window_len: usize,
}

impl SeriesSource {
    pub fn new(values: &[f64], batch_size: usize, window_len: usize) -> Result<Self> {
        if values.len() < window_len + 1 {
            return Err(Error::arg(format!(
                "segment of {} points is shorter than window {} + 1",
                values.len(),
                window_len
            )));
        }
        let series = Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape");
        Ok(SeriesSource {
            pool: [series],
            batch_size,
            window_len,
        })
    }
}

impl BatchSource for SeriesSource {
    fn sample(&self, _epoch: usize, rng: &mut ChaCha8Rng) -> Result<Batch> {
        sample_batch(&self.pool, &[0], self.batch_size, self.window_len, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pool(n: usize, len: usize) -> Vec<Array2<f64>> {
        (0..n)
            .map(|k| Array2::from_shape_fn((len, 1), |(i, _)| (k * 1000 + i) as f64))
            .collect()
    }

    #[test]
    fn targets_are_shifted_inputs() {
        let p = pool(3, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_batch(&p, &[0, 1, 2], 8, 16, &mut rng).unwrap();
        assert_eq!(b.inputs.dim(), (8, 16, 1));
        for i in 0..8 {
            for t in 0..16 {
                assert_eq!(b.targets[[i, t, 0]], b.inputs[[i, t, 0]] + 1.0);
            }
        }
    }

    #[test]
    fn single_member_and_determinism() {
        let p = pool(4, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = sample_batch(&p, &[2], 32, 10, &mut rng).unwrap();
        assert!(b.inputs.iter().all(|&v| (2000.0..2050.0).contains(&v)));
        let again = sample_batch(&p, &[2], 32, 10, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(b, again);
    }

    #[test]
    fn window_longer_than_series_rejected() {
        let p = pool(1, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_batch(&p, &[0], 1, 10, &mut rng), Err(Error::Argument(_))));
        assert!(sample_batch(&p, &[0], 1, 9, &mut rng).is_ok());
    }
}
