use std::collections::HashSet;

use ccf_core::curriculum::{
    active_subset, all_subsets, make_stage_thresholds, sample_batch, BatchSource, CurriculumConfig,
    CurriculumSchedule, CurriculumSource, Mode, Pacing,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn tagged_pool(n: usize, len: usize) -> Vec<Array2<f64>> {
    (0..n).map(|k| Array2::from_elem((len, 1), k as f64)).collect()
}

fn counts(batches: impl Iterator<Item = ccf_core::curriculum::Batch>, n: usize) -> Vec<u64> {
    let mut c = vec![0u64; n];
    for b in batches {
        for i in 0..b.batch_size() {
            c[b.inputs[[i, 0, 0]] as usize] += 1;
        }
    }
    c
}

fn chi_square_passes(counts: &[u64], alpha: f64) -> bool {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat) > alpha
}

#[test]
fn four_record_draws_are_binomially_uniform() {
    let pool = tagged_pool(4, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let b = sample_batch(&pool, &[0, 1, 2, 3], 10_000, 4, &mut rng).unwrap();
    let c = counts(std::iter::once(b), 4);
    let sd = (10_000.0f64 * 0.25 * 0.75).sqrt();
    for &k in &c {
        assert!((k as f64 - 2500.0).abs() <= 3.0 * sd, "{c:?}");
    }
    assert!(chi_square_passes(&c, 0.01), "{c:?}");
}

#[test]
fn random_mix_is_uniform_over_library() {
    let n = 25;
    let scores: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
    let keys: Vec<(f64, usize)> = scores.iter().map(|&s| (s, 3)).collect();
    let schedule = CurriculumSchedule::build(&scores, &CurriculumConfig::default(), 50, Mode::RandomMix).unwrap();
    let source = CurriculumSource::new(tagged_pool(n, 30), &keys, schedule, 32, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batches = (0..50).flat_map(|e| (0..20).map(move |_| e)).map(|e| source.sample(e, &mut rng).unwrap());
    let c = counts(batches.collect::<Vec<_>>().into_iter(), n);
    assert!(chi_square_passes(&c, 0.01), "{c:?}");
}

fn arb_scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![9 => (-1.0..3.0f64).prop_map(|v| (v * 100.0).round() / 100.0), 1 => Just(f64::INFINITY)],
        1..60,
    )
    .prop_filter("needs a finite score", |v| v.iter().any(|s| s.is_finite()))
}

proptest! {
    #[test]
    fn forward_stages_are_nested_and_cover(scores in arb_scores(), stages in 1usize..8, linear in any::<bool>()) {
        let pacing = if linear { Pacing::Linear } else { Pacing::Quantile };
        let cfg = CurriculumConfig { num_stages: stages, pacing, epochs_per_stage: None };
        let keys: Vec<(f64, usize)> = scores.iter().map(|&s| (s, 2)).collect();
        for mode in Mode::ALL {
            let sch = CurriculumSchedule::build(&scores, &cfg, 3 * stages, mode).unwrap();
            prop_assert!(sch.thresholds.windows(2).all(|w| w[0] <= w[1]));
            let subsets = all_subsets(&keys, &sch).unwrap();
            for w in subsets.windows(2) {
                let next: HashSet<_> = w[1].members.iter().collect();
                prop_assert!(w[0].members.iter().all(|m| next.contains(m)));
            }
            prop_assert_eq!(subsets.last().unwrap().members.len(), scores.len());
            if mode == Mode::Forward {
                for sub in &subsets[..stages - 1] {
                    let tau = sch.thresholds[sub.stage - 1];
                    let expect: HashSet<usize> = (0..scores.len()).filter(|&i| scores[i] <= tau).collect();
                    prop_assert_eq!(sub.members.iter().copied().collect::<HashSet<_>>(), expect);
                }
            }
        }
    }

    #[test]
    fn reversed_and_forward_first_stages_meet_only_at_boundaries(scores in arb_scores(), stages in 2usize..8) {
        let cfg = CurriculumConfig { num_stages: stages, ..Default::default() };
        let keys: Vec<(f64, usize)> = scores.iter().map(|&s| (s, 2)).collect();
        let fwd = CurriculumSchedule::build(&scores, &cfg, stages, Mode::Forward).unwrap();
        let rev = CurriculumSchedule::build(&scores, &cfg, stages, Mode::Reversed).unwrap();
        let a: HashSet<usize> = active_subset(&keys, &fwd, 1).unwrap().members.into_iter().collect();
        let b: HashSet<usize> = active_subset(&keys, &rev, 1).unwrap().members.into_iter().collect();
        for &i in a.intersection(&b) {
            prop_assert!(scores[i] <= fwd.thresholds[0] && scores[i] >= rev.mirror_thresholds[0]);
            prop_assert!(rev.mirror_thresholds[0] <= fwd.thresholds[0]);
        }
        let mut distinct: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
        distinct.sort_by(f64::total_cmp);
        let n = distinct.len();
        distinct.dedup();
        if distinct.len() == n && 2 * n.div_ceil(stages) <= n {
            prop_assert!(a.is_disjoint(&b));
        }
    }

    #[test]
    fn quantile_thresholds_are_scores(scores in arb_scores(), stages in 1usize..10) {
        let t = make_stage_thresholds(&scores, stages, Pacing::Quantile).unwrap();
        for v in &t {
            prop_assert!(scores.contains(v));
        }
        let max = scores.iter().copied().filter(|s| s.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(*t.last().unwrap(), max);
    }
}
