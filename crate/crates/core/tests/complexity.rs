use ccf_core::complexity::{
    benettin_lambda_oracle, estimate_lambda, score_trajectory, wolf_lambda, EmbeddingConfig, Weights,
};
use ccf_core::dynamics::{generate, Family, IntegratorConfig, Job, SystemSpec, Trajectory};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const LORENZ_LAMBDA: f64 = 0.906;

fn trajectory(spec: SystemSpec, seed: u64) -> Trajectory {
    let integrator = IntegratorConfig::for_family(spec.family);
    generate(&Job { spec, seed, integrator }).unwrap()
}

fn lorenz(rho: f64) -> SystemSpec {
    SystemSpec::lorenz63(10.0, rho, 8.0 / 3.0).unwrap()
}

fn oracle(spec: &SystemSpec) -> f64 {
    benettin_lambda_oracle(spec, &vec![1.0; spec.state_dim], 5000.0, 0.005).unwrap()
}

#[test]
fn benettin_lorenz_reference_value() {
    let l = benettin_lambda_oracle(&lorenz(28.0), &[1.0, 1.0, 1.0], 5000.0, 1e-3).unwrap();
    assert!((l - LORENZ_LAMBDA).abs() <= 0.02, "{l}");
}

#[test]
fn benettin_stable_under_dt_halving() {
    let spec = lorenz(28.0);
    let a = benettin_lambda_oracle(&spec, &[1.0, 1.0, 1.0], 2000.0, 2e-3).unwrap();
    let b = benettin_lambda_oracle(&spec, &[1.0, 1.0, 1.0], 2000.0, 1e-3).unwrap();
    assert!(((a - b) / b).abs() < 0.02, "{a} vs {b}");
}

#[test]
fn wolf_matches_oracle_on_lorenz_and_rossler() {
    let rossler = SystemSpec::new(Family::Rossler);
    for spec in [lorenz(28.0), lorenz(35.0), rossler] {
        let reference = oracle(&spec);
        for seed in 0..3 {
            let traj = trajectory(spec.clone(), seed);
            let est = estimate_lambda(&traj, &EmbeddingConfig::default()).unwrap();
            assert!(
                (est - reference).abs() <= 0.15,
                "{spec} seed {seed}: wolf {est}, oracle {reference}"
            );
        }
    }
}

#[test]
fn wolf_sinusoid_is_neutral() {
    let s: Vec<f64> = (0..4096)
        .map(|i| (std::f64::consts::TAU * i as f64 / 64.0).sin())
        .collect();
    let cfg = EmbeddingConfig::default().with_delay_for(&s);
    let l = wolf_lambda(&s, &cfg, 1.0).unwrap();
    assert!(l.abs() < 0.05, "{l}");
}

#[test]
fn wolf_sign_fidelity() {
    let specs = [
        lorenz(14.0),
        lorenz(28.0),
        lorenz(35.0),
        SystemSpec::new(Family::VanDerPol),
        SystemSpec::with_params(Family::VanDerPol, [("mu", 2.0)]).unwrap(),
        SystemSpec::new(Family::Rossler),
    ];
    let mut checked = 0;
    for spec in specs {
        let reference = oracle(&spec);
        for seed in 0..2 {
            let est = estimate_lambda(&trajectory(spec.clone(), seed), &EmbeddingConfig::default()).unwrap();
            if reference > 0.2 {
                assert!(est > 0.2, "{spec}: chaotic, wolf {est}");
                checked += 1;
            } else if reference < 0.05 {
                assert!(est < 0.05, "{spec}: non-chaotic, wolf {est}");
                checked += 1;
            }
        }
    }
    assert!(checked >= 10);
}

#[test]
fn gaussian_noise_scores_above_any_chaotic_rate() {
    let cfg = EmbeddingConfig::default();
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = (0..4096).map(|_| StandardNormal.sample(&mut rng)).collect();
        let l = wolf_lambda(&s, &cfg.with_delay_for(&s), 1.0).unwrap();
        assert!(l > 0.2, "{l}");
        // per recorded step, Lorenz at its default sampling grows about 0.05
        assert!(l > 3.0 * LORENZ_LAMBDA * 0.05, "{l}");
    }
}

#[test]
fn sweep_regimes_order_scores() {
    let low = score_trajectory(&trajectory(lorenz(14.0), 3), &EmbeddingConfig::default(), Weights::default());
    let high = score_trajectory(&trajectory(lorenz(28.0), 3), &EmbeddingConfig::default(), Weights::default());
    assert!(low.lambda_max < 0.0, "{low:?}");
    assert!(high.lambda_max > 0.8, "{high:?}");
}

#[test]
fn mackey_glass_is_chaotic_by_wolf() {
    let traj = trajectory(SystemSpec::new(Family::MackeyGlass), 0);
    let l = estimate_lambda(&traj, &EmbeddingConfig::default()).unwrap();
    assert!(l > 0.0, "{l}");
}

#[test]
fn constant_series_tags_sentinel() {
    let mut traj = trajectory(lorenz(28.0), 0);
    traj.samples.fill(0.0);
    let score = score_trajectory(&traj, &EmbeddingConfig::default(), Weights::default());
    assert!(score.is_sentinel());
}
