use ccf_core::dynamics::{
    generate, integrate_trajectory, rk4_step, system_derivative, Family, IntegratorConfig, Job, KsSolver, SystemSpec,
};
use proptest::prelude::*;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn derivative_examples() {
    let l63 = SystemSpec::new(Family::Lorenz63);
    assert_eq!(system_derivative(&l63, &[0.0; 3], 0.0).unwrap(), vec![0.0; 3]);
    let d = system_derivative(&l63, &[1.0, 1.0, 1.0], 0.0).unwrap();
    assert!(close(&d, &[0.0, 26.0, -5.0 / 3.0], 1e-12), "{d:?}");

    let l96 = SystemSpec::with_params(Family::Lorenz96, [("F", 8.0), ("N", 8.0)]).unwrap();
    assert_eq!(system_derivative(&l96, &[8.0; 8], 0.0).unwrap(), vec![0.0; 8]);

    let vdp = SystemSpec::with_params(Family::VanDerPol, [("mu", 2.0)]).unwrap();
    assert_eq!(system_derivative(&vdp, &[0.0, 1.0], 0.0).unwrap(), vec![1.0, 2.0]);
}

#[test]
fn rk4_linear_fields_match_taylor_sums() {
    let h = 0.1f64;
    let up = rk4_step(|_, x, dx| dx[0] = x[0], &[1.0], 0.0, h).unwrap()[0];
    assert!((up - (1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0)).abs() < 1e-15);
    let down = rk4_step(|_, x, dx| dx[0] = -x[0], &[1.0], 0.0, h).unwrap()[0];
    assert!((down - 0.9048375).abs() < 1e-15);
    let still = rk4_step(|_, _, dx| dx.fill(0.0), &[3.0, -2.0], 0.0, h).unwrap();
    assert_eq!(still, vec![3.0, -2.0]);
}

#[test]
fn rk4_is_fourth_order() {
    let endpoint = |dt: f64| {
        let mut x = vec![1.0];
        let n = (1.0 / dt).round() as usize;
        for i in 0..n {
            x = rk4_step(|_, x, dx| dx[0] = -x[0], &x, i as f64 * dt, dt).unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    };
    let ratio = endpoint(0.1) / endpoint(0.05);
    assert!((14.0..=18.0).contains(&ratio), "{ratio}");
}

#[test]
fn ks_mean_is_conserved_over_long_runs() {
    let n = 64;
    let l = 22.0;
    let mut u: Vec<f64> = (0..n)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            0.1 + x.cos() * (1.0 + x.sin())
        })
        .collect();
    let mean = |u: &[f64]| u.iter().sum::<f64>() / u.len() as f64;
    let m0 = mean(&u);
    let mut solver = KsSolver::new(n, l, 0.25).unwrap();
    for _ in 0..10_000 {
        solver.step(&mut u).unwrap();
    }
    assert!((mean(&u) - m0).abs() < 1e-5);
    assert!(u.iter().all(|v| v.is_finite()));
}

#[test]
fn mackey_glass_unit_equilibrium() {
    let spec = SystemSpec::new(Family::MackeyGlass);
    let cfg = IntegratorConfig {
        dt: 0.1,
        burn_in_steps: 0,
        record_steps: 1000,
        record_stride: 1,
    };
    let traj = integrate_trajectory(&spec, &[1.0], &cfg, 0).unwrap();
    assert!(traj.samples.iter().all(|v| (v - 1.0).abs() < 1e-6));
}

fn quick_job(family: Family, seed: u64) -> Job {
    let spec = SystemSpec::new(family);
    Job {
        integrator: IntegratorConfig {
            record_steps: 512,
            ..spec.default_integrator()
        },
        spec,
        seed,
    }
}

#[test]
fn generation_is_bit_identical_per_seed() {
    for family in Family::ALL {
        let a = generate(&quick_job(family, 7)).unwrap();
        let b = generate(&quick_job(family, 7)).unwrap();
        assert_eq!(a, b, "{family}");
        let c = generate(&quick_job(family, 8)).unwrap();
        assert_ne!(a.samples, c.samples, "{family}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_trajectories_are_standardized(family_index in 0usize..7, seed in 0u64..1000) {
        let traj = generate(&quick_job(Family::ALL[family_index], seed)).unwrap();
        prop_assert!(traj.standardized);
        prop_assert_eq!(traj.samples.nrows(), 512);
        for c in 0..traj.channels() {
            let x = traj.channel(c);
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((sd - 1.0).abs() < 1e-6);
        }
    }
}
