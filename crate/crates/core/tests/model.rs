use ccf_core::curriculum::{Batch, SeriesSource};
use ccf_core::model::{
    bptt_gradients, finetune, forward_teacher_forced, loss_and_gradients, mse_loss, train, CellType, ModelConfig,
    ModelState, TrainingConfig,
};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(cell: CellType) -> ModelConfig {
    ModelConfig {
        cell,
        num_layers: 2,
        hidden_size: 8,
        input_channels: 1,
        window_len: 16,
    }
}

fn random_batch(rng: &mut ChaCha8Rng, b: usize, w: usize, c: usize) -> Batch {
    let series: Vec<f64> = (0..b * (w + 1) * c).map(|_| rng.random_range(-1.5..1.5)).collect();
    let inputs = Array3::from_shape_fn((b, w, c), |(i, t, k)| series[(i * (w + 1) + t) * c + k]);
    let targets = Array3::from_shape_fn((b, w, c), |(i, t, k)| series[(i * (w + 1) + t + 1) * c + k]);
    Batch { inputs, targets }
}

fn loss(state: &ModelState, batch: &Batch) -> f64 {
    mse_loss(&forward_teacher_forced(state, &batch.inputs).unwrap(), &batch.targets)
}

/// Largest |analytic − numeric| / max(|analytic|, |numeric|, 1e-6) over a
/// random sample of parameters.
fn max_relative_error(cfg: ModelConfig, seed: u64, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = ModelState::new(cfg, seed).unwrap();
    let batch = random_batch(&mut rng, 3, cfg.window_len, cfg.input_channels);
    let grads = bptt_gradients(&state, &batch).unwrap();
    let h = 1e-5;
    let n = state.params.len();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let i = rng.random_range(0..n);
        let mut plus = state.clone();
        plus.params.set_flat(i, state.params.get_flat(i) + h);
        let mut minus = state.clone();
        minus.params.set_flat(i, state.params.get_flat(i) - h);
        let numeric = (loss(&plus, &batch) - loss(&minus, &batch)) / (2.0 * h);
        let analytic = grads.get_flat(i);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn bptt_matches_central_differences() {
    for cell in [CellType::Gru, CellType::SimpleRnn] {
        for seed in 0..5 {
            let err = max_relative_error(small(cell), seed, 60);
            assert!(err <= 1e-4, "{cell} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn gradients_vanish_at_exact_fit() {
    let cfg = small(CellType::Gru);
    let state = ModelState::new(cfg, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut batch = random_batch(&mut rng, 2, 16, 1);
    batch.targets = forward_teacher_forced(&state, &batch.inputs).unwrap();
    let (l, g) = loss_and_gradients(&state, &batch).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn batch_gradient_is_mean_of_item_gradients() {
    for cell in [CellType::Gru, CellType::SimpleRnn] {
        let state = ModelState::new(small(cell), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let both = random_batch(&mut rng, 2, 16, 1);
        let item = |i: usize| Batch {
            inputs: both.inputs.slice(ndarray::s![i..i + 1, .., ..]).to_owned(),
            targets: both.targets.slice(ndarray::s![i..i + 1, .., ..]).to_owned(),
        };
        let g = bptt_gradients(&state, &both).unwrap();
        let g0 = bptt_gradients(&state, &item(0)).unwrap();
        let g1 = bptt_gradients(&state, &item(1)).unwrap();
        for ((a, b), c) in g.iter().zip(g0.iter()).zip(g1.iter()) {
            assert!((a - 0.5 * (b + c)).abs() <= 1e-10, "{a} vs {b}, {c}");
        }
    }
}

#[test]
fn loss_is_non_negative_and_zero_only_at_equality() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let b = random_batch(&mut rng, 2, 4, 2);
        assert!(mse_loss(&b.inputs, &b.targets) > 0.0);
        assert_eq!(mse_loss(&b.inputs, &b.inputs), 0.0);
    }
}

fn sine(len: usize, period: f64) -> Vec<f64> {
    (0..len).map(|i| (std::f64::consts::TAU * i as f64 / period).sin()).collect()
}

fn smoke_cfg(epochs: usize) -> TrainingConfig {
    TrainingConfig {
        epochs,
        steps_per_epoch: 20,
        batch_size: 16,
        seed: 4,
        ..Default::default()
    }
}

#[test]
fn training_reduces_loss_on_a_sine() {
    let mcfg = ModelConfig {
        window_len: 32,
        ..Default::default()
    };
    let source = SeriesSource::new(&sine(2000, 40.0), 16, 32).unwrap();
    let mut state = ModelState::new(mcfg, 1).unwrap();
    let log = train(&mut state, &source, &smoke_cfg(10), |_, _| Ok(None)).unwrap();
    assert_eq!(log.len(), 10);
    assert!(log[9].loss < log[0].loss, "{} vs {}", log[9].loss, log[0].loss);
}

#[test]
fn training_is_deterministic_and_zero_epochs_is_identity() {
    let mcfg = ModelConfig {
        window_len: 16,
        hidden_size: 8,
        ..Default::default()
    };
    let source = SeriesSource::new(&sine(500, 25.0), 8, 16).unwrap();
    let run = |epochs| {
        let mut s = ModelState::new(mcfg, 2).unwrap();
        let log = train(&mut s, &source, &smoke_cfg(epochs), |e, _| Ok(Some(e as f64))).unwrap();
        (s, log)
    };
    let (a, la) = run(3);
    let (b, lb) = run(3);
    assert_eq!(la, lb);
    assert_eq!(a.params.digest(), b.params.digest());
    let (z, lz) = run(0);
    assert!(lz.is_empty());
    assert_eq!(z, ModelState::new(mcfg, 2).unwrap());
}

#[test]
fn finetune_uses_its_own_rate_and_helps() {
    let mcfg = ModelConfig {
        window_len: 32,
        ..Default::default()
    };
    let mut state = ModelState::new(mcfg, 6).unwrap();
    let pretrain = SeriesSource::new(&sine(2000, 40.0), 16, 32).unwrap();
    train(&mut state, &pretrain, &smoke_cfg(3), |_, _| Ok(None)).unwrap();

    let target = sine(1200, 23.0);
    let (segment, held_out) = target.split_at(600);
    let eval = |s: &ModelState| {
        let w = 32;
        let n = held_out.len() - w - 1;
        let inputs = Array3::from_shape_fn((n, w, 1), |(i, t, _)| held_out[i + t]);
        let targets = Array3::from_shape_fn((n, w, 1), |(i, t, _)| held_out[i + t + 1]);
        mse_loss(&forward_teacher_forced(s, &inputs).unwrap(), &targets)
    };
    let before = eval(&state);

    let cfg = TrainingConfig {
        epochs: 0,
        ..smoke_cfg(0)
    };
    let mut unchanged = state.clone();
    finetune(&mut unchanged, segment, &cfg).unwrap();
    assert_eq!(unchanged.params, state.params);

    let cfg = smoke_cfg(5);
    let log = finetune(&mut state, segment, &cfg).unwrap();
    assert!(log.iter().all(|l| l.learning_rate == 5e-4));
    let after = eval(&state);
    assert!(after < before, "{after} vs {before}");
}

#[test]
fn stepwise_inference_matches_teacher_forcing() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for cell in [CellType::Gru, CellType::SimpleRnn] {
        let cfg = ModelConfig {
            input_channels: 2,
            ..small(cell)
        };
        let state = ModelState::new(cfg, 4).unwrap();
        let batch = random_batch(&mut rng, 3, 16, 2);
        let tf = forward_teacher_forced(&state, &batch.inputs).unwrap();
        for b in 0..3 {
            let mut h = state.initial_hidden();
            for t in 0..16 {
                let x: Vec<f64> = batch.inputs.slice(ndarray::s![b, t, ..]).to_vec();
                let y = state.step(&mut h, &x).unwrap();
                for (c, v) in y.iter().enumerate() {
                    assert!((v - tf[[b, t, c]]).abs() < 1e-12, "{cell} b{b} t{t}");
                }
            }
        }
    }
}
