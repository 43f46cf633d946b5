use ndarray::{Array2, Zip};

use super::{Params, TrainingConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        let zeros: Vec<Array2<f64>> = params.tensors.iter().map(|t| Array2::zeros(t.dim())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update at learning rate `lr`, with the weight
/// decay added to the gradient (L2 coupled into the moments).
pub fn adam_step(params: &mut Params, adam: &mut AdamState, grads: &Params, cfg: &TrainingConfig, lr: f64) {
    adam.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powf(adam.step as f64);
    let c2 = 1.0 - b2.powf(adam.step as f64);
    let wd = cfg.weight_decay;
    let eps = cfg.adam_eps;
    for (((p, g), m), v) in params
        .tensors
        .iter_mut()
        .zip(&grads.tensors)
        .zip(&mut adam.m)
        .zip(&mut adam.v)
    {
        Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            let g = g + wd * *p;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn setup() -> (Params, AdamState, TrainingConfig) {
        let p = Params::init(&ModelConfig::default(), 2);
        let a = AdamState::new(&p);
        let cfg = TrainingConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        (p, a, cfg)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut p, mut a, cfg) = setup();
        let before = p.clone();
        let g = Params {
            tensors: p.tensors.iter().map(|t| Array2::zeros(t.dim())).collect(),
        };
        adam_step(&mut p, &mut a, &g, &cfg, cfg.learning_rate);
        assert_eq!(p, before);
        assert_eq!(a.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut p, mut a, cfg) = setup();
        let before = p.clone();
        let mut g = Params {
            tensors: p.tensors.iter().map(|t| Array2::zeros(t.dim())).collect(),
        };
        g.tensors[0][[0, 0]] = 0.37;
        g.tensors[1][[0, 0]] = -2.5;
        adam_step(&mut p, &mut a, &g, &cfg, cfg.learning_rate);
        let lr = cfg.learning_rate;
        assert!((p.tensors[0][[0, 0]] - before.tensors[0][[0, 0]] + lr).abs() < 1e-6 * lr);
        assert!((p.tensors[1][[0, 0]] - before.tensors[1][[0, 0]] - lr).abs() < 1e-6 * lr);
    }

    #[test]
    fn updates_are_deterministic() {
        let (p0, a0, cfg) = setup();
        let g = Params::init(&ModelConfig::default(), 9);
        let run = || {
            let (mut p, mut a) = (p0.clone(), a0.clone());
            for _ in 0..3 {
                adam_step(&mut p, &mut a, &g, &cfg, 1e-3);
            }
            p
        };
        let (x, y) = (run(), run());
        let bits = |p: &Params| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&x), bits(&y));
    }
}
