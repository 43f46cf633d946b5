//! From-scratch recurrent forecaster: stacked SimpleRNN or GRU layers with a
//! linear read-out, trained by teacher forcing with BPTT and Adam.

mod adam;
mod checkpoint;
mod network;
mod train;

use std::fmt;

use ndarray::Array2;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use network::{
    bptt_gradients, cell_forward, forward_teacher_forced, loss_and_gradients, mse_loss, Hidden,
};
pub use train::{finetune, train, EpochLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    SimpleRnn,
    Gru,
}

impl CellType {
    /// Number of stacked gate blocks per layer.
    pub fn gates(self) -> usize {
        match self {
            CellType::SimpleRnn => 1,
            CellType::Gru => 3,
        }
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellType::SimpleRnn => "simple_rnn",
            CellType::Gru => "gru",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub cell: CellType,
    pub num_layers: usize,
    pub hidden_size: usize,
    pub input_channels: usize,
    pub window_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cell: CellType::Gru,
            num_layers: 2,
            hidden_size: 32,
            input_channels: 1,
            window_len: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_size == 0 || self.input_channels == 0 || self.window_len == 0 {
            return Err(Error::arg("model dimensions must all be positive"));
        }
        Ok(())
    }

    pub fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_channels
        } else {
            self.hidden_size
        }
    }

    /// Shapes of all parameter tensors, in storage order: per layer the input
    /// weights, recurrent weights and bias row, then the head weights and
    /// bias row.
    pub fn tensor_shapes(&self) -> Vec<(String, (usize, usize))> {
        let h = self.hidden_size;
        let g = self.cell.gates() * h;
        let mut shapes = Vec::new();
        for l in 0..self.num_layers {
            shapes.push((format!("layer{l}.w"), (g, self.layer_input(l))));
            shapes.push((format!("layer{l}.u"), (g, h)));
            shapes.push((format!("layer{l}.b"), (1, g)));
        }
        shapes.push(("head.w".into(), (self.input_channels, h)));
        shapes.push(("head.b".into(), (1, self.input_channels)));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_shapes().iter().map(|(_, (r, c))| r * c).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub seed: u64,
    pub finetune_learning_rate: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 1e-5,
            batch_size: 32,
            epochs: 50,
            steps_per_epoch: 50,
            seed: 0,
            finetune_learning_rate: 5e-4,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !in_unit(self.adam_beta1) || !in_unit(self.adam_beta2) {
            return Err(Error::arg("Adam betas must lie in (0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.finetune_learning_rate > 0.0 && self.adam_eps > 0.0) {
            return Err(Error::arg("learning rates and eps must be positive"));
        }
        if self.weight_decay < 0.0 || self.batch_size == 0 {
            return Err(Error::arg("need weight_decay >= 0 and batch_size >= 1"));
        }
        Ok(())
    }
}

/// Parameter (or gradient) tensors laid out as [`ModelConfig::tensor_shapes`].
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tensors: Vec<Array2<f64>>,
}

impl Params {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Params {
            tensors: cfg
                .tensor_shapes()
                .into_iter()
                .map(|(_, shape)| Array2::zeros(shape))
                .collect(),
        }
    }

    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = cfg
            .tensor_shapes()
            .into_iter()
            .map(|(name, (r, c))| {
                if name.ends_with(".b") {
                    return Array2::zeros((r, c));
                }
                let bound = 1.0 / (c as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("positive bound");
                Array2::from_shape_simple_fn((r, c), || dist.sample(&mut rng))
            })
            .collect();
        Params { tensors }
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view of the (tensor, element) sequence.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.tensors.iter().flat_map(|t| t.iter())
    }

    pub fn get_flat(&self, mut i: usize) -> f64 {
        for t in &self.tensors {
            if i < t.len() {
                return t.as_slice().expect("standard layout")[i];
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn set_flat(&mut self, mut i: usize, v: f64) {
        for t in &mut self.tensors {
            if i < t.len() {
                t.as_slice_mut().expect("standard layout")[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }

    pub(crate) fn layer(&self, l: usize) -> (&Array2<f64>, &Array2<f64>, &Array2<f64>) {
        (&self.tensors[3 * l], &self.tensors[3 * l + 1], &self.tensors[3 * l + 2])
    }

    pub(crate) fn head(&self) -> (&Array2<f64>, &Array2<f64>) {
        let n = self.tensors.len();
        (&self.tensors[n - 2], &self.tensors[n - 1])
    }

    /// sha256 over the little-endian parameter bytes.
    pub fn digest(&self) -> String {
        let bytes: Vec<u8> = self.iter().flat_map(|v| v.to_le_bytes()).collect();
        crate::library::sha256_hex(&bytes)
    }
}

/// Network parameters with their optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: Params,
    pub adam: AdamState,
}

impl ModelState {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config, seed);
        Ok(ModelState {
            adam: AdamState::new(&params),
            config,
            params,
        })
    }

    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = Params::zeros(&config);
        Ok(ModelState {
            adam: AdamState::new(&params),
            config,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_formula() {
        for (cell, gates) in [(CellType::Gru, 3), (CellType::SimpleRnn, 1)] {
            for (layers, hidden, channels) in [(1, 8, 1), (2, 32, 1), (3, 5, 4)] {
                let cfg = ModelConfig {
                    cell,
                    num_layers: layers,
                    hidden_size: hidden,
                    input_channels: channels,
                    window_len: 16,
                };
                let mut expected = 0;
                for l in 0..layers {
                    let input = if l == 0 { channels } else { hidden };
                    expected += gates * (hidden * (input + hidden) + hidden);
                }
                expected += hidden * channels + channels;
                assert_eq!(cfg.parameter_count(), expected);
                assert_eq!(Params::init(&cfg, 1).len(), expected);
            }
        }
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let cfg = ModelConfig::default();
        let p = Params::init(&cfg, 3);
        for ((name, (_, fan_in)), t) in cfg.tensor_shapes().iter().zip(&p.tensors) {
            if name.ends_with(".b") {
                assert!(t.iter().all(|&v| v == 0.0));
            } else {
                let bound = 1.0 / (*fan_in as f64).sqrt();
                assert!(t.iter().all(|v| v.abs() <= bound));
            }
        }
        assert_eq!(p, Params::init(&cfg, 3));
        assert_ne!(p, Params::init(&cfg, 4));
    }
}
