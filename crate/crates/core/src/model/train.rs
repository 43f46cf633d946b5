use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, loss_and_gradients, AdamState, ModelState, TrainingConfig};
use crate::curriculum::{BatchSource, SeriesSource};
use crate::error::{Error, Result};

/// RNG stream for batch sampling, kept apart from the initialization stream.
const BATCH_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: usize,
    pub learning_rate: f64,
    /// mean teacher-forced loss over the epoch's steps
    pub loss: f64,
    /// metric reported by the epoch hook, if any
    pub metric: Option<f64>,
}

fn run_epochs<S, H>(
    state: &mut ModelState,
    source: &S,
    cfg: &TrainingConfig,
    lr: f64,
    mut hook: H,
) -> Result<Vec<EpochLog>>
where
    S: BatchSource + ?Sized,
    H: FnMut(usize, &ModelState) -> Result<Option<f64>>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(BATCH_STREAM);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let stage = source.stage(epoch);
        let mut total = 0.0;
        for step in 0..cfg.steps_per_epoch {
            let batch = source.sample(epoch, &mut rng).map_err(|e| match e {
                Error::Scheduling(msg) => Error::Scheduling(format!("epoch {epoch}, stage {stage}: {msg}")),
                other => other,
            })?;
            let (loss, grads) = loss_and_gradients(state, &batch).map_err(|e| match e {
                Error::Numerical { layer, context } => Error::Numerical {
                    layer,
                    context: format!("{context} (epoch {epoch}, step {step})"),
                },
                other => other,
            })?;
            adam_step(&mut state.params, &mut state.adam, &grads, cfg, lr);
            total += loss;
        }
        let metric = hook(epoch, state)?;
        let loss = total / cfg.steps_per_epoch.max(1) as f64;
        log::debug!("epoch {epoch} stage {stage} loss {loss:.6}");
        log.push(EpochLog {
            epoch,
            stage,
            learning_rate: lr,
            loss,
            metric,
        });
    }
    Ok(log)
}

/// Teacher-forced training: each epoch draws `steps_per_epoch` batches from
/// `source` and takes one Adam step per batch. `hook` runs after every
/// epoch and its value lands in the log.
pub fn train<S, H>(state: &mut ModelState, source: &S, cfg: &TrainingConfig, hook: H) -> Result<Vec<EpochLog>>
where
    S: BatchSource + ?Sized,
    H: FnMut(usize, &ModelState) -> Result<Option<f64>>,
{
    run_epochs(state, source, cfg, cfg.learning_rate, hook)
}

/// Adapts `state` to one series at the fine-tuning learning rate, starting
/// from fresh Adam moments.
pub fn finetune(state: &mut ModelState, segment: &[f64], cfg: &TrainingConfig) -> Result<Vec<EpochLog>> {
    if state.config.input_channels != 1 {
        return Err(Error::arg("fine-tuning on a scalar series needs input_channels = 1"));
    }
    let source = SeriesSource::new(segment, cfg.batch_size, state.config.window_len)?;
    state.adam = AdamState::new(&state.params);
    run_epochs(state, &source, cfg, cfg.finetune_learning_rate, |_, _| Ok(None))
}
