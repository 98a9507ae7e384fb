//! Resumable mini-batch training shared by pre-training and fine-tuning.
//!
//! Each step draws one seed per batch item from the run's RNG, computes the
//! item losses and gradients in parallel on independent graphs, sums the
//! gradients in batch order and applies one Adam update. Everything needed
//! to continue a run lives in [`TrainState`].

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{decays, Forward, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::{lr_at, AdamState, Schedule, Var};

/// Stop once the validation metric fails to improve by `min_rel_improvement`
/// (relative) for `patience` consecutive evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_rel_improvement: f64,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self { patience: 3, min_rel_improvement: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub max_steps: Option<u64>,
    pub early_stopping: Option<EarlyStopping>,
    pub seed: u64,
}

impl TrainConfig {
    /// Pre-training defaults: Adam at 1e-4 with 10,000 warmup steps, weight
    /// decay 0.01 and early stopping on validation perplexity.
    pub fn pretrain_defaults(seed: u64) -> Self {
        Self {
            base_lr: 1e-4,
            warmup_steps: 10_000,
            weight_decay: 0.01,
            batch_size: 32,
            max_epochs: 100,
            max_steps: None,
            early_stopping: Some(EarlyStopping::default()),
            seed,
        }
    }

    /// Fine-tuning defaults: 5e-5, 4,000 warmup steps, 32 documents per
    /// batch and 5 epochs.
    pub fn finetune_defaults(seed: u64) -> Self {
        Self {
            base_lr: 5e-5,
            warmup_steps: 4_000,
            weight_decay: 0.01,
            batch_size: 32,
            max_epochs: 5,
            max_steps: None,
            early_stopping: None,
            seed,
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.base_lr, self.warmup_steps)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        Ok(())
    }
}

/// Serializable position of a ChaCha stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos_hi: u64,
    pub word_pos_lo: u64,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let pos = rng.get_word_pos();
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(((self.word_pos_hi as u128) << 64) | self.word_pos_lo as u128);
        rng
    }
}

/// Everything that changes during a run besides the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub adam: AdamState,
    pub rng: RngState,
    pub epoch: usize,
    pub batch_in_epoch: usize,
    /// Item order of the current epoch; empty between epochs.
    pub order: Vec<usize>,
    pub global_step: u64,
    pub best_val: Option<f64>,
    pub stale_evals: usize,
    pub val_history: Vec<f64>,
    pub finished: bool,
}

impl TrainState {
    pub fn new(seed: u64) -> Self {
        Self {
            adam: AdamState::new(),
            rng: RngState::capture(&ChaCha8Rng::seed_from_u64(seed)),
            epoch: 0,
            batch_in_epoch: 0,
            order: Vec::new(),
            global_step: 0,
            best_val: None,
            stale_evals: 0,
            val_history: Vec::new(),
            finished: false,
        }
    }
}

/// One optimizer step as reported to the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Validation metric, present on the last step of an epoch.
    pub val: Option<f64>,
}

/// A training task over indexed items.
pub trait Objective: Sync {
    fn num_items(&self) -> usize;

    /// Loss of one item. `rng` is private to this item and step.
    fn item_loss(&self, fwd: &mut Forward<'_>, index: usize, rng: &mut ChaCha8Rng) -> Result<Var>;

    /// Validation metric (lower is better), if the task has one.
    fn validate(&self, params: &ModelParams) -> Result<Option<f64>>;
}

/// Mean loss and summed-then-averaged gradients over a batch of items.
pub fn batch_gradients<O: Objective + ?Sized>(
    objective: &O,
    params: &ModelParams,
    items: &[(usize, u64)],
) -> Result<(f64, BTreeMap<String, Vec<f64>>)> {
    let results: Vec<(f64, BTreeMap<String, Vec<f64>>)> = items
        .par_iter()
        .map(|&(index, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut fwd = Forward::train(params, rng.next_u64());
            let loss = objective.item_loss(&mut fwd, index, &mut rng)?;
            let value = fwd.graph.value(loss).item();
            let grads = fwd.gradients(loss)?;
            Ok((value, grads))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / items.len().max(1) as f64;
    let mut total = 0.0;
    let mut sum: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (value, grads) in results {
        total += value;
        for (name, g) in grads {
            match sum.get_mut(&name) {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => {
                    sum.insert(name, g);
                }
            }
        }
    }
    sum.values_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= scale));
    Ok((total * scale, sum))
}

/// Trains until the state is finished, calling `on_step` after every
/// optimizer step with the parameters and state as they stand. The
/// callback may fail with its own error type.
pub fn run<O, F, E>(
    params: &mut ModelParams,
    state: &mut TrainState,
    config: &TrainConfig,
    objective: &O,
    mut on_step: F,
) -> std::result::Result<(), E>
where
    O: Objective + ?Sized,
    F: FnMut(&StepRecord, &ModelParams, &TrainState) -> std::result::Result<(), E>,
    E: From<Error>,
{
    config.validate()?;
    let n = objective.num_items();
    if n == 0 {
        return Err(Error::InvalidArgument("training set is empty".into()).into());
    }
    let schedule = config.schedule()?;
    let mut rng = state.rng.restore();
    let limit_reached = |s: &TrainState| config.max_steps.is_some_and(|m| s.global_step >= m);
    if state.epoch >= config.max_epochs || limit_reached(state) {
        state.finished = true;
    }
    while !state.finished {
        if state.order.is_empty() {
            state.order = (0..n).collect();
            state.order.shuffle(&mut rng);
        }
        let start = state.batch_in_epoch * config.batch_size;
        let end = (start + config.batch_size).min(n);
        let items: Vec<(usize, u64)> = state.order[start..end].iter().map(|&i| (i, rng.next_u64())).collect();
        let (loss, grads) = batch_gradients(objective, params, &items)?;
        params.zero_grad();
        params.store.accumulate(&grads)?;
        state.adam.step(&mut params.store, &schedule, config.weight_decay, decays)?;
        params.zero_grad();
        state.global_step += 1;
        state.batch_in_epoch += 1;

        let mut record = StepRecord {
            step: state.global_step,
            epoch: state.epoch,
            lr: lr_at(&schedule, state.global_step),
            train_loss: loss,
            val: None,
        };
        if end == n {
            record.val = objective.validate(params)?;
            if let Some(val) = record.val {
                state.val_history.push(val);
                if let Some(es) = config.early_stopping {
                    let improved = state.best_val.is_none_or(|best| val < best * (1.0 - es.min_rel_improvement));
                    if improved {
                        state.best_val = Some(val);
                        state.stale_evals = 0;
                    } else {
                        state.stale_evals += 1;
                        state.finished |= state.stale_evals >= es.patience;
                    }
                }
            }
            state.epoch += 1;
            state.batch_in_epoch = 0;
            state.order.clear();
            state.finished |= state.epoch >= config.max_epochs;
        }
        state.finished |= limit_reached(state);
        state.rng = RngState::capture(&rng);
        on_step(&record, params, state)?;
    }
    state.rng = RngState::capture(&rng);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn rng_state_round_trips_mid_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..37 {
            rng.next_u32();
        }
        let saved = RngState::capture(&rng);
        let mut restored = saved.restore();
        let a: Vec<u64> = (0..10).map(|_| rng.random()).collect();
        let b: Vec<u64> = (0..10).map(|_| restored.random()).collect();
        assert_eq!(a, b);
    }
}
