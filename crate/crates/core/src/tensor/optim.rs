use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Linear warmup to `base_lr`, then inverse-square-root decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
}

impl Schedule {
    pub fn new(base_lr: f64, warmup_steps: u64) -> Result<Self> {
        if !(base_lr > 0.0 && base_lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("base_lr must be positive, got {base_lr}")));
        }
        if warmup_steps == 0 {
            return Err(Error::InvalidArgument("warmup_steps must be positive".into()));
        }
        Ok(Self { base_lr, warmup_steps })
    }

    pub fn lr(&self, step: u64) -> f64 {
        lr_at(self, step)
    }
}

/// `base_lr * min(step / warmup, sqrt(warmup / step))` for `step >= 1`.
pub fn lr_at(schedule: &Schedule, step: u64) -> f64 {
    let step = step.max(1) as f64;
    let warmup = schedule.warmup_steps as f64;
    schedule.base_lr * (step / warmup).min((warmup / step).sqrt())
}

/// Adam moments keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// One Adam update with bias correction and decoupled weight decay.
    ///
    /// Parameters without a gradient are left untouched. `decays` selects
    /// which parameters receive weight decay.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        schedule: &Schedule,
        weight_decay: f64,
        decays: impl Fn(&str) -> bool,
    ) -> Result<()> {
        for (name, t) in params.iter() {
            if let Some(g) = t.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of `{name}`")));
                }
            }
        }
        let t = self.step + 1;
        let lr = lr_at(schedule, t);
        let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
        for (name, tensor) in params.iter_mut() {
            let Some(grad) = tensor.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let n = tensor.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            if m.len() != n || v.len() != n {
                return Err(Error::LengthMismatch {
                    op: "adam_step",
                    detail: format!("moments for `{name}` have {} entries, parameter has {n}", m.len()),
                });
            }
            let wd = if decays(name) { weight_decay } else { 0.0 };
            for (((p, g), mi), vi) in tensor.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
                *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
                let update = (*mi / bc1) / ((*vi / bc2).sqrt() + ADAM_EPS);
                *p -= lr * (update + wd * *p);
            }
        }
        self.step = t;
        Ok(())
    }
}
