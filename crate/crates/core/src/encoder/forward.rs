use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ModelParams;
use super::ModelConfig;
use crate::error::Result;
use crate::tensor::{Graph, Var};

/// One forward/backward pass: a fresh graph over read-only parameters, plus
/// the dropout stream when training.
pub struct Forward<'p> {
    pub graph: Graph,
    params: &'p ModelParams,
    training: bool,
    rng: ChaCha8Rng,
}

impl<'p> Forward<'p> {
    /// Dropout disabled.
    pub fn eval(params: &'p ModelParams) -> Self {
        Self { graph: Graph::new(), params, training: false, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    /// Dropout enabled, drawing masks from a stream seeded with `seed`.
    pub fn train(params: &'p ModelParams, seed: u64) -> Self {
        Self { graph: Graph::new(), params, training: true, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn params(&self) -> &'p ModelParams {
        self.params
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        let t = self.params.get(name)?;
        Ok(self.graph.param(name, t))
    }

    pub fn dropout(&mut self, x: Var) -> Result<Var> {
        let p = self.params.config.dropout;
        self.graph.dropout(x, p, self.training, &mut self.rng)
    }

    /// Backward from `loss`, returning the gradient of every parameter used.
    pub fn gradients(&mut self, loss: Var) -> Result<BTreeMap<String, Vec<f64>>> {
        self.graph.backward(loss)?;
        Ok(self.graph.param_grads())
    }
}
