use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{classify_sentences, label_loss, LabeledDocument};
use crate::encoder::{Forward, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Var;
use crate::train::{self, Objective, StepRecord, TrainConfig, TrainState};

/// Mean per-sentence label NLL over a corpus, dropout off.
pub fn label_nll(params: &ModelParams, docs: &[LabeledDocument]) -> Result<f64> {
    let parts: Vec<(f64, usize)> = docs
        .par_iter()
        .map(|d| {
            let mut fwd = Forward::eval(params);
            let loss = label_loss(&mut fwd, &d.doc, &d.labels)?;
            Ok((fwd.graph.value(loss).item() * d.labels.len() as f64, d.labels.len()))
        })
        .collect::<Result<_>>()?;
    let (sum, n) = parts.iter().fold((0.0, 0), |(a, b), (x, y)| (a + x, b + y));
    if n == 0 {
        return Err(Error::InvalidArgument("no labeled sentences".into()));
    }
    Ok(sum / n as f64)
}

/// Fraction of sentences whose thresholded probability (0.5) matches the label.
pub fn label_accuracy(params: &ModelParams, docs: &[LabeledDocument]) -> Result<f64> {
    let parts: Vec<(usize, usize)> = docs
        .par_iter()
        .map(|d| {
            let probs = classify_sentences(params, &d.doc)?;
            let hits = probs.iter().zip(&d.labels).filter(|(&p, &l)| (p > 0.5) == l).count();
            Ok((hits, d.labels.len()))
        })
        .collect::<Result<_>>()?;
    let (hits, n) = parts.iter().fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
    if n == 0 {
        return Err(Error::InvalidArgument("no labeled sentences".into()));
    }
    Ok(hits as f64 / n as f64)
}

/// Cross-entropy over all sentence labels; validation reports the held-out
/// label NLL when a validation set is present.
pub struct FinetuneObjective {
    pub train: Vec<LabeledDocument>,
    pub valid: Vec<LabeledDocument>,
}

impl FinetuneObjective {
    pub fn new(train: Vec<LabeledDocument>, valid: Vec<LabeledDocument>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("fine-tuning corpus is empty".into()));
        }
        for d in train.iter().chain(&valid) {
            d.check()?;
        }
        Ok(Self { train, valid })
    }
}

impl Objective for FinetuneObjective {
    fn num_items(&self) -> usize {
        self.train.len()
    }

    fn item_loss(&self, fwd: &mut Forward<'_>, index: usize, _rng: &mut ChaCha8Rng) -> Result<Var> {
        let d = &self.train[index];
        label_loss(fwd, &d.doc, &d.labels)
    }

    fn validate(&self, params: &ModelParams) -> Result<Option<f64>> {
        if self.valid.is_empty() {
            return Ok(None);
        }
        label_nll(params, &self.valid).map(Some)
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub params: ModelParams,
    pub state: TrainState,
    pub log: Vec<StepRecord>,
}

/// Fine-tunes every parameter on the labeled corpus.
pub fn finetune(
    mut params: ModelParams,
    train: Vec<LabeledDocument>,
    valid: Vec<LabeledDocument>,
    config: &TrainConfig,
) -> Result<FinetuneOutcome> {
    let objective = FinetuneObjective::new(train, valid)?;
    let mut state = TrainState::new(config.seed);
    let mut log = Vec::new();
    train::run(&mut params, &mut state, config, &objective, |r, _, _| {
        log.push(r.clone());
        Ok(())
    })?;
    Ok(FinetuneOutcome { params, state, log })
}
