use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::pretrain_loss;
use super::masking::{select_and_mask, MaskedDocument};
use crate::encoder::{Forward, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Var;
use crate::text::Document;
use crate::train::{self, Objective, StepRecord, TrainConfig, TrainState};

/// Seed of the fixed masking used for validation perplexity.
pub const VALIDATION_MASK_SEED: u64 = 0x05ee_d0f7_a11d;

/// Masks every document once with a fixed seed, drawing replacements from
/// `pool`.
pub fn fixed_masking(docs: &[Document], pool: &[Document], seed: u64) -> Result<Vec<MaskedDocument>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.iter().map(|d| select_and_mask(d, &mut rng, pool)).collect()
}

/// `exp` of the mean per-token NLL over masked documents, dropout off.
pub fn perplexity(params: &ModelParams, masked: &[MaskedDocument]) -> Result<f64> {
    let parts: Vec<(f64, usize)> = masked
        .par_iter()
        .map(|m| {
            let mut fwd = Forward::eval(params);
            let loss = pretrain_loss(&mut fwd, m)?;
            let n = m.num_predictions();
            Ok((fwd.graph.value(loss).item() * n as f64, n))
        })
        .collect::<Result<_>>()?;
    let (nll, tokens) = parts.iter().fold((0.0, 0), |(a, b), (x, y)| (a + x, b + y));
    if tokens == 0 {
        return Err(Error::InvalidArgument("no tokens to evaluate".into()));
    }
    Ok((nll / tokens as f64).exp())
}

/// Masked-sentence prediction over a document corpus; each epoch draws a
/// fresh masking per document.
pub struct PretrainObjective {
    pub train: Vec<Document>,
    pub valid: Vec<MaskedDocument>,
}

impl PretrainObjective {
    /// Validation documents are masked once with a fixed seed. When `valid`
    /// is empty the training documents are used.
    pub fn new(train: Vec<Document>, valid: &[Document]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("pre-training corpus is empty".into()));
        }
        let source = if valid.is_empty() { &train[..] } else { valid };
        let valid = fixed_masking(source, &train, VALIDATION_MASK_SEED)?;
        Ok(Self { train, valid })
    }
}

impl Objective for PretrainObjective {
    fn num_items(&self) -> usize {
        self.train.len()
    }

    fn item_loss(&self, fwd: &mut Forward<'_>, index: usize, rng: &mut ChaCha8Rng) -> Result<Var> {
        let masked = select_and_mask(&self.train[index], rng, &self.train)?;
        pretrain_loss(fwd, &masked)
    }

    fn validate(&self, params: &ModelParams) -> Result<Option<f64>> {
        perplexity(params, &self.valid).map(Some)
    }
}

/// One pre-training stage: its own corpus and validation documents.
#[derive(Debug, Clone)]
pub struct PretrainStage {
    pub tag: String,
    pub train: Vec<Document>,
    pub valid: Vec<Document>,
}

/// Outcome of one stage; `params` is the snapshot at the end of the stage.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub tag: String,
    pub steps: u64,
    pub val_ppl: Vec<f64>,
    pub log: Vec<StepRecord>,
    pub params: ModelParams,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub params: ModelParams,
    pub lineage: Vec<StageResult>,
}

/// Runs the stages in order, each continuing from the previous stage's
/// parameters with a fresh optimizer.
pub fn pretrain_run(
    mut params: ModelParams,
    stages: &[PretrainStage],
    config: &TrainConfig,
) -> Result<PretrainOutcome> {
    if stages.is_empty() {
        return Err(Error::InvalidArgument("at least one pre-training stage is required".into()));
    }
    let mut lineage = Vec::with_capacity(stages.len());
    for (i, stage) in stages.iter().enumerate() {
        if stage.train.is_empty() {
            return Err(Error::InvalidArgument(format!("stage `{}` has an empty corpus", stage.tag)));
        }
        let objective = PretrainObjective::new(stage.train.clone(), &stage.valid)?;
        let mut state = TrainState::new(config.seed.wrapping_add(i as u64));
        let mut log = Vec::new();
        train::run(&mut params, &mut state, config, &objective, |r, _, _| {
            log.push(r.clone());
            Ok::<_, Error>(())
        })?;
        lineage.push(StageResult {
            tag: stage.tag.clone(),
            steps: state.global_step,
            val_ppl: state.val_history.clone(),
            log,
            params: params.clone(),
        });
    }
    Ok(PretrainOutcome { params, lineage })
}
