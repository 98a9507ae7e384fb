//! The five pipeline commands. Each one resolves and checks all of its
//! inputs before creating any output.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hibert_core::encoder::{ModelConfig, ModelParams};
use hibert_core::pretrain::PretrainObjective;
use hibert_core::rouge::{oracle_labels_exhaustive, oracle_labels_greedy, RougeTriple, EXHAUSTIVE_LIMIT};
use hibert_core::summarizer::{
    best_k, classify_chunks, mean_rouge_at_k, rank_and_select, FinetuneObjective, LabeledDocument, ScoredDocument,
};
use hibert_core::text::{tokenize, BpeMerges, Document, TextPipeline, Vocab};
use hibert_core::train::{self, StepRecord, TrainState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Progress};
use crate::config::{ExperimentConfig, KChoice, OracleKind, Phase};
use crate::corpus::{prepare, read_records, summary_tokens, write_jsonl, LabeledRecord, PreparedText, SummaryRecord};

pub const PRETRAIN_PHASE: &str = "pretrain";
pub const FINETUNE_PHASE: &str = "finetune";

pub fn vocab_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.vocab.clone().unwrap_or_else(|| cfg.out_dir.join("vocab.txt"))
}

pub fn merges_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.merges.clone().unwrap_or_else(|| cfg.out_dir.join("merges.txt"))
}

fn load_pipeline(cfg: &ExperimentConfig) -> Result<TextPipeline> {
    let (vp, mp) = (vocab_path(cfg), merges_path(cfg));
    let vocab = fs::read_to_string(&vp).with_context(|| format!("cannot read vocab {}", vp.display()))?;
    let merges = fs::read_to_string(&mp).with_context(|| format!("cannot read merges {}", mp.display()))?;
    Ok(TextPipeline::new(
        Vocab::from_text(&vocab).with_context(|| format!("bad vocab file {}", vp.display()))?,
        BpeMerges::from_text(&merges).with_context(|| format!("bad merges file {}", mp.display()))?,
    ))
}

fn create_out_dir(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))
}

/// Append-only JSONL log that can be rewound to a checkpoint's position.
struct JsonlLog {
    file: File,
    records: u64,
}

impl JsonlLog {
    /// Opens `path`, keeping only the first `keep` records of an existing
    /// file (none when `keep` is zero).
    fn open(path: &Path, keep: u64) -> Result<Self> {
        let mut kept = Vec::new();
        if keep > 0 {
            if let Ok(f) = File::open(path) {
                for line in BufReader::new(f).lines().take(keep as usize) {
                    kept.push(line?);
                }
            }
        }
        let mut file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        for line in &kept {
            writeln!(file, "{line}")?;
        }
        Ok(Self { file, records: keep })
    }

    fn push<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.file, record)?;
        self.file.write_all(b"\n")?;
        self.file.flush()?;
        self.records += 1;
        Ok(())
    }
}

// ---------------------------------------------------------------- build-vocab

#[derive(Debug, Clone, PartialEq)]
pub struct BuildVocabOutput {
    pub vocab_size: usize,
    pub merges: usize,
    pub vocab_path: PathBuf,
    pub merges_path: PathBuf,
}

/// Learns BPE merges and the vocabulary from the `corpus` texts.
pub fn cmd_build_vocab(cfg: &ExperimentConfig) -> Result<BuildVocabOutput> {
    let corpus = cfg.require("corpus", &cfg.corpus)?;
    let texts: Vec<String> = read_records(corpus)?.into_iter().map(|r| r.text).collect();
    let pipeline = TextPipeline::train(&texts, cfg.num_merges);
    create_out_dir(cfg)?;
    let (vp, mp) = (vocab_path(cfg), merges_path(cfg));
    fs::write(&vp, pipeline.vocab.to_text()).with_context(|| format!("cannot write {}", vp.display()))?;
    fs::write(&mp, pipeline.merges.to_text()).with_context(|| format!("cannot write {}", mp.display()))?;
    Ok(BuildVocabOutput {
        vocab_size: pipeline.vocab.len(),
        merges: pipeline.merges.len(),
        vocab_path: vp,
        merges_path: mp,
    })
}

// ---------------------------------------------------------------- pretrain

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainLogRecord {
    pub step: u64,
    pub stage: String,
    pub lr: f64,
    pub train_loss: f64,
    pub val_ppl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutput {
    /// One checkpoint per stage completed by this invocation.
    pub checkpoints: Vec<PathBuf>,
    pub log_path: PathBuf,
    /// Last validation perplexity of each stage run here.
    pub final_val_ppl: Vec<(String, Option<f64>)>,
}

fn load_documents(pipeline: &TextPipeline, path: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for r in read_records(path)? {
        docs.extend(prepare(pipeline, &r.text).with_context(|| format!("document {}", r.id))?.chunks);
    }
    Ok(docs)
}

fn stage_checkpoint(cfg: &ExperimentConfig, tag: &str) -> PathBuf {
    cfg.out_dir.join(format!("pretrain-{tag}.ckpt"))
}

fn step_checkpoint(cfg: &ExperimentConfig, name: &str, step: u64) -> PathBuf {
    cfg.out_dir.join(format!("{name}-step{step}.ckpt"))
}

fn initial_params(model: &ModelConfig, seed: u64) -> Result<ModelParams> {
    Ok(ModelParams::init(*model, &mut ChaCha8Rng::seed_from_u64(seed))?)
}

/// Runs the configured pre-training stages in order. With `checkpoint`
/// set, a checkpoint carrying pre-training progress resumes exactly where
/// it stopped; any other checkpoint only supplies initial parameters.
pub fn cmd_pretrain(cfg: &ExperimentConfig) -> Result<PretrainOutput> {
    let stages = cfg.stages()?;
    let tc = cfg.train_config(Phase::Pretrain)?;
    let pipeline = load_pipeline(cfg)?;
    let model = cfg.model_config(pipeline.vocab.len())?;
    let mut corpora = Vec::with_capacity(stages.len());
    for st in &stages {
        let train = load_documents(&pipeline, &st.corpus)?;
        if train.is_empty() {
            bail!("stage `{}` corpus {} has no sentences", st.tag, st.corpus.display());
        }
        let valid = match &st.valid {
            Some(p) => load_documents(&pipeline, p)?,
            None => Vec::new(),
        };
        corpora.push((train, valid));
    }
    let (mut params, mut start, mut resume, log_keep) = match &cfg.checkpoint {
        Some(p) => {
            let ck = Checkpoint::load_expecting(p, &model)?;
            match ck.progress {
                Some(pr) if pr.phase == PRETRAIN_PHASE => {
                    if pr.stage >= stages.len() {
                        bail!("checkpoint is at stage {} but only {} stages are configured", pr.stage, stages.len());
                    }
                    if pr.state.finished {
                        (ck.params, pr.stage + 1, None, pr.log_records)
                    } else {
                        (ck.params, pr.stage, Some(pr.state), pr.log_records)
                    }
                }
                Some(pr) => bail!("cannot resume pre-training from a `{}` checkpoint", pr.phase),
                None => (ck.params, 0, None, 0),
            }
        }
        None => (initial_params(&model, cfg.seed)?, 0, None, 0),
    };

    create_out_dir(cfg)?;
    let log_path = cfg.out_dir.join("pretrain.log.jsonl");
    let mut log = JsonlLog::open(&log_path, log_keep)?;
    let mut checkpoints = Vec::new();
    let mut final_val_ppl = Vec::new();
    while start < stages.len() {
        let i = start;
        let tag = &stages[i].tag;
        let (train, valid) = &corpora[i];
        let objective = PretrainObjective::new(train.clone(), valid)?;
        let mut state = resume.take().unwrap_or_else(|| TrainState::new(tc.seed.wrapping_add(i as u64)));
        train::run(&mut params, &mut state, &tc, &objective, |r, p, s| {
            log.push(&PretrainLogRecord {
                step: r.step,
                stage: tag.clone(),
                lr: r.lr,
                train_loss: r.train_loss,
                val_ppl: r.val,
            })?;
            if !s.finished && cfg.checkpoint_every.is_some_and(|every| r.step % every == 0) {
                save_progress(
                    &step_checkpoint(cfg, &format!("pretrain-{tag}"), r.step),
                    p,
                    PRETRAIN_PHASE,
                    i,
                    s,
                    log.records,
                )?;
            }
            Ok::<_, anyhow::Error>(())
        })?;
        let path = stage_checkpoint(cfg, tag);
        save_progress(&path, &params, PRETRAIN_PHASE, i, &state, log.records)?;
        checkpoints.push(path);
        final_val_ppl.push((tag.clone(), state.val_history.last().copied()));
        start += 1;
    }
    Ok(PretrainOutput { checkpoints, log_path, final_val_ppl })
}

fn save_progress(
    path: &Path,
    params: &ModelParams,
    phase: &str,
    stage: usize,
    state: &TrainState,
    log_records: u64,
) -> Result<()> {
    let progress = Progress { phase: phase.to_string(), stage, state: state.clone(), log_records };
    Ok(Checkpoint::new(params.clone(), Some(progress)).save(path)?)
}

// ---------------------------------------------------------------- finetune

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneLogRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_nll: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutput {
    pub checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub steps: u64,
    pub val_nll: Vec<f64>,
    pub pretrained: bool,
}

/// A labeled text split into per-chunk training documents.
fn labeled_documents(pipeline: &TextPipeline, path: &Path, need_labels: bool) -> Result<Vec<LabeledDocument>> {
    let mut out = Vec::new();
    for r in read_records(path)? {
        let prepared = prepare(pipeline, &r.text).with_context(|| format!("document {}", r.id))?;
        let n = prepared.sentences.len();
        let labels = match r.labels {
            Some(l) if l.len() != n => bail!("document {}: {} labels for {n} sentences", r.id, l.len()),
            Some(l) => l,
            None if need_labels => bail!("document {} has no labels; run `label` first", r.id),
            None => vec![false; n],
        };
        let reference = r.summary.as_deref().map(summary_tokens).unwrap_or_default();
        let mut offset = 0;
        for chunk in prepared.chunks {
            let len = chunk.len();
            out.push(LabeledDocument::with_text(
                chunk,
                labels[offset..offset + len].to_vec(),
                prepared.sentences[offset..offset + len].to_vec(),
                reference.clone(),
            )?);
            offset += len;
        }
    }
    Ok(out)
}

/// Fine-tunes the summarizer on a labeled corpus. Without `checkpoint` the
/// model starts from random weights; a checkpoint with unfinished
/// fine-tuning progress resumes, any other supplies initial weights.
pub fn cmd_finetune(cfg: &ExperimentConfig) -> Result<FinetuneOutput> {
    let tc = cfg.train_config(Phase::Finetune)?;
    let corpus = cfg.require("corpus", &cfg.corpus)?;
    let pipeline = load_pipeline(cfg)?;
    let model = cfg.model_config(pipeline.vocab.len())?;
    let train = labeled_documents(&pipeline, corpus, true)?;
    if train.is_empty() {
        bail!("labeled corpus {} has no sentences", corpus.display());
    }
    let valid = match &cfg.valid_corpus {
        Some(p) => labeled_documents(&pipeline, p, true)?,
        None => Vec::new(),
    };
    let (mut params, resume, pretrained) = match &cfg.checkpoint {
        Some(p) => {
            let ck = Checkpoint::load_expecting(p, &model)?;
            match ck.progress {
                Some(pr) if pr.phase == FINETUNE_PHASE && !pr.state.finished => {
                    (ck.params, Some((pr.state, pr.log_records)), true)
                }
                _ => (ck.params, None, true),
            }
        }
        None => (initial_params(&model, cfg.seed)?, None, false),
    };
    let objective = FinetuneObjective::new(train, valid)?;

    create_out_dir(cfg)?;
    let log_path = cfg.out_dir.join("finetune.log.jsonl");
    let (mut state, keep) = resume.unwrap_or_else(|| (TrainState::new(tc.seed), 0));
    let mut log = JsonlLog::open(&log_path, keep)?;
    train::run(&mut params, &mut state, &tc, &objective, |r: &StepRecord, p, s| {
        log.push(&FinetuneLogRecord {
            step: r.step,
            epoch: r.epoch,
            lr: r.lr,
            train_loss: r.train_loss,
            val_nll: r.val,
        })?;
        if !s.finished && cfg.checkpoint_every.is_some_and(|every| r.step.is_multiple_of(every)) {
            save_progress(&step_checkpoint(cfg, FINETUNE_PHASE, r.step), p, FINETUNE_PHASE, 0, s, log.records)?;
        }
        Ok::<_, anyhow::Error>(())
    })?;
    let checkpoint = cfg.out_dir.join("finetune.ckpt");
    save_progress(&checkpoint, &params, FINETUNE_PHASE, 0, &state, log.records)?;
    Ok(FinetuneOutput { checkpoint, log_path, steps: state.global_step, val_nll: state.val_history, pretrained })
}

// ---------------------------------------------------------------- label

#[derive(Debug, Clone, PartialEq)]
pub struct LabelOutput {
    pub path: PathBuf,
    pub written: usize,
    /// Records without a summary.
    pub skipped: usize,
    /// Documents too long for exhaustive search, labeled greedily instead.
    pub greedy_fallbacks: usize,
}

/// Oracle sentence labels for every record that has a summary.
pub fn cmd_label(cfg: &ExperimentConfig) -> Result<LabelOutput> {
    let corpus = cfg.require("corpus", &cfg.corpus)?;
    let records = read_records(corpus)?;
    let mut out = Vec::new();
    let (mut skipped, mut fallbacks) = (0, 0);
    for r in records {
        let Some(summary) = r.summary else {
            skipped += 1;
            continue;
        };
        let sentences = tokenize(&r.text);
        let reference = summary_tokens(&summary);
        let oracle = match cfg.oracle {
            OracleKind::Exhaustive if sentences.len() <= EXHAUSTIVE_LIMIT => {
                oracle_labels_exhaustive(&sentences, &reference, cfg.max_selected)?
            }
            OracleKind::Exhaustive => {
                fallbacks += 1;
                oracle_labels_greedy(&sentences, &reference, cfg.max_selected)
            }
            OracleKind::Greedy => oracle_labels_greedy(&sentences, &reference, cfg.max_selected),
        };
        out.push(LabeledRecord {
            doc_id: r.id,
            labels: oracle.labels,
            oracle_score: oracle.score,
            text: r.text,
            summary,
        });
    }
    create_out_dir(cfg)?;
    let path = cfg.out_dir.join("labeled.jsonl");
    write_jsonl(&path, &out)?;
    Ok(LabelOutput { path, written: out.len(), skipped, greedy_fallbacks: fallbacks })
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub documents: usize,
    pub skipped: usize,
    pub k: usize,
    pub k_tuned: bool,
    pub model: RougeTriple,
    pub lead: RougeTriple,
}

struct EvalText {
    id: String,
    prepared: PreparedText,
    reference: Vec<String>,
}

fn eval_texts(pipeline: &TextPipeline, path: &Path) -> Result<(Vec<EvalText>, usize)> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for r in read_records(path)? {
        let Some(summary) = r.summary else {
            skipped += 1;
            continue;
        };
        let prepared = prepare(pipeline, &r.text).with_context(|| format!("document {}", r.id))?;
        if prepared.sentences.is_empty() {
            skipped += 1;
            continue;
        }
        out.push(EvalText { id: r.id, prepared, reference: summary_tokens(&summary) });
    }
    Ok((out, skipped))
}

fn text_probs(params: &ModelParams, texts: &[EvalText]) -> Result<Vec<Vec<f64>>> {
    texts.par_iter().map(|t| classify_chunks(params, &t.prepared.chunks).map_err(anyhow::Error::from)).collect()
}

fn scored<'a>(texts: &'a [EvalText], probs: &'a [Vec<f64>]) -> Vec<ScoredDocument<'a>> {
    texts
        .iter()
        .zip(probs)
        .map(|(t, p)| ScoredDocument { sentences: &t.prepared.sentences, reference: &t.reference, probs: p })
        .collect()
}

/// Lead-K probabilities: one for the first `k` sentences, zero after.
fn lead_probs(n: usize, k: usize) -> Vec<f64> {
    (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect()
}

/// Scores top-K summaries and the Lead-K baseline on the `corpus`
/// documents, writing `metrics.json` and `summaries.jsonl`.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    let ck_path = cfg.require("checkpoint", &cfg.checkpoint)?;
    let corpus = cfg.require("corpus", &cfg.corpus)?;
    let pipeline = load_pipeline(cfg)?;
    let model = cfg.model_config(pipeline.vocab.len())?;
    let params = Checkpoint::load_expecting(ck_path, &model)?.params;
    let (texts, skipped) = eval_texts(&pipeline, corpus)?;
    let tuning = match cfg.k {
        KChoice::Tune => {
            let valid = cfg.require("valid_corpus", &cfg.valid_corpus)?;
            Some(eval_texts(&pipeline, valid)?.0)
        }
        KChoice::Fixed(_) => None,
    };

    let k = match (&cfg.k, &tuning) {
        (KChoice::Fixed(k), _) => *k,
        (KChoice::Tune, Some(valid)) => {
            let probs = text_probs(&params, valid)?;
            best_k(&scored(valid, &probs), &cfg.k_range)?
        }
        (KChoice::Tune, None) => unreachable!("validation texts are loaded when tuning"),
    };
    let probs = text_probs(&params, &texts)?;
    let docs = scored(&texts, &probs);
    let lead: Vec<Vec<f64>> = texts.iter().map(|t| lead_probs(t.prepared.sentences.len(), k)).collect();
    let report = MetricsReport {
        documents: texts.len(),
        skipped,
        k,
        k_tuned: cfg.k == KChoice::Tune,
        model: mean_rouge_at_k(&docs, k)?,
        lead: mean_rouge_at_k(&scored(&texts, &lead), k)?,
    };
    let mut summaries = Vec::with_capacity(texts.len());
    for (t, p) in texts.iter().zip(&probs) {
        let chosen = rank_and_select(p, k)?.chosen;
        let summary_text = chosen.iter().map(|&i| t.prepared.sentences[i].join(" ")).collect::<Vec<_>>().join(" ");
        summaries.push(SummaryRecord { doc_id: t.id.clone(), chosen_indices: chosen, summary_text });
    }

    create_out_dir(cfg)?;
    write_jsonl(&cfg.out_dir.join("summaries.jsonl"), &summaries)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    fs::write(cfg.out_dir.join("metrics.json"), json)?;
    Ok(report)
}
