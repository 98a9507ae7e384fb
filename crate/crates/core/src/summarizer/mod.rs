//! Extractive summarization as sentence labeling: a two-way classifier on
//! the document encoder's sentence representations, fine-tuning, and top-K
//! selection.

mod finetune;
mod select;

pub use finetune::{finetune, label_accuracy, label_nll, FinetuneObjective, FinetuneOutcome};
pub use select::{
    best_k, mean_rouge_at_k, rank_and_select, summary_tokens, tune_k, tune_k_from_probs, ScoredDocument,
    SummarySelection,
};

use crate::encoder::{encode_document, Forward, ModelParams, CLASSIFIER};
use crate::error::{Error, Result};
use crate::tensor::Var;
use crate::text::Document;

/// A document with one label per sentence.
///
/// `sentence_tokens` holds the surface tokens of each sentence and
/// `reference_summary` the reference tokens; both are only used for ROUGE.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDocument {
    pub doc: Document,
    pub labels: Vec<bool>,
    pub sentence_tokens: Vec<Vec<String>>,
    pub reference_summary: Vec<String>,
}

impl LabeledDocument {
    /// Labels without text; sentence tokens default to the decimal ids.
    pub fn new(doc: Document, labels: Vec<bool>) -> Result<Self> {
        let sentence_tokens = (0..doc.len()).map(|i| doc.content(i).iter().map(usize::to_string).collect()).collect();
        Self::with_text(doc, labels, sentence_tokens, Vec::new())
    }

    pub fn with_text(
        doc: Document,
        labels: Vec<bool>,
        sentence_tokens: Vec<Vec<String>>,
        reference_summary: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != doc.len() {
            return Err(Error::LengthMismatch {
                op: "LabeledDocument",
                detail: format!("{} labels for {} sentences", labels.len(), doc.len()),
            });
        }
        if sentence_tokens.len() != doc.len() {
            return Err(Error::LengthMismatch {
                op: "LabeledDocument",
                detail: format!("{} token lists for {} sentences", sentence_tokens.len(), doc.len()),
            });
        }
        Ok(Self { doc, labels, sentence_tokens, reference_summary })
    }

    pub fn check(&self) -> Result<()> {
        if self.labels.len() != self.doc.len() || self.sentence_tokens.len() != self.doc.len() {
            return Err(Error::LengthMismatch {
                op: "LabeledDocument",
                detail: format!(
                    "{} labels and {} token lists for {} sentences",
                    self.labels.len(),
                    self.sentence_tokens.len(),
                    self.doc.len()
                ),
            });
        }
        Ok(())
    }
}

/// Classifier logits `[n, 2]` over the contextual sentence representations;
/// column 1 is the True class.
pub fn sentence_logits(fwd: &mut Forward<'_>, doc: &Document) -> Result<Var> {
    let repr = encode_document(fwd, doc)?;
    let w = fwd.param(CLASSIFIER)?;
    fwd.graph.matmul(repr.context, w)
}

/// Mean label NLL over the sentences of one document.
pub fn label_loss(fwd: &mut Forward<'_>, doc: &Document, labels: &[bool]) -> Result<Var> {
    if labels.len() != doc.len() {
        return Err(Error::LengthMismatch {
            op: "label_loss",
            detail: format!("{} labels for {} sentences", labels.len(), doc.len()),
        });
    }
    let logits = sentence_logits(fwd, doc)?;
    let targets: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    fwd.graph.nll_loss(logits, &targets, &vec![true; labels.len()])
}

/// Probability of the True label for each sentence, dropout off.
pub fn classify_sentences(params: &ModelParams, doc: &Document) -> Result<Vec<f64>> {
    let mut fwd = Forward::eval(params);
    let logits = sentence_logits(&mut fwd, doc)?;
    let probs = fwd.graph.softmax(logits, 1)?;
    let p = fwd.graph.value(probs);
    Ok((0..doc.len()).map(|i| p.at(&[i, 1])).collect())
}

/// Probabilities for a text split into several documents, concatenated in
/// order.
pub fn classify_chunks(params: &ModelParams, chunks: &[Document]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for c in chunks {
        out.extend(classify_sentences(params, c)?);
    }
    Ok(out)
}
