use super::forward::Forward;
use super::layer::encoder_stack;
use super::params::{DOCUMENT_ENCODER, SENTENCE_ENCODER, WORD_EMBEDDING};
use super::position::{sincos_position, sincos_table};
use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};
use crate::text::{Document, EOS};

/// Sentence vectors before (`sentences`, `[n, H]`) and after (`context`,
/// `[n, H]`) the document-level transformer.
#[derive(Debug, Clone, Copy)]
pub struct SentenceRepr {
    pub sentences: Var,
    pub context: Var,
}

/// Word embeddings plus sine-cosine positions `0..n`, followed by dropout.
pub fn embed_tokens(fwd: &mut Forward<'_>, ids: &[usize]) -> Result<Var> {
    let table = fwd.param(WORD_EMBEDDING)?;
    let hidden = fwd.config().hidden;
    let words = fwd.graph.embedding(table, ids)?;
    let pos = fwd.graph.constant(sincos_table(ids.len(), hidden)?);
    let x = fwd.graph.add(words, pos)?;
    fwd.dropout(x)
}

/// Hidden state at the EOS position after the sentence encoder, without the
/// sentence position term.
pub fn sentence_state(fwd: &mut Forward<'_>, ids: &[usize]) -> Result<Var> {
    if ids.last() != Some(&EOS) {
        return Err(Error::InvalidDocument("sentence must end with EOS".into()));
    }
    let x = embed_tokens(fwd, ids)?;
    let h = encoder_stack(fwd, SENTENCE_ENCODER, x, None)?;
    fwd.graph.row(h, ids.len() - 1)
}

/// Sentence representation: EOS hidden state plus the positional vector of
/// the sentence index, taken from the same table as word positions.
pub fn encode_sentence(fwd: &mut Forward<'_>, ids: &[usize], sentence_index: usize) -> Result<Var> {
    let h = sentence_state(fwd, ids)?;
    let p = sincos_position(sentence_index, fwd.config().hidden)?;
    let p = fwd.graph.constant(Tensor::from_vec(p));
    fwd.graph.add(h, p)
}

/// Stacked sentence representations `[n, H]`; `with_positions = false`
/// skips the sentence position term.
pub fn sentence_states(fwd: &mut Forward<'_>, doc: &Document, with_positions: bool) -> Result<Var> {
    if doc.is_empty() {
        return Err(Error::InvalidDocument("empty document".into()));
    }
    let mut rows = Vec::with_capacity(doc.len());
    for (i, s) in doc.sentences().iter().enumerate() {
        rows.push(if with_positions { encode_sentence(fwd, s, i)? } else { sentence_state(fwd, s)? });
    }
    fwd.graph.concat_rows(&rows)
}

/// Document-level transformer over stacked sentence vectors; attention is
/// bidirectional.
pub fn contextualize(fwd: &mut Forward<'_>, sentences: Var) -> Result<Var> {
    encoder_stack(fwd, DOCUMENT_ENCODER, sentences, None)
}

pub fn encode_document(fwd: &mut Forward<'_>, doc: &Document) -> Result<SentenceRepr> {
    let sentences = sentence_states(fwd, doc, true)?;
    let context = contextualize(fwd, sentences)?;
    Ok(SentenceRepr { sentences, context })
}
