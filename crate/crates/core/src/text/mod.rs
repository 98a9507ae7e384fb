//! Tokenization, byte-pair encoding, vocabularies and document segmentation.

mod bpe;
mod document;
mod tokenize;
mod vocab;

pub use bpe::{bpe_decode, bpe_encode, bpe_train, BpeMerges, END_OF_WORD};
pub use document::{segment_document, Document, MAX_SENTENCES, MAX_SENTENCE_TOKENS};
pub use tokenize::tokenize;
pub use vocab::{Vocab, BOS, EOS, MASK, PAD, RESERVED_TOKENS, UNK};

use std::collections::HashMap;

/// Immutable vocabulary plus merge table; turns raw text into documents.
#[derive(Debug, Clone)]
pub struct TextPipeline {
    pub vocab: Vocab,
    pub merges: BpeMerges,
}

/// A text split into word-level sentences alongside their subword ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedText {
    pub sentences: Vec<Vec<String>>,
    pub ids: Vec<Vec<usize>>,
}

impl TextPipeline {
    pub fn new(vocab: Vocab, merges: BpeMerges) -> Self {
        Self { vocab, merges }
    }

    /// Trains merges on `texts` and builds the matching vocabulary.
    pub fn train<S: AsRef<str>>(texts: &[S], num_merges: usize) -> Self {
        let counts = word_counts(texts);
        let merges = bpe_train(&counts, num_merges);
        let vocab = Vocab::from_corpus(&counts, &merges);
        Self { vocab, merges }
    }

    /// Subword ids of one word, `UNK` for anything outside the vocabulary.
    pub fn encode_word(&self, word: &str) -> Vec<usize> {
        bpe_encode(word, &self.merges).iter().map(|s| self.vocab.id(s)).collect()
    }

    pub fn encode_sentences(&self, sentences: &[Vec<String>]) -> Vec<Vec<usize>> {
        sentences.iter().map(|s| s.iter().flat_map(|w| self.encode_word(w)).collect()).collect()
    }

    pub fn encode_text(&self, text: &str) -> EncodedText {
        let sentences = tokenize(text);
        let ids = self.encode_sentences(&sentences);
        EncodedText { sentences, ids }
    }

    /// tokenize → BPE → ids → segmentation, for one source text.
    pub fn encode_documents(&self, text: &str) -> Vec<Document> {
        segment_document(&self.encode_text(text).ids)
    }

    /// Applies [`TextPipeline::encode_documents`] to each text and flattens
    /// the result.
    pub fn encode_corpus<S: AsRef<str>>(&self, texts: &[S]) -> Vec<Document> {
        texts.iter().flat_map(|t| self.encode_documents(t.as_ref())).collect()
    }
}

/// Word frequencies over the tokenized texts.
pub fn word_counts<S: AsRef<str>>(texts: &[S]) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for text in texts {
        for word in tokenize(text.as_ref()).into_iter().flatten() {
            *counts.entry(word).or_insert(0) += 1;
        }
    }
    counts
}

/// Free-function form of [`TextPipeline::encode_corpus`].
pub fn encode_corpus<S: AsRef<str>>(texts: &[S], vocab: &Vocab, merges: &BpeMerges) -> Vec<Document> {
    TextPipeline::new(vocab.clone(), merges.clone()).encode_corpus(texts)
}
