//! Small synthetic corpora for tests, benchmarks and desk-scale experiments.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::text::{Document, Vocab, RESERVED_TOKENS};

/// Vocabulary `w0 .. w{n-1}` after the reserved tokens.
pub fn word_vocab(n: usize) -> Vocab {
    Vocab::new((0..n).map(|i| format!("w{i}")))
}

/// Id of the first non-reserved token.
pub const FIRST_WORD: usize = RESERVED_TOKENS.len();

/// Shape of generated documents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Number of ordinary word types.
    pub words: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { words: 40, min_sentences: 4, max_sentences: 6, min_len: 3, max_len: 6 }
    }
}

impl SynthConfig {
    /// Vocabulary size including reserved tokens.
    pub fn vocab_size(&self) -> usize {
        FIRST_WORD + self.words
    }
}

/// Random sentence of content tokens drawn from `pool`.
fn sentence<R: Rng + ?Sized>(rng: &mut R, cfg: &SynthConfig, pool: &[usize]) -> Vec<usize> {
    let len = rng.random_range(cfg.min_len..=cfg.max_len);
    (0..len).map(|_| *pool.choose(rng).expect("nonempty pool")).collect()
}

/// Documents whose sentences draw most words from a per-document topic, so
/// a document's sentences share vocabulary.
pub fn topic_documents<R: Rng + ?Sized>(rng: &mut R, n: usize, cfg: &SynthConfig) -> Vec<Document> {
    let all: Vec<usize> = (FIRST_WORD..cfg.vocab_size()).collect();
    (0..n)
        .map(|_| {
            let topic: Vec<usize> = all.choose_multiple(rng, 6.min(all.len())).copied().collect();
            let k = rng.random_range(cfg.min_sentences..=cfg.max_sentences);
            let content: Vec<Vec<usize>> = (0..k)
                .map(|_| {
                    let s = sentence(rng, cfg, &topic);
                    s.into_iter().map(|t| if rng.random_bool(0.25) { *all.choose(rng).unwrap() } else { t }).collect()
                })
                .collect();
            Document::from_content(&content).expect("valid by construction")
        })
        .collect()
}

/// Documents for the planted-keyword task: a sentence is labeled true iff it
/// contains `marker`. Returns documents with their labels.
pub fn planted_keyword_documents<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    cfg: &SynthConfig,
    marker: usize,
) -> Vec<(Document, Vec<bool>)> {
    let ordinary: Vec<usize> = (FIRST_WORD..cfg.vocab_size()).filter(|&t| t != marker).collect();
    (0..n)
        .map(|_| {
            let k = rng.random_range(cfg.min_sentences..=cfg.max_sentences);
            let mut labels = Vec::with_capacity(k);
            let content: Vec<Vec<usize>> = (0..k)
                .map(|_| {
                    let mut s = sentence(rng, cfg, &ordinary);
                    let planted = rng.random_bool(0.35);
                    if planted {
                        let at = rng.random_range(0..s.len());
                        s[at] = marker;
                    }
                    labels.push(planted);
                    s
                })
                .collect();
            (Document::from_content(&content).expect("valid by construction"), labels)
        })
        .collect()
}
