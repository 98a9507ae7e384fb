use super::vocab::EOS;
use crate::error::{Error, Result};

/// Longest sentence kept, not counting EOS.
pub const MAX_SENTENCE_TOKENS: usize = 50;
pub const MAX_SENTENCES: usize = 30;

/// Sentences of token ids, each terminated by exactly one EOS.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Document {
    sentences: Vec<Vec<usize>>,
}

impl Document {
    /// Wraps sentences that already end in EOS, checking the invariants.
    pub fn new(sentences: Vec<Vec<usize>>) -> Result<Self> {
        let doc = Self { sentences };
        doc.check_shape()?;
        Ok(doc)
    }

    /// Builds a document from content tokens, appending EOS to each
    /// sentence. Sentences must be nonempty and at most 50 tokens.
    pub fn from_content(content: &[Vec<usize>]) -> Result<Self> {
        Self::new(content.iter().map(|s| s.iter().copied().chain(std::iter::once(EOS)).collect()).collect())
    }

    pub fn sentences(&self) -> &[Vec<usize>] {
        &self.sentences
    }

    pub fn into_sentences(self) -> Vec<Vec<usize>> {
        self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Sentence `i` without its EOS.
    pub fn content(&self, i: usize) -> &[usize] {
        let s = &self.sentences[i];
        &s[..s.len() - 1]
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    fn check_shape(&self) -> Result<()> {
        if self.sentences.is_empty() || self.sentences.len() > MAX_SENTENCES {
            return Err(Error::InvalidDocument(format!(
                "{} sentences (expected 1..={MAX_SENTENCES})",
                self.sentences.len()
            )));
        }
        for (i, s) in self.sentences.iter().enumerate() {
            if s.is_empty() || s.len() > MAX_SENTENCE_TOKENS + 1 {
                return Err(Error::InvalidDocument(format!("sentence {i} has {} tokens", s.len())));
            }
            if s.last() != Some(&EOS) || s[..s.len() - 1].contains(&EOS) {
                return Err(Error::InvalidDocument(format!("sentence {i} must end with a single EOS")));
            }
        }
        Ok(())
    }

    /// Full invariant check, including ids against the vocabulary size.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        self.check_shape()?;
        if let Some(&id) = self.sentences.iter().flatten().find(|&&id| id >= vocab_size) {
            return Err(Error::IndexOutOfRange { op: "Document::validate", index: id, extent: vocab_size });
        }
        Ok(())
    }
}

/// Truncates sentences to 50 tokens, appends EOS, drops empty sentences
/// and chunks into documents of at most 30 sentences.
pub fn segment_document(sentences: &[Vec<usize>]) -> Vec<Document> {
    let kept: Vec<Vec<usize>> = sentences
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| {
            let mut t: Vec<usize> = s.iter().copied().filter(|&id| id != EOS).take(MAX_SENTENCE_TOKENS).collect();
            t.push(EOS);
            t
        })
        .filter(|s| s.len() > 1)
        .collect();
    kept.chunks(MAX_SENTENCES).map(|c| Document { sentences: c.to_vec() }).collect()
}
