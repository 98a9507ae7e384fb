use std::collections::HashMap;

use super::bpe::{bpe_encode, BpeMerges};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const MASK: usize = 4;

/// Reserved token strings, indexed by their fixed ids.
pub const RESERVED_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[BOS]", "[EOS]", "[MASK]"];

/// Bijection between subword strings and ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    /// Reserved tokens followed by `tokens` (duplicates of earlier entries
    /// are skipped).
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self { tokens: Vec::new(), ids: HashMap::new() };
        for t in RESERVED_TOKENS {
            v.push(t.to_owned());
        }
        for t in tokens {
            v.push(t.into());
        }
        v
    }

    fn push(&mut self, token: String) {
        if !self.ids.contains_key(&token) {
            self.ids.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    /// Every subword produced by encoding the corpus, most frequent first
    /// (ties in lexicographic order).
    pub fn from_corpus(word_counts: &HashMap<String, usize>, merges: &BpeMerges) -> Self {
        let mut freq: HashMap<String, usize> = HashMap::new();
        for (word, &count) in word_counts {
            for sub in bpe_encode(word, merges) {
                *freq.entry(sub).or_insert(0) += count;
            }
        }
        let mut entries: Vec<(String, usize)> = freq.into_iter().collect();
        entries.sort_by(|(a, ca), (b, cb)| cb.cmp(ca).then_with(|| a.cmp(b)));
        Self::new(entries.into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of a token, `UNK` when absent.
    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<&str> = text.lines().collect();
        if tokens.len() < RESERVED_TOKENS.len() || tokens[..RESERVED_TOKENS.len()] != RESERVED_TOKENS {
            return Err(Error::InvalidArgument("vocabulary must start with the reserved tokens".into()));
        }
        let v = Self::new(tokens[RESERVED_TOKENS.len()..].iter().copied());
        if v.len() != tokens.len() {
            return Err(Error::InvalidArgument("vocabulary contains duplicate tokens".into()));
        }
        Ok(v)
    }

    /// Space-joined tokens, for display.
    pub fn render(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.token(i).unwrap_or(RESERVED_TOKENS[UNK])).collect::<Vec<_>>().join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocab::new(["hello", "[MASK]"]);
        assert_eq!(v.id("[PAD]"), PAD);
        assert_eq!(v.id("[UNK]"), UNK);
        assert_eq!(v.id("[BOS]"), BOS);
        assert_eq!(v.id("[EOS]"), EOS);
        assert_eq!(v.id("[MASK]"), MASK);
        assert_eq!(v.id("hello"), 5);
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("absent"), UNK);
    }

    #[test]
    fn text_round_trip_and_validation() {
        let v = Vocab::new(["a</w>", "b", "ab</w>"]);
        assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocab::from_text("x\ny\n").is_err());
        assert!(Vocab::from_text(&format!(
            "{}a\na\n",
            v.to_text().lines().take(5).map(|l| format!("{l}\n")).collect::<String>()
        ))
        .is_err());
    }
}
