use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transformer sizes shared by the sentence encoder, document encoder and
/// decoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ff: usize,
    pub dropout: f64,
    pub vocab_size: usize,
}

impl ModelConfig {
    /// `ff` is always `4 * hidden`.
    pub fn new(layers: usize, hidden: usize, heads: usize, dropout: f64, vocab_size: usize) -> Result<Self> {
        let c = Self { layers, hidden, heads, ff: 4 * hidden, dropout, vocab_size };
        c.validate()?;
        Ok(c)
    }

    /// Desk-scale model: L=2, H=64, A=4.
    pub fn tiny(vocab_size: usize) -> Self {
        Self::new(2, 64, 4, 0.1, vocab_size).expect("valid preset")
    }

    /// L=6, H=512, A=8.
    pub fn small(vocab_size: usize) -> Self {
        Self::new(6, 512, 8, 0.1, vocab_size).expect("valid preset")
    }

    /// L=6, H=768, A=12.
    pub fn medium(vocab_size: usize) -> Self {
        Self::new(6, 768, 12, 0.1, vocab_size).expect("valid preset")
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 {
            return bad(format!("layers, hidden and heads must be positive: {self:?}"));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return bad(format!("hidden size {} is not divisible by {} heads", self.hidden, self.heads));
        }
        if !self.hidden.is_multiple_of(2) {
            return bad(format!("hidden size {} must be even for sine-cosine positions", self.hidden));
        }
        if self.ff != 4 * self.hidden {
            return bad(format!("feedforward size {} must equal 4 * hidden", self.ff));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.vocab_size <= crate::text::MASK {
            return bad(format!("vocabulary of {} cannot hold the reserved tokens", self.vocab_size));
        }
        Ok(())
    }
}
