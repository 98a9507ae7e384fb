use rand::seq::index;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::text::{Document, BOS, EOS, MASK, MAX_SENTENCE_TOKENS};

pub const SELECT_FRACTION: f64 = 0.15;
pub const P_MASKED: f64 = 0.8;
pub const P_KEPT: f64 = 0.1;

/// What happened to a selected sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    /// Every content token replaced by MASK; EOS kept.
    Masked,
    /// Left as it is.
    Kept,
    /// Swapped for a sentence drawn from the replacement pool.
    Replaced,
}

/// A transform together with its replacement sentence, when one applies.
#[derive(Debug, Clone, PartialEq)]
pub enum Transformation {
    Masked,
    Kept,
    /// Content tokens of the replacement sentence (EOS is appended).
    Replaced(Vec<usize>),
}

impl Transformation {
    pub fn tag(&self) -> Transform {
        match self {
            Self::Masked => Transform::Masked,
            Self::Kept => Transform::Kept,
            Self::Replaced(_) => Transform::Replaced,
        }
    }
}

/// A document after sentence-level masking, with what must be predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDocument {
    /// The transformed document the encoder sees.
    pub document: Document,
    /// Selected sentence indices, ascending.
    pub selected: Vec<usize>,
    /// Original sentence for each selected index as `BOS w_1 .. EOS`.
    pub targets: Vec<Vec<usize>>,
    pub transforms: Vec<Transform>,
}

impl MaskedDocument {
    /// Number of tokens the decoder predicts.
    pub fn num_predictions(&self) -> usize {
        self.targets.iter().map(|t| t.len() - 1).sum()
    }
}

/// Source of random replacement sentences (content tokens, no EOS).
pub trait SentencePool {
    fn sample(&self, rng: &mut dyn RngCore) -> Option<Vec<usize>>;
}

impl SentencePool for [Document] {
    fn sample(&self, rng: &mut dyn RngCore) -> Option<Vec<usize>> {
        if self.is_empty() {
            return None;
        }
        let doc = &self[rng.random_range(0..self.len())];
        let i = rng.random_range(0..doc.len());
        Some(doc.content(i).to_vec())
    }
}

impl SentencePool for Vec<Document> {
    fn sample(&self, rng: &mut dyn RngCore) -> Option<Vec<usize>> {
        self.as_slice().sample(rng)
    }
}

impl SentencePool for [Vec<usize>] {
    fn sample(&self, rng: &mut dyn RngCore) -> Option<Vec<usize>> {
        if self.is_empty() {
            return None;
        }
        Some(self[rng.random_range(0..self.len())].clone())
    }
}

/// `max(1, round(0.15 * n))`, never more than `n`.
pub fn selection_count(n: usize) -> usize {
    ((SELECT_FRACTION * n as f64).round() as usize).clamp(1, n.max(1))
}

/// Applies explicit transformations to a document.
pub fn mask_document(doc: &Document, choices: &[(usize, Transformation)]) -> Result<MaskedDocument> {
    let mut choices: Vec<&(usize, Transformation)> = choices.iter().collect();
    choices.sort_by_key(|(i, _)| *i);
    if choices.is_empty() {
        return Err(Error::InvalidArgument("at least one sentence must be selected".into()));
    }
    if choices.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument("selected indices must be distinct".into()));
    }
    let mut sentences = doc.sentences().to_vec();
    let mut selected = Vec::with_capacity(choices.len());
    let mut targets = Vec::with_capacity(choices.len());
    let mut transforms = Vec::with_capacity(choices.len());
    for (i, t) in choices {
        let i = *i;
        if i >= doc.len() {
            return Err(Error::IndexOutOfRange { op: "mask_document", index: i, extent: doc.len() });
        }
        let original = &doc.sentences()[i];
        let mut target = Vec::with_capacity(original.len() + 1);
        target.push(BOS);
        target.extend_from_slice(original);
        targets.push(target);
        selected.push(i);
        transforms.push(t.tag());
        match t {
            Transformation::Masked => {
                sentences[i] = vec![MASK; original.len() - 1];
                sentences[i].push(EOS);
            }
            Transformation::Kept => {}
            Transformation::Replaced(content) => {
                let mut s: Vec<usize> =
                    content.iter().copied().filter(|&t| t != EOS).take(MAX_SENTENCE_TOKENS).collect();
                if s.is_empty() {
                    return Err(Error::InvalidArgument("replacement sentence is empty".into()));
                }
                s.push(EOS);
                sentences[i] = s;
            }
        }
    }
    Ok(MaskedDocument { document: Document::new(sentences)?, selected, targets, transforms })
}

/// Selects `max(1, round(0.15 n))` distinct sentences uniformly, then masks
/// (80%), keeps (10%) or replaces (10%) each. A replacement draw with an
/// empty pool falls back to masking.
pub fn select_and_mask<R, P>(doc: &Document, rng: &mut R, pool: &P) -> Result<MaskedDocument>
where
    R: RngCore,
    P: SentencePool + ?Sized,
{
    if doc.is_empty() {
        return Err(Error::InvalidDocument("cannot mask an empty document".into()));
    }
    let mut picked = index::sample(rng, doc.len(), selection_count(doc.len())).into_vec();
    picked.sort_unstable();
    let mut choices = Vec::with_capacity(picked.len());
    for i in picked {
        let u: f64 = rng.random();
        let t = if u < P_MASKED {
            Transformation::Masked
        } else if u < P_MASKED + P_KEPT {
            Transformation::Kept
        } else {
            match pool.sample(rng) {
                Some(s) if !s.is_empty() => Transformation::Replaced(s),
                _ => Transformation::Masked,
            }
        };
        choices.push((i, t));
    }
    mask_document(doc, &choices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn doc(n: usize) -> Document {
        Document::from_content(&(0..n).map(|i| vec![10 + i, 11 + i]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn selection_counts() {
        assert_eq!(selection_count(1), 1);
        assert_eq!(selection_count(3), 1);
        assert_eq!(selection_count(20), 3);
        assert_eq!(selection_count(30), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pool: Vec<Document> = vec![doc(2)];
        let m = select_and_mask(&doc(20), &mut rng, &pool).unwrap();
        assert_eq!(m.selected.len(), 3);
    }

    #[test]
    fn masked_sentence_keeps_eos_only() {
        let d = doc(4);
        let m = mask_document(&d, &[(2, Transformation::Masked)]).unwrap();
        assert_eq!(m.document.sentences()[2], vec![MASK, MASK, EOS]);
        assert_eq!(m.targets[0], vec![BOS, 12, 13, EOS]);
        for i in [0, 1, 3] {
            assert_eq!(m.document.sentences()[i], d.sentences()[i]);
        }
        assert_eq!(m.num_predictions(), 3);
    }

    #[test]
    fn kept_leaves_document_unchanged() {
        let d = doc(5);
        let m = mask_document(&d, &[(0, Transformation::Kept), (4, Transformation::Kept)]).unwrap();
        assert_eq!(m.document, d);
        assert_eq!(m.transforms, vec![Transform::Kept; 2]);
    }

    #[test]
    fn empty_pool_falls_back_to_masking() {
        let empty: Vec<Document> = Vec::new();
        let d = doc(1);
        let mut seen_replaced = false;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = select_and_mask(&d, &mut rng, &empty).unwrap();
            seen_replaced |= m.transforms.contains(&Transform::Replaced);
        }
        assert!(!seen_replaced);
    }

    #[test]
    fn replacement_is_truncated() {
        let d = doc(2);
        let long: Vec<usize> = (0..70).map(|i| 5 + i).collect();
        let m = mask_document(&d, &[(1, Transformation::Replaced(long))]).unwrap();
        assert_eq!(m.document.sentences()[1].len(), 51);
    }

    #[test]
    fn rejects_bad_choices() {
        let d = doc(3);
        assert!(mask_document(&d, &[]).is_err());
        assert!(mask_document(&d, &[(3, Transformation::Kept)]).is_err());
        assert!(mask_document(&d, &[(1, Transformation::Kept), (1, Transformation::Masked)]).is_err());
    }
}
