use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classify_sentences, LabeledDocument};
use crate::encoder::ModelParams;
use crate::error::{Error, Result};
use crate::rouge::RougeTriple;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySelection {
    /// `(index, probability)` sorted by probability, highest first.
    pub ranked: Vec<(usize, f64)>,
    /// Chosen indices in document order.
    pub chosen: Vec<usize>,
}

/// Top `k` sentences by probability, ties to the earlier sentence, returned
/// in document order.
pub fn rank_and_select(probs: &[f64], k: usize) -> Result<SummarySelection> {
    if probs.is_empty() {
        return Err(Error::InvalidArgument("no sentences to rank".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if let Some(i) = probs.iter().position(|p| p.is_nan()) {
        return Err(Error::NonFinite(format!("probability of sentence {i}")));
    }
    let mut ranked: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = ranked.iter().take(k).map(|&(i, _)| i).collect();
    chosen.sort_unstable();
    Ok(SummarySelection { ranked, chosen })
}

/// Concatenated surface tokens of the chosen sentences.
pub fn summary_tokens(sentence_tokens: &[Vec<String>], chosen: &[usize]) -> Vec<String> {
    chosen.iter().flat_map(|&i| sentence_tokens[i].iter().cloned()).collect()
}

/// One document's surface sentences, reference tokens and sentence
/// probabilities, for scoring top-K selections.
#[derive(Debug, Clone, Copy)]
pub struct ScoredDocument<'a> {
    pub sentences: &'a [Vec<String>],
    pub reference: &'a [String],
    pub probs: &'a [f64],
}

/// Corpus means of ROUGE precision, recall and F1 for the top-`k`
/// selections.
pub fn mean_rouge_at_k(docs: &[ScoredDocument<'_>], k: usize) -> Result<RougeTriple> {
    let mut sum = RougeTriple::default();
    for d in docs {
        if d.probs.len() != d.sentences.len() {
            return Err(Error::LengthMismatch {
                op: "mean_rouge_at_k",
                detail: format!("{} probabilities for {} sentences", d.probs.len(), d.sentences.len()),
            });
        }
        let sel = rank_and_select(d.probs, k)?;
        let r = RougeTriple::compute(&summary_tokens(d.sentences, &sel.chosen), d.reference);
        for (acc, x) in [(&mut sum.rouge1, r.rouge1), (&mut sum.rouge2, r.rouge2), (&mut sum.rouge_l, r.rouge_l)] {
            acc.precision += x.precision;
            acc.recall += x.recall;
            acc.f1 += x.f1;
        }
    }
    let n = docs.len().max(1) as f64;
    for acc in [&mut sum.rouge1, &mut sum.rouge2, &mut sum.rouge_l] {
        acc.precision /= n;
        acc.recall /= n;
        acc.f1 /= n;
    }
    Ok(sum)
}

/// The K in `ks` maximizing the corpus mean of the averaged ROUGE-1/2/L F1,
/// ties to the smaller K.
pub fn best_k(docs: &[ScoredDocument<'_>], ks: &[usize]) -> Result<usize> {
    if ks.is_empty() {
        return Err(Error::InvalidArgument("K range is empty".into()));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut best: Option<(usize, f64)> = None;
    for k in ks {
        let score = mean_rouge_at_k(docs, k)?.mean_f1();
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((k, score));
        }
    }
    Ok(best.expect("nonempty range").0)
}

/// [`best_k`] over labeled documents with precomputed probabilities.
pub fn tune_k_from_probs(docs: &[LabeledDocument], probs: &[Vec<f64>], ks: &[usize]) -> Result<usize> {
    if docs.len() != probs.len() {
        return Err(Error::LengthMismatch {
            op: "tune_k",
            detail: format!("{} probability vectors for {} documents", probs.len(), docs.len()),
        });
    }
    let scored: Vec<ScoredDocument<'_>> = docs
        .iter()
        .zip(probs)
        .map(|(d, p)| ScoredDocument { sentences: &d.sentence_tokens, reference: &d.reference_summary, probs: p })
        .collect();
    best_k(&scored, ks)
}

/// Picks K on a validation corpus.
pub fn tune_k(params: &ModelParams, valid: &[LabeledDocument], ks: &[usize]) -> Result<usize> {
    let probs: Vec<Vec<f64>> = valid.par_iter().map(|d| classify_sentences(params, &d.doc)).collect::<Result<_>>()?;
    tune_k_from_probs(valid, &probs, ks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_examples() {
        let s = rank_and_select(&[0.9, 0.1, 0.8], 2).unwrap();
        assert_eq!(s.chosen, vec![0, 2]);
        assert_eq!(rank_and_select(&[0.2, 0.4], 5).unwrap().chosen, vec![0, 1]);
        assert_eq!(rank_and_select(&[0.5; 6], 3).unwrap().chosen, vec![0, 1, 2]);
        assert!(rank_and_select(&[], 1).is_err());
        assert!(rank_and_select(&[0.3], 0).is_err());
    }

    #[test]
    fn ranked_order_breaks_ties_by_position() {
        let s = rank_and_select(&[0.3, 0.7, 0.3, 0.7], 1).unwrap();
        let order: Vec<usize> = s.ranked.iter().map(|r| r.0).collect();
        assert_eq!(order, vec![1, 3, 0, 2]);
        assert_eq!(s.chosen, vec![1]);
    }
}
