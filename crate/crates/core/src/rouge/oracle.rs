use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::score::rouge_n;
use crate::error::{Error, Result};

/// Default cap on selected sentences.
pub const DEFAULT_MAX_SELECTED: usize = 3;

/// Largest document the exhaustive search accepts.
pub const EXHAUSTIVE_LIMIT: usize = 12;

/// Oracle labels and the objective they reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleLabels {
    pub labels: Vec<bool>,
    pub score: f64,
}

impl OracleLabels {
    pub fn selected(&self) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l).map(|(i, _)| i).collect()
    }
}

/// Mean of ROUGE-1 and ROUGE-2 F1 of the selected sentences, concatenated in
/// document order, against the reference.
pub fn selection_objective<T: Eq + Hash + Clone>(sentences: &[Vec<T>], selected: &[usize], reference: &[T]) -> f64 {
    let mut idx = selected.to_vec();
    idx.sort_unstable();
    let candidate: Vec<T> = idx.iter().flat_map(|&i| sentences[i].iter().cloned()).collect();
    (rouge_n(&candidate, reference, 1).f1 + rouge_n(&candidate, reference, 2).f1) / 2.0
}

fn labels_for(n: usize, selected: &[usize]) -> Vec<bool> {
    let mut labels = vec![false; n];
    for &i in selected {
        labels[i] = true;
    }
    labels
}

/// Greedy forward selection: keep adding the sentence with the largest
/// objective gain (earliest index on ties) while the objective strictly
/// improves and fewer than `max_selected` sentences are chosen.
pub fn oracle_labels_greedy<T: Eq + Hash + Clone>(
    sentences: &[Vec<T>],
    reference: &[T],
    max_selected: usize,
) -> OracleLabels {
    let mut selected: Vec<usize> = Vec::new();
    let mut current = 0.0;
    while selected.len() < max_selected {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..sentences.len()).filter(|i| !selected.contains(i)) {
            let mut trial = selected.clone();
            trial.push(i);
            let score = selection_objective(sentences, &trial, reference);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        match best {
            Some((i, score)) if score > current => {
                selected.push(i);
                current = score;
            }
            _ => break,
        }
    }
    selected.sort_unstable();
    OracleLabels { labels: labels_for(sentences.len(), &selected), score: current }
}

/// Exact argmax over every subset of at most `max_selected` sentences; ties
/// go to the lexicographically smallest index list (the empty set first).
pub fn oracle_labels_exhaustive<T: Eq + Hash + Clone>(
    sentences: &[Vec<T>],
    reference: &[T],
    max_selected: usize,
) -> Result<OracleLabels> {
    let n = sentences.len();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "exhaustive search supports at most {EXHAUSTIVE_LIMIT} sentences, got {n}; use the greedy oracle"
        )));
    }
    let mut best: (f64, Vec<usize>) = (0.0, Vec::new());
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    for bits in 1u32..(1 << n) {
        if bits.count_ones() as usize > max_selected {
            continue;
        }
        let subset: Vec<usize> = (0..n).filter(|i| bits & (1 << i) != 0).collect();
        let score = *cache.entry(subset.clone()).or_insert_with(|| selection_objective(sentences, &subset, reference));
        if score > best.0 || (score == best.0 && subset < best.1) {
            best = (score, subset);
        }
    }
    Ok(OracleLabels { labels: labels_for(n, &best.1), score: best.0 })
}
