use std::collections::HashMap;

use crate::error::{Error, Result};

/// Marker attached to the final symbol of every word.
pub const END_OF_WORD: &str = "</w>";

/// Ordered merge rules; a lower index means a higher priority.
#[derive(Debug, Clone, Default)]
pub struct BpeMerges {
    rules: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl PartialEq for BpeMerges {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules
    }
}

impl BpeMerges {
    pub fn from_rules(rules: Vec<(String, String)>) -> Self {
        let ranks = rules.iter().cloned().enumerate().map(|(i, r)| (r, i)).collect();
        Self { rules, ranks }
    }

    pub fn rules(&self) -> &[(String, String)] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    fn rank(&self, a: &str, b: &str) -> Option<usize> {
        // Avoid allocating a key for every lookup on the common miss path.
        if self.rules.is_empty() {
            return None;
        }
        self.ranks.get(&(a.to_owned(), b.to_owned())).copied()
    }

    /// One `left right` pair per line, in priority order.
    pub fn to_text(&self) -> String {
        self.rules.iter().map(|(a, b)| format!("{a} {b}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => rules.push((a.to_owned(), b.to_owned())),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "merges line {}: expected `left right`, got {line:?}",
                        n + 1
                    )))
                }
            }
        }
        Ok(Self::from_rules(rules))
    }
}

/// Initial symbols of a word: its characters, with the end-of-word marker
/// fused to the last one.
pub(crate) fn initial_symbols(word: &str) -> Vec<String> {
    let mut symbols: Vec<String> = word.chars().map(String::from).collect();
    if let Some(last) = symbols.last_mut() {
        last.push_str(END_OF_WORD);
    }
    symbols
}

fn merge_pair(symbols: &mut Vec<String>, a: &str, b: &str) {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == a && symbols[i + 1] == b {
            out.push(format!("{a}{b}"));
            i += 2;
        } else {
            out.push(std::mem::take(&mut symbols[i]));
            i += 1;
        }
    }
    *symbols = out;
}

/// Learns up to `num_merges` rules by repeatedly merging the most frequent
/// adjacent pair. Ties go to the lexicographically smallest pair; training
/// stops early once no pair remains.
pub fn bpe_train(word_counts: &HashMap<String, usize>, num_merges: usize) -> BpeMerges {
    let mut words: Vec<(Vec<String>, usize)> =
        word_counts.iter().filter(|(w, &c)| !w.is_empty() && c > 0).map(|(w, &c)| (initial_symbols(w), c)).collect();
    words.sort();
    let mut rules = Vec::with_capacity(num_merges);
    for _ in 0..num_merges {
        let mut pairs: HashMap<(&str, &str), usize> = HashMap::new();
        for (symbols, count) in &words {
            for w in symbols.windows(2) {
                *pairs.entry((&w[0], &w[1])).or_insert(0) += count;
            }
        }
        let best = pairs
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
            .map(|((a, b), _)| (a.to_owned(), b.to_owned()));
        let Some((a, b)) = best else { break };
        for (symbols, _) in &mut words {
            merge_pair(symbols, &a, &b);
        }
        rules.push((a, b));
    }
    BpeMerges::from_rules(rules)
}

/// Splits a word into subwords by applying merges in priority order.
/// Characters never seen in training stay single-character subwords.
pub fn bpe_encode(word: &str, merges: &BpeMerges) -> Vec<String> {
    let mut symbols = initial_symbols(word);
    loop {
        let best =
            symbols.windows(2).filter_map(|w| merges.rank(&w[0], &w[1]).map(|r| (r, w[0].clone(), w[1].clone()))).min();
        let Some((_, a, b)) = best else { break };
        merge_pair(&mut symbols, &a, &b);
    }
    symbols
}

/// Inverse of [`bpe_encode`] for a single word.
pub fn bpe_decode<S: AsRef<str>>(subwords: &[S]) -> String {
    let joined: String = subwords.iter().map(AsRef::as_ref).collect();
    joined.strip_suffix(END_OF_WORD).map(str::to_owned).unwrap_or(joined)
}
