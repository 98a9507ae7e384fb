//! ROUGE-1/2/L scoring and extractive oracle labels.

mod oracle;
mod score;

pub use oracle::{
    oracle_labels_exhaustive, oracle_labels_greedy, selection_objective, OracleLabels, DEFAULT_MAX_SELECTED,
    EXHAUSTIVE_LIMIT,
};
pub use score::{lcs_len, rouge_l, rouge_n, RougeScore, RougeTriple};
