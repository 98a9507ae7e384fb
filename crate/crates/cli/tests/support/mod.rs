#![allow(dead_code)]

//! Synthetic English-like corpora for the command tests.

use std::path::{Path, PathBuf};

use hibert_cli::{ExperimentConfig, Settings};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "river", "stone", "market", "city", "winter", "garden", "train", "letter", "council", "harbor", "bridge", "school",
    "forest", "engine", "lamp", "window", "island", "road", "music", "paper", "storm", "field",
];

/// Word that marks a summary-worthy sentence.
pub const MARKER: &str = "announced";

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default()
}

/// `(text, summary)` pairs. Sentences containing [`MARKER`] form the
/// summary; every document has at least one.
pub fn documents(seed: u64, n: usize) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let k = rng.random_range(4..8);
            let forced = rng.random_range(0..k);
            let mut text = Vec::new();
            let mut summary = Vec::new();
            for i in 0..k {
                let len = rng.random_range(3..7);
                let mut words: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
                let marked = i == forced || rng.random_bool(0.2);
                if marked {
                    let at = rng.random_range(1..=words.len());
                    words.insert(at, MARKER);
                }
                let mut s = capitalize(words[0]);
                for w in &words[1..] {
                    s.push(' ');
                    s.push_str(w);
                }
                s.push('.');
                if marked {
                    summary.push(s.clone());
                }
                text.push(s);
            }
            (text.join(" "), summary.join(" "))
        })
        .collect()
}

pub fn write_corpus(path: &Path, docs: &[(String, String)], with_summary: bool) {
    let mut out = String::new();
    for (i, (text, summary)) in docs.iter().enumerate() {
        let mut v = serde_json::json!({ "id": format!("d{i}"), "text": text });
        if with_summary {
            v["summary"] = serde_json::json!(summary);
        }
        out.push_str(&v.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

/// Config from `key = value` lines.
pub fn config(lines: &[String]) -> ExperimentConfig {
    ExperimentConfig::from_settings(Settings::parse(&lines.join("\n")).unwrap()).unwrap()
}

/// Paths of a fixture workspace: corpora, vocabulary and an output root.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub pretrain_a: PathBuf,
    pub pretrain_b: PathBuf,
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let p = |name: &str| dir.path().join(name);
        let f = Self {
            pretrain_a: p("open.jsonl"),
            pretrain_b: p("in_domain.jsonl"),
            train: p("train.jsonl"),
            valid: p("valid.jsonl"),
            test: p("test.jsonl"),
            dir,
        };
        write_corpus(&f.pretrain_a, &documents(1, 12), false);
        write_corpus(&f.pretrain_b, &documents(2, 8), false);
        write_corpus(&f.train, &documents(3, 16), true);
        write_corpus(&f.valid, &documents(4, 6), true);
        write_corpus(&f.test, &documents(5, 8), true);
        f
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Settings shared by every command: a small model and quick schedules.
    pub fn base(&self, out: &Path, vocab_dir: &Path) -> Vec<String> {
        vec![
            format!("out_dir = {}", out.display()),
            format!("vocab = {}", vocab_dir.join("vocab.txt").display()),
            format!("merges = {}", vocab_dir.join("merges.txt").display()),
            "layers = 1".into(),
            "hidden = 16".into(),
            "heads = 2".into(),
            "seed = 17".into(),
            "lr = 0.003".into(),
            "warmup = 5".into(),
            "batch_size = 4".into(),
            "num_merges = 40".into(),
        ]
    }
}
