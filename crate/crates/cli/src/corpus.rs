//! Line-delimited JSON corpora.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use hibert_core::text::{segment_document, tokenize, Document, TextPipeline};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One source document; `id` defaults to the line number.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RawRecord {
    #[serde(default)]
    pub id: Option<Value>,
    pub text: String,
    #[serde(default)]
    pub summary: Option<String>,
    #[serde(default)]
    pub labels: Option<Vec<bool>>,
}

/// A record with a resolved id.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub text: String,
    pub summary: Option<String>,
    pub labels: Option<Vec<bool>>,
}

/// Output of the label command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub doc_id: String,
    pub labels: Vec<bool>,
    pub oracle_score: f64,
    pub text: String,
    pub summary: String,
}

/// Output of the evaluate command, one per document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub doc_id: String,
    pub chosen_indices: Vec<usize>,
    pub summary_text: String,
}

fn id_string(id: Option<Value>, line: usize) -> String {
    match id {
        Some(Value::String(s)) => s,
        Some(Value::Null) | None => line.to_string(),
        Some(v) => v.to_string(),
    }
}

/// Reads every record; blank lines are skipped. `doc_id` is accepted as an
/// alias of `id` so labeled files can be read back.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open corpus {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut v: Value =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: invalid JSON", path.display(), i + 1))?;
        if let Some(obj) = v.as_object_mut() {
            if !obj.contains_key("id") {
                if let Some(d) = obj.remove("doc_id") {
                    obj.insert("id".into(), d);
                }
            }
        }
        let raw: RawRecord = serde_json::from_value(v)
            .with_context(|| format!("{}:{}: expected a record with a `text` field", path.display(), i + 1))?;
        out.push(Record { id: id_string(raw.id, i), text: raw.text, summary: raw.summary, labels: raw.labels });
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(&out)?;
    Ok(())
}

/// A text as word-level sentences alongside its model documents. Sentence
/// `i` of the text is sentence `i % 30` of chunk `i / 30`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedText {
    pub sentences: Vec<Vec<String>>,
    pub chunks: Vec<Document>,
}

pub fn prepare(pipeline: &TextPipeline, text: &str) -> Result<PreparedText> {
    let enc = pipeline.encode_text(text);
    let chunks = segment_document(&enc.ids);
    let n: usize = chunks.iter().map(Document::len).sum();
    if n != enc.sentences.len() {
        bail!("segmentation dropped sentences ({n} of {})", enc.sentences.len());
    }
    Ok(PreparedText { sentences: enc.sentences, chunks })
}

/// Reference summary as a flat token list.
pub fn summary_tokens(summary: &str) -> Vec<String> {
    tokenize(summary).into_iter().flatten().collect()
}
