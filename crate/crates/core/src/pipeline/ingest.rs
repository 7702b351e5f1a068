//! Line-delimited corpus ingestion.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::tokenize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedLine {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub records: Vec<TextRecord>,
    /// Ids of records over the token limit.
    pub dropped_too_long: Vec<String>,
    pub malformed: Vec<MalformedLine>,
}

/// Parses JSONL records; blank lines are skipped. Over-long records and
/// malformed or duplicate lines are reported, not fatal. Fails with
/// `EmptyAfterFiltering` when lines were present but none survived.
pub fn ingest_str(text: &str, max_tokens: usize) -> Result<IngestSummary> {
    let mut out = IngestSummary::default();
    let mut seen = HashSet::new();
    let mut any = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        any = true;
        let rec: TextRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                out.malformed.push(MalformedLine {
                    line: lineno,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if !seen.insert(rec.id.clone()) {
            out.malformed.push(MalformedLine {
                line: lineno,
                message: format!("duplicate id `{}`", rec.id),
            });
            continue;
        }
        if tokenize(&rec.text).len() > max_tokens {
            out.dropped_too_long.push(rec.id);
            continue;
        }
        out.records.push(rec);
    }
    if any && out.records.is_empty() {
        return Err(Error::EmptyAfterFiltering);
    }
    if !out.dropped_too_long.is_empty() {
        log::info!("dropped {} record(s) over {max_tokens} tokens", out.dropped_too_long.len());
    }
    for m in &out.malformed {
        log::warn!("line {}: {}", m.line, m.message);
    }
    Ok(out)
}

pub fn ingest(path: &Path, max_tokens: usize) -> Result<IngestSummary> {
    ingest_str(&std::fs::read_to_string(path)?, max_tokens)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}
