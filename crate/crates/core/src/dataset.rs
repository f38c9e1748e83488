//! Loading, saving and describing benchmark files.
//!
//! A dataset is JSONL, one record per line. Field names are configurable
//! through [`FieldMap`] so the original release can be read as-is.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::metrics::{is_punctuation, tokenize};
use crate::text::split_sentences;
use crate::types::SourceRecord;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0}: no such file")]
    FileNotFound(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Names of the JSON fields holding each part of a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub id_field: String,
    pub sentence_field: String,
    /// A list of sentences, or one paragraph string that gets sentence-split.
    pub context_field: String,
    pub gold_field: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            id_field: "id".into(),
            sentence_field: "sentence".into(),
            context_field: "context".into(),
            gold_field: "decontextualised".into(),
        }
    }
}

/// Records that loaded plus one error per rejected line.
#[derive(Debug, Default)]
pub struct LoadReport {
    pub records: Vec<SourceRecord>,
    pub errors: Vec<DatasetError>,
}

impl LoadReport {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }
}

fn schema(line: usize, reason: impl Into<String>) -> DatasetError {
    DatasetError::Schema { line, reason: reason.into() }
}

fn parse_line(obj: Map<String, Value>, line: usize, fields: &FieldMap) -> Result<SourceRecord, DatasetError> {
    let id = match obj.get(&fields.id_field) {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(schema(line, format!("{:?} must be a non-empty string or a number", fields.id_field))),
        None => return Err(schema(line, format!("missing {:?}", fields.id_field))),
    };
    let sentence = match obj.get(&fields.sentence_field) {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(_) => return Err(schema(line, format!("{:?} must be a non-empty string", fields.sentence_field))),
        None => return Err(schema(line, format!("missing {:?}", fields.sentence_field))),
    };
    let context = match obj.get(&fields.context_field) {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::String(p)) => split_sentences(p),
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                match item {
                    Value::String(s) if !s.trim().is_empty() => out.push(s.clone()),
                    Value::String(_) => {}
                    _ => return Err(schema(line, format!("{:?}[{i}] is not a string", fields.context_field))),
                }
            }
            out
        }
        Some(_) => return Err(schema(line, format!("{:?} must be a string or a list of strings", fields.context_field))),
    };
    let gold = match obj.get(&fields.gold_field) {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(schema(line, format!("{:?} must be a string", fields.gold_field))),
    };
    let known = [&fields.id_field, &fields.sentence_field, &fields.context_field, &fields.gold_field];
    let meta: BTreeMap<String, String> = obj
        .into_iter()
        .filter(|(k, _)| !known.contains(&k))
        .map(|(k, v)| match v {
            Value::String(s) => (k, s),
            other => (k, other.to_string()),
        })
        .collect();
    Ok(SourceRecord { id, sentence, context, gold, meta })
}

/// Parses JSONL text. Bad lines and repeated ids are reported and skipped;
/// the first record with a given id wins. Line numbers start at 1.
pub fn parse_jsonl(text: &str, fields: &FieldMap) -> LoadReport {
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let obj = match serde_json::from_str::<Value>(raw) {
            Ok(Value::Object(obj)) => obj,
            Ok(_) => {
                report.errors.push(schema(line, "not a JSON object"));
                continue;
            }
            Err(e) => {
                report.errors.push(schema(line, format!("invalid JSON: {e}")));
                continue;
            }
        };
        match parse_line(obj, line, fields) {
            Ok(rec) if !seen.insert(rec.id.clone()) => {
                report.errors.push(DatasetError::DuplicateId { line, id: rec.id });
            }
            Ok(rec) => report.records.push(rec),
            Err(e) => report.errors.push(e),
        }
    }
    report
}

/// Reads a dataset file. Only a missing or unreadable file is an `Err`;
/// per-line problems end up in the report.
pub fn load(path: &Path, fields: &FieldMap) -> Result<LoadReport, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => DatasetError::FileNotFound(path.to_path_buf()),
        _ => DatasetError::Io(e),
    })?;
    Ok(parse_jsonl(&text, fields))
}

/// Writes records in the layout [`load`] reads back unchanged: context as
/// a list, metadata as extra top-level fields.
pub fn write_jsonl(records: &[SourceRecord], fields: &FieldMap, out: &mut dyn Write) -> io::Result<()> {
    for r in records {
        let mut obj = Map::new();
        for (k, v) in &r.meta {
            obj.insert(k.clone(), Value::String(v.clone()));
        }
        obj.insert(fields.id_field.clone(), Value::String(r.id.clone()));
        obj.insert(fields.sentence_field.clone(), Value::String(r.sentence.clone()));
        obj.insert(
            fields.context_field.clone(),
            Value::Array(r.context.iter().cloned().map(Value::String).collect()),
        );
        if let Some(g) = &r.gold {
            obj.insert(fields.gold_field.clone(), Value::String(g.clone()));
        }
        writeln!(out, "{}", Value::Object(obj))?;
    }
    Ok(())
}

pub fn save(records: &[SourceRecord], path: &Path, fields: &FieldMap) -> io::Result<()> {
    let mut file = io::BufWriter::new(std::fs::File::create(path)?);
    write_jsonl(records, fields, &mut file)?;
    file.flush()
}

/// Descriptive statistics of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_samples: usize,
    /// Mean words per record over all context sentences together.
    pub avg_context_words: f64,
    pub avg_sentence_words: f64,
}

/// Tokens with at least one letter or digit.
pub fn word_count(text: &str) -> usize {
    tokenize(text).iter().filter(|t| !is_punctuation(t)).count()
}

pub fn stats(records: &[SourceRecord]) -> Result<DatasetStats, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let n = records.len() as f64;
    let context: usize = records.iter().flat_map(|r| &r.context).map(|s| word_count(s)).sum();
    let sentence: usize = records.iter().map(|r| word_count(&r.sentence)).sum();
    Ok(DatasetStats {
        n_samples: records.len(),
        avg_context_words: context as f64 / n,
        avg_sentence_words: sentence as f64 / n,
    })
}

/// Number of words in `rewritten` not accounted for by `original`, counted
/// as a multiset difference. Punctuation is ignored.
pub fn added_words(original: &str, rewritten: &str) -> usize {
    let mut have: HashMap<String, usize> = HashMap::new();
    for t in tokenize(original).into_iter().filter(|t| !is_punctuation(t)) {
        *have.entry(t).or_default() += 1;
    }
    let mut added = 0;
    for t in tokenize(rewritten).into_iter().filter(|t| !is_punctuation(t)) {
        match have.get_mut(&t) {
            Some(k) if *k > 0 => *k -= 1,
            _ => added += 1,
        }
    }
    added
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_failure_keeps_good_lines() {
        let text = r#"{"id":"a","sentence":"x","context":["c"]}
{"id":"b","context":["c"]}
{"id":"c","sentence":"y","context":"One. Two."}
{"id":"a","sentence":"z"}
"#;
        let rep = parse_jsonl(text, &FieldMap::default());
        assert_eq!(rep.records.len(), 2);
        assert_eq!(rep.records[1].context, ["One.", "Two."]);
        assert!(matches!(rep.errors[0], DatasetError::Schema { line: 2, .. }));
        assert!(matches!(rep.errors[1], DatasetError::DuplicateId { line: 4, .. }));
    }

    #[test]
    fn custom_field_names() {
        let fields = FieldMap { sentence_field: "target".into(), gold_field: "gold".into(), ..FieldMap::default() };
        let rep = parse_jsonl(r#"{"id":7,"target":"s","gold":"g","extra":"e"}"#, &fields);
        let r = &rep.records[0];
        assert_eq!((r.id.as_str(), r.gold.as_deref()), ("7", Some("g")));
        assert_eq!(r.meta["extra"], "e");
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load(Path::new("/nonexistent/x.jsonl"), &FieldMap::default()),
            Err(DatasetError::FileNotFound(_))
        ));
    }

    #[test]
    fn simple_stats() {
        let s = stats(&[SourceRecord::new("1", "a b c", vec![])]).unwrap();
        assert_eq!((s.n_samples, s.avg_context_words, s.avg_sentence_words), (1, 0.0, 3.0));
        assert!(matches!(stats(&[]), Err(DatasetError::EmptyDataset)));
    }

    #[test]
    fn added() {
        assert_eq!(added_words("she ran", "mary ran home"), 2);
        assert_eq!(added_words("She ran.", "She ran."), 0);
    }
}
