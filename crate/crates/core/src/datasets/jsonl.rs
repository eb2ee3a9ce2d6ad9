use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses one JSON object per line. Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| JsonlError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, JsonlError> {
    parse_jsonl(&fs::read_to_string(path)?)
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize to JSON"));
        s.push('\n');
    }
    s
}

pub fn write_jsonl<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<(), JsonlError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::PreferenceRecord;

    #[test]
    fn round_trip_preferences() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prefs.jsonl");
        let recs: Vec<PreferenceRecord> = (0..3)
            .map(|i| PreferenceRecord {
                query: format!("q{i}"),
                chosen: "good answer".into(),
                rejected: "bad \"quoted\" answer".into(),
                chosen_total: 9 - i,
                rejected_total: 3,
            })
            .collect();
        write_jsonl(&recs, &path).unwrap();
        let back: Vec<PreferenceRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let mut text = String::new();
        for i in 0..6 {
            text.push_str(&format!("{{\"a\": {i}}}\n"));
        }
        text.push_str("{\"a\": \n");
        let err = parse_jsonl::<serde_json::Value>(&text).unwrap_err();
        assert!(matches!(err, JsonlError::Parse { line: 7, .. }), "{err}");
    }

    #[test]
    fn empty_file_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        fs::write(&path, "").unwrap();
        let v: Vec<serde_json::Value> = read_jsonl(&path).unwrap();
        assert!(v.is_empty());
        assert!(matches!(read_jsonl::<serde_json::Value>(dir.path().join("missing.jsonl")), Err(JsonlError::Io(_))));
    }
}
