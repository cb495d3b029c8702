//! Demonstrations and their JSONL file format.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: line {line}: duplicate sample id {id:?}")]
    DuplicateId { path: String, line: usize, id: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One `(query, annotation)` pair.
///
/// `gold_is_noisy` is evaluation metadata: nothing on the detection path
/// reads it. Extra string fields (e.g. `support`, `context`) are kept in
/// `fields` and are available to prompt templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    #[serde(rename = "id")]
    pub sample_id: String,
    pub query: String,
    pub annotation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_is_noisy: Option<bool>,
    #[serde(flatten)]
    pub fields: BTreeMap<String, String>,
}

impl Demonstration {
    pub fn new(id: impl Into<String>, query: impl Into<String>, annotation: impl Into<String>) -> Self {
        Self {
            sample_id: id.into(),
            query: query.into(),
            annotation: annotation.into(),
            topic: None,
            gold_is_noisy: None,
            fields: BTreeMap::new(),
        }
    }

    pub fn with_topic(mut self, topic: impl Into<String>) -> Self {
        self.topic = Some(topic.into());
        self
    }

    pub fn with_field(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.fields.insert(key.into(), value.into());
        self
    }
}

/// Parses JSONL from a string; `origin` labels error messages.
pub fn parse_jsonl(text: &str, origin: &str) -> Result<Vec<Demonstration>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let demo: Demonstration = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            path: origin.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(demo.sample_id.clone()) {
            return Err(DatasetError::DuplicateId {
                path: origin.to_string(),
                line: line_no,
                id: demo.sample_id,
            });
        }
        out.push(demo);
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Demonstration>, DatasetError> {
    let label = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: label.clone(), source })?;
    parse_jsonl(&text, &label)
}

pub fn to_jsonl(demos: &[Demonstration]) -> String {
    let mut out = String::new();
    for d in demos {
        out.push_str(&serde_json::to_string(d).expect("demonstration serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, demos: &[Demonstration]) -> Result<(), DatasetError> {
    let label = path.display().to_string();
    let mut f = fs::File::create(path).map_err(|source| DatasetError::Io { path: label.clone(), source })?;
    f.write_all(to_jsonl(demos).as_bytes())
        .map_err(|source| DatasetError::Io { path: label, source })
}

/// Reads an annotation corpus. `.jsonl` files contribute their `annotation`
/// field (or the whole line when it is a JSON string); any other file
/// contributes one annotation per non-empty line.
pub fn read_annotation_corpus(path: &Path) -> Result<Vec<String>, DatasetError> {
    let label = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| DatasetError::Io { path: label.clone(), source })?;
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io { path: label.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        if !is_jsonl {
            out.push(line.trim().to_string());
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            path: label.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let annotation = match &value {
            serde_json::Value::String(s) => s.clone(),
            v => v
                .get("annotation")
                .and_then(|a| a.as_str())
                .ok_or_else(|| DatasetError::Parse {
                    path: label.clone(),
                    line: i + 1,
                    message: "missing string field \"annotation\"".into(),
                })?
                .to_string(),
        };
        out.push(annotation);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = r#"{"id":"a","query":"q1","annotation":"x","topic":"t"}
{"id":"b","query":"q2","annotation":"y","gold_is_noisy":true,"support":"because"}

"#;
        let demos = parse_jsonl(text, "mem").unwrap();
        assert_eq!(demos.len(), 2);
        assert_eq!(demos[1].fields["support"], "because");
        assert_eq!(demos[1].gold_is_noisy, Some(true));
        let again = parse_jsonl(&to_jsonl(&demos), "mem").unwrap();
        assert_eq!(demos, again);
    }

    #[test]
    fn reports_line_number() {
        let text = "{\"id\":\"a\",\"query\":\"q\",\"annotation\":\"x\"}\n{broken\n";
        match parse_jsonl(text, "f.jsonl") {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_ids() {
        let text = "{\"id\":\"a\",\"query\":\"q\",\"annotation\":\"x\"}\n{\"id\":\"a\",\"query\":\"r\",\"annotation\":\"y\"}\n";
        assert!(matches!(parse_jsonl(text, "f"), Err(DatasetError::DuplicateId { line: 2, .. })));
    }

    #[test]
    fn corpus_formats() {
        let dir = tempfile::tempdir().unwrap();
        let txt = dir.path().join("c.txt");
        fs::write(&txt, "alpha\n\n beta gamma \n").unwrap();
        assert_eq!(read_annotation_corpus(&txt).unwrap(), vec!["alpha", "beta gamma"]);
        let jl = dir.path().join("c.jsonl");
        fs::write(&jl, "{\"annotation\":\"x y\"}\n\"z\"\n").unwrap();
        assert_eq!(read_annotation_corpus(&jl).unwrap(), vec!["x y", "z"]);
    }
}
