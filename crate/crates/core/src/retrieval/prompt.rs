use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RetrievalError;
use crate::dataset::Demonstration;

const BUILTIN: [(&str, &str); 4] = [
    ("nq", include_str!("../../templates/nq.json")),
    ("webq", include_str!("../../templates/webq.json")),
    ("sciq", include_str!("../../templates/sciq.json")),
    ("squad", include_str!("../../templates/squad.json")),
];

/// Prompt layout with `<Placeholder>` slots.
///
/// `<Question>` binds to the demonstration query and `<Answer>` to its
/// annotation; any other placeholder binds to the extra field of the same
/// name, lower-cased (`<Support>` reads `support`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub demo_block: String,
    pub query_block: String,
    pub separator: String,
    pub field_order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment<'a> {
    Text(&'a str),
    Field(&'a str),
}

/// Splits a block into literal text and `<Name>` placeholders. Angle brackets
/// that do not enclose a bare identifier are literal text.
fn segments(block: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = block;
    while let Some(open) = rest.find('<') {
        let after = &rest[open + 1..];
        let close = after.find('>');
        match close {
            Some(c) if c > 0 && after[..c].chars().all(|ch| ch.is_alphanumeric() || ch == '_') => {
                if open > 0 {
                    out.push(Segment::Text(&rest[..open]));
                }
                out.push(Segment::Field(&after[..c]));
                rest = &after[c + 1..];
            }
            _ => {
                out.push(Segment::Text(&rest[..open + 1]));
                rest = after;
            }
        }
    }
    if !rest.is_empty() {
        out.push(Segment::Text(rest));
    }
    out
}

impl PromptTemplate {
    /// Built-in layouts: `nq`, `webq`, `sciq`, `squad`.
    pub fn builtin(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        BUILTIN
            .iter()
            .find(|(n, _)| *n == lower)
            .map(|(_, json)| serde_json::from_str(json).expect("built-in template parses"))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    pub fn from_json(text: &str) -> Result<Self, RetrievalError> {
        let t: Self = serde_json::from_str(text).map_err(|e| RetrievalError::Template(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    /// Resolves a built-in name or reads a JSON template file.
    pub fn load(name_or_path: &str) -> Result<Self, RetrievalError> {
        if let Some(t) = Self::builtin(name_or_path) {
            return Ok(t);
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path).map_err(|e| {
            RetrievalError::Template(format!("{name_or_path}: not a built-in template and unreadable: {e}"))
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        for block in [&self.demo_block, &self.query_block] {
            for seg in segments(block) {
                if let Segment::Field(f) = seg {
                    if !self.field_order.iter().any(|o| o == f) {
                        return Err(RetrievalError::Template(format!(
                            "placeholder <{f}> missing from field_order"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn render_block(&self, block: &str, demo: &Demonstration, out: &mut String) -> Result<(), RetrievalError> {
        for seg in segments(block) {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Field(f) => out.push_str(field_value(demo, f)?),
            }
        }
        Ok(())
    }

    /// Renders demonstrations in the given order followed by the query block.
    pub fn render(&self, demos: &[&Demonstration], query: &Demonstration) -> Result<String, RetrievalError> {
        let mut out = String::new();
        for d in demos {
            self.render_block(&self.demo_block, d, &mut out)?;
            out.push_str(&self.separator);
        }
        self.render_block(&self.query_block, query, &mut out)?;
        Ok(out)
    }
}

fn field_value<'a>(demo: &'a Demonstration, field: &str) -> Result<&'a str, RetrievalError> {
    match field {
        "Question" => Ok(&demo.query),
        "Answer" => Ok(&demo.annotation),
        other => demo
            .fields
            .get(&other.to_lowercase())
            .or_else(|| demo.fields.get(other))
            .map(String::as_str)
            .ok_or_else(|| RetrievalError::MissingField {
                field: other.to_string(),
                sample_id: demo.sample_id.clone(),
            }),
    }
}

/// Builds the ICL prompt for `query` from `demos`, most relevant first.
pub fn build_prompt(
    template: &PromptTemplate,
    demos: &[&Demonstration],
    query: &Demonstration,
) -> Result<String, RetrievalError> {
    template.render(demos, query)
}
