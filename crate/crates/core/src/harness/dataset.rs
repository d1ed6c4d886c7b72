use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelspace::Taxonomy;
use crate::model::{tokenize_prompt, Token};

/// One labeled input. For table models `text` holds the prompt token texts
/// joined by U+001F.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub gold_labels: Vec<String>,
}

impl EvalRecord {
    pub fn prompt(&self) -> Result<Vec<Token>> {
        tokenize_prompt(&self.text)
    }

    pub fn gold_vector(&self, taxonomy: &Taxonomy) -> Vec<bool> {
        let mut v = vec![false; taxonomy.len()];
        for code in &self.gold_labels {
            if let Some(label) = taxonomy.get(code) {
                v[label.index] = true;
            }
        }
        v
    }
}

pub fn load_dataset(path: &Path, taxonomy: &Taxonomy) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_dataset(&text, taxonomy)
}

/// Parses line-delimited JSON records; blank lines are ignored.
pub fn parse_dataset(text: &str, taxonomy: &Taxonomy) -> Result<Vec<EvalRecord>> {
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    let mut unknown = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let record: EvalRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(format!("line {line_no}"), e.to_string()))?;
        if !ids.insert(record.id.clone()) {
            return Err(Error::parse(
                format!("line {line_no}"),
                format!("duplicate id {:?}", record.id),
            ));
        }
        if record.gold_labels.iter().any(|c| taxonomy.get(c).is_none()) {
            unknown.push(record.id.clone());
        }
        records.push(record);
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownLabel { ids: unknown });
    }
    Ok(records)
}
