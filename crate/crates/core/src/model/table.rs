use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Context, LanguageModel, NextTokenDistribution, Token, EOS_MARKER, KEY_SEPARATOR};
use crate::error::{Error, Result};

/// On-disk form of a [`TableModel`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableModelDocument {
    pub vocabulary: Vec<String>,
    #[serde(default)]
    pub transitions: BTreeMap<String, BTreeMap<String, f64>>,
    pub default: BTreeMap<String, f64>,
}

/// Immutable table-driven model: a distribution per context key, with a
/// fallback for keys the table does not list.
#[derive(Debug, Clone)]
pub struct TableModel {
    vocabulary: Vec<Token>,
    transitions: HashMap<String, NextTokenDistribution>,
    default: NextTokenDistribution,
}

impl TableModel {
    pub fn from_document(doc: TableModelDocument) -> Result<Self> {
        let mut vocabulary = Vec::with_capacity(doc.vocabulary.len());
        let mut known = HashSet::new();
        for surface in &doc.vocabulary {
            let token = Token::from_surface(surface)
                .map_err(|_| Error::validation("vocabulary", "empty token text"))?;
            if !known.insert(surface.as_str()) {
                return Err(Error::validation(
                    "vocabulary",
                    format!("token {surface:?} listed twice"),
                ));
            }
            vocabulary.push(token);
        }

        let build = |subject: &str, table: &BTreeMap<String, f64>| -> Result<NextTokenDistribution> {
            let mut entries = Vec::with_capacity(table.len());
            for (surface, p) in table {
                if !known.contains(surface.as_str()) {
                    return Err(Error::validation(
                        subject,
                        format!("token {surface:?} is not in the vocabulary"),
                    ));
                }
                entries.push((Token::from_surface(surface)?, *p));
            }
            NextTokenDistribution::new(entries)
                .map_err(|e| Error::validation(subject, e.to_string()))
        };

        let mut transitions = HashMap::with_capacity(doc.transitions.len());
        for (key, table) in &doc.transitions {
            let subject = format!("context {}", printable_key(key));
            if key.split(KEY_SEPARATOR).any(|s| s == EOS_MARKER || s.is_empty()) {
                return Err(Error::validation(
                    subject,
                    "context keys may not contain EOS or empty tokens",
                ));
            }
            transitions.insert(key.clone(), build(&subject, table)?);
        }
        let default = build("default distribution", &doc.default)?;
        Ok(Self {
            vocabulary,
            transitions,
            default,
        })
    }

    pub fn vocabulary(&self) -> &[Token] {
        &self.vocabulary
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn default_distribution(&self) -> &NextTokenDistribution {
        &self.default
    }

    pub fn to_document(&self) -> TableModelDocument {
        let table = |d: &NextTokenDistribution| {
            d.entries()
                .iter()
                .map(|(t, p)| (t.surface().to_owned(), *p))
                .collect()
        };
        TableModelDocument {
            vocabulary: self.vocabulary.iter().map(|t| t.surface().to_owned()).collect(),
            transitions: self
                .transitions
                .iter()
                .map(|(k, d)| (k.clone(), table(d)))
                .collect(),
            default: table(&self.default),
        }
    }
}

impl LanguageModel for TableModel {
    fn next_distribution(&self, context: &Context) -> Result<NextTokenDistribution> {
        context.validate_for_query()?;
        Ok(self
            .transitions
            .get(&context.key())
            .unwrap_or(&self.default)
            .clone())
    }
}

fn printable_key(key: &str) -> String {
    format!("{:?}", key.replace(KEY_SEPARATOR, " | "))
}

/// Parses and validates a toy-model JSON document.
pub fn load_table_model(document: &str) -> Result<TableModel> {
    let doc: TableModelDocument = serde_json::from_str(document).map_err(|e| {
        Error::parse(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    TableModel::from_document(doc)
}
