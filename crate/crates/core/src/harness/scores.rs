use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelspace::Taxonomy;
use crate::metrics::{LabelMatrix, ScoreMatrix};

/// One line of a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreLine {
    pub id: String,
    #[serde(default)]
    pub gold_labels: Vec<String>,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
struct ReportRecords {
    records: Vec<ReportRecord>,
}

#[derive(Debug, Deserialize)]
struct ReportRecord {
    id: String,
    gold_labels: Vec<String>,
    scores: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Reads scores for a threshold sweep.
///
/// Accepts either a JSON-lines score file (`{"id", "gold_labels", "scores"}`
/// per line) or an evaluation report, from which `method` selects the column.
pub fn load_scores(path: &Path, taxonomy: &Taxonomy, method: Option<&str>) -> Result<(ScoreMatrix, LabelMatrix)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_scores(&text, taxonomy, method)
}

pub fn parse_scores(text: &str, taxonomy: &Taxonomy, method: Option<&str>) -> Result<(ScoreMatrix, LabelMatrix)> {
    let lines = match serde_json::from_str::<ReportRecords>(text) {
        Ok(report) => {
            let method = method.ok_or_else(|| {
                Error::Config("reading scores from a report requires a method".into())
            })?;
            report
                .records
                .into_iter()
                .map(|r| {
                    let scores = r.scores.get(method).cloned().ok_or_else(|| {
                        Error::Config(format!("report has no {method:?} scores for record {:?}", r.id))
                    })?;
                    Ok(ScoreLine {
                        id: r.id,
                        gold_labels: r.gold_labels,
                        scores,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        Err(_) => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<ScoreLine>(l)
                    .map_err(|e| Error::parse(format!("line {}", i + 1), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?,
    };

    let mut score_rows = Vec::with_capacity(lines.len());
    let mut gold_rows = Vec::with_capacity(lines.len());
    let mut unknown = Vec::new();
    for line in &lines {
        let mut row = vec![0.0; taxonomy.len()];
        for (code, value) in &line.scores {
            match taxonomy.get(code) {
                Some(label) => row[label.index] = *value,
                None => unknown.push(line.id.clone()),
            }
        }
        let mut gold = vec![false; taxonomy.len()];
        for code in &line.gold_labels {
            match taxonomy.get(code) {
                Some(label) => gold[label.index] = true,
                None => unknown.push(line.id.clone()),
            }
        }
        score_rows.push(row);
        gold_rows.push(gold);
    }
    if !unknown.is_empty() {
        unknown.dedup();
        return Err(Error::UnknownLabel { ids: unknown });
    }
    Ok((
        ScoreMatrix::new(score_rows, taxonomy.len())?,
        LabelMatrix::new(gold_rows, taxonomy.len())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_jsonl_scores() {
        let t = Taxonomy::new(&["A", "B"]).unwrap();
        let text = "{\"id\":\"1\",\"gold_labels\":[\"A\"],\"scores\":{\"A\":0.9,\"B\":0.2}}\n\
                    {\"id\":\"2\",\"gold_labels\":[],\"scores\":{\"A\":0.1}}\n";
        let (s, g) = parse_scores(text, &t, None).unwrap();
        assert_eq!(s.rows(), 2);
        assert_eq!(s.get(1, 1), 0.0);
        assert!(g.get(0, 0) && !g.get(1, 0));
    }

    #[test]
    fn report_needs_method() {
        let t = Taxonomy::new(&["A"]).unwrap();
        let text = r#"{"records":[{"id":"1","gold_labels":["A"],"scores":{"marginal":{"A":0.4}}}]}"#;
        assert!(parse_scores(text, &t, None).is_err());
        let (s, _) = parse_scores(text, &t, Some("marginal")).unwrap();
        assert_eq!(s.get(0, 0), 0.4);
        assert!(parse_scores(text, &t, Some("joint")).is_err());
    }

    #[test]
    fn unknown_code_rejected() {
        let t = Taxonomy::new(&["A"]).unwrap();
        let text = "{\"id\":\"1\",\"scores\":{\"Z\":0.9}}\n";
        assert!(matches!(parse_scores(text, &t, None), Err(Error::UnknownLabel { .. })));
    }
}
