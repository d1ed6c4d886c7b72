use std::fmt::Write as _;

use serde::Serialize;

use super::config::RunConfig;
use super::dataset::EvalRecord;
use crate::error::Result;
use crate::estimators::{marginal_scores, ExplorationStats};
use crate::labelspace::Taxonomy;
use crate::model::LanguageModel;
use crate::oracle::exact_marginal;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub id: String,
    pub label: String,
    pub oracle: f64,
    pub estimate: f64,
    /// `oracle - estimate`; nonnegative whenever the search only drops paths.
    pub error: f64,
    pub abs_error: f64,
    pub nodes_expanded: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CompareSummary {
    pub rows: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    pub total_nodes_expanded: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CompareTable {
    /// Sorted by descending absolute error.
    pub rows: Vec<CompareRow>,
    pub summary: CompareSummary,
    pub stats: ExplorationStats,
}

impl CompareTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:<8} {:>14} {:>14} {:>12} {:>8}",
            "record", "label", "oracle", "estimate", "error", "nodes"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16} {:<8} {:>14.10} {:>14.10} {:>12.3e} {:>8}",
                r.id, r.label, r.oracle, r.estimate, r.error, r.nodes_expanded
            );
        }
        let s = &self.summary;
        let _ = writeln!(
            out,
            "rows: {}  max |error|: {:.3e}  mean |error|: {:.3e}  nodes expanded: {}",
            s.rows, s.max_abs_error, s.mean_abs_error, s.total_nodes_expanded
        );
        out
    }
}

/// Compares search-based marginals against exact enumeration for every
/// record and label. The oracle horizon is the search depth limit.
pub fn oracle_compare(
    config: &RunConfig,
    model: &dyn LanguageModel,
    taxonomy: &Taxonomy,
    dataset: &[EvalRecord],
) -> Result<CompareTable> {
    config.marginal.validate()?;
    let horizon = config.marginal.max_new_tokens;
    let mut rows = Vec::new();
    let mut stats = ExplorationStats::default();
    for record in dataset {
        let prompt = record.prompt()?;
        let exact = exact_marginal(model, &prompt, taxonomy, horizon)?;
        let (estimate, record_stats) = marginal_scores(model, &prompt, taxonomy, &config.marginal)?;
        stats.absorb(&record_stats);
        for ((code, oracle), (_, est)) in exact.iter().zip(estimate.iter()) {
            let error = oracle - est;
            rows.push(CompareRow {
                id: record.id.clone(),
                label: code.to_owned(),
                oracle,
                estimate: est,
                error,
                abs_error: error.abs(),
                nodes_expanded: record_stats.nodes_expanded,
            });
        }
    }
    // Stable sort keeps dataset and taxonomy order among equal errors.
    rows.sort_by(|a, b| b.abs_error.total_cmp(&a.abs_error));
    let summary = CompareSummary {
        rows: rows.len(),
        max_abs_error: rows.iter().map(|r| r.abs_error).fold(0.0, f64::max),
        mean_abs_error: if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.abs_error).sum::<f64>() / rows.len() as f64
        },
        total_nodes_expanded: stats.nodes_expanded,
    };
    Ok(CompareTable {
        rows,
        summary,
        stats,
    })
}
