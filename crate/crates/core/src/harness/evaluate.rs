use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::dataset::EvalRecord;
use crate::error::{Error, Result};
use crate::estimators::{Estimate, Estimator, ExplorationStats, MethodEstimator, ScoreMap};
use crate::labelspace::Taxonomy;
use crate::metrics::{
    macro_auc, micro_f1, threshold_sweep, LabelAuc, LabelMatrix, ScoreMatrix, SweepPoint,
};
use crate::model::LanguageModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Warnings {
    /// Records whose exploration hit the node budget; scored as all zeros.
    pub budget_exceeded: usize,
    /// Greedy outputs outside the verdict grammar; read as safe.
    pub malformed_verdicts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub default_threshold: f64,
    pub micro_f1_at_default: f64,
    pub best_threshold: SweepPoint,
    pub sweep: Vec<SweepPoint>,
    /// Absent for binary methods or when every label is degenerate.
    pub macro_auc: Option<f64>,
    pub per_label_auc: Vec<LabelAuc>,
    pub skipped_labels: Vec<String>,
    pub stats: Option<ExplorationStats>,
    pub warnings: Warnings,
    /// Excluded from the machine-readable report to keep it reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordScores {
    pub id: String,
    pub gold_labels: Vec<String>,
    pub scores: BTreeMap<String, ScoreMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub tool: ToolInfo,
    pub config: RunConfig,
    pub taxonomy: Vec<String>,
    pub records_evaluated: usize,
    /// The run stopped early after the provider kept failing.
    pub partial: bool,
    pub abort_reason: Option<String>,
    pub methods: Vec<MethodReport>,
    /// Per-record scores, ordered by record id.
    pub records: Vec<RecordScores>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>10} {:>10} {:>8} {:>10} {:>12} {:>10}",
            "method", "F1@default", "F1@best", "best t", "macro AUC", "nodes", "time"
        );
        for m in &self.methods {
            let auc = m.macro_auc.map_or("--".to_owned(), |a| format!("{a:.4}"));
            let nodes = m.stats.map_or("--".to_owned(), |s| s.nodes_expanded.to_string());
            let _ = writeln!(
                out,
                "{:<20} {:>10.4} {:>10.4} {:>8.2} {:>10} {:>12} {:>9.2?}",
                m.method,
                m.micro_f1_at_default,
                m.best_threshold.micro_f1,
                m.best_threshold.threshold,
                auc,
                nodes,
                m.wall_time
            );
            if !m.skipped_labels.is_empty() && m.macro_auc.is_some() {
                let _ = writeln!(out, "  skipped degenerate labels: {}", m.skipped_labels.join(", "));
            }
            if m.warnings.budget_exceeded > 0 {
                let _ = writeln!(out, "  {} record(s) exceeded the node budget", m.warnings.budget_exceeded);
            }
            if m.warnings.malformed_verdicts > 0 {
                let _ = writeln!(out, "  {} malformed verdict(s) read as safe", m.warnings.malformed_verdicts);
            }
        }
        let _ = writeln!(out, "records: {}", self.records_evaluated);
        if self.partial {
            let _ = writeln!(
                out,
                "PARTIAL REPORT: {}",
                self.abort_reason.as_deref().unwrap_or("aborted")
            );
        }
        out
    }
}

/// Builds the built-in estimators selected by `config`.
pub fn configured_estimators(config: &RunConfig) -> Vec<MethodEstimator> {
    config
        .methods
        .iter()
        .map(|&method| MethodEstimator {
            method,
            decode: config.decode,
            marginal: config.marginal,
        })
        .collect()
}

pub fn run_evaluation(
    config: &RunConfig,
    model: &dyn LanguageModel,
    taxonomy: &Taxonomy,
    dataset: &[EvalRecord],
) -> Result<EvalReport> {
    let estimators = configured_estimators(config);
    let refs: Vec<&dyn Estimator> = estimators.iter().map(|e| e as &dyn Estimator).collect();
    run_evaluation_with(config, &refs, model, taxonomy, dataset)
}

enum Outcome {
    Scored(Estimate),
    OverBudget,
}

struct RecordOutcome {
    outcomes: Vec<(Outcome, Duration)>,
}

fn with_retries<T>(retries: usize, mut f: impl FnMut() -> Result<T>) -> Result<T> {
    let mut attempt = 0;
    loop {
        match f() {
            Err(Error::ProviderUnavailable(msg)) if attempt < retries => {
                attempt += 1;
                warn!("provider unavailable ({msg}); retry {attempt}/{retries}");
            }
            other => return other,
        }
    }
}

fn evaluate_record(
    config: &RunConfig,
    estimators: &[&dyn Estimator],
    model: &dyn LanguageModel,
    taxonomy: &Taxonomy,
    record: &EvalRecord,
) -> Result<RecordOutcome> {
    let prompt = record.prompt()?;
    let mut outcomes = Vec::with_capacity(estimators.len());
    for estimator in estimators {
        let start = Instant::now();
        let outcome = match with_retries(config.retries, || estimator.estimate(model, &prompt, taxonomy)) {
            Ok(estimate) => Outcome::Scored(estimate),
            Err(Error::BudgetExceeded { cap }) => {
                warn!("record {:?}: {} exceeded the node budget ({cap})", record.id, estimator.name());
                Outcome::OverBudget
            }
            Err(e) => return Err(e),
        };
        outcomes.push((outcome, start.elapsed()));
    }
    Ok(RecordOutcome { outcomes })
}

/// Runs arbitrary estimators over a dataset and assembles the report.
pub fn run_evaluation_with(
    config: &RunConfig,
    estimators: &[&dyn Estimator],
    model: &dyn LanguageModel,
    taxonomy: &Taxonomy,
    dataset: &[EvalRecord],
) -> Result<EvalReport> {
    if estimators.is_empty() {
        return Err(Error::Config("at least one method must be selected".into()));
    }
    let results: Vec<Result<RecordOutcome>> = if config.parallel_records {
        dataset
            .par_iter()
            .map(|r| evaluate_record(config, estimators, model, taxonomy, r))
            .collect()
    } else {
        // Stop querying once the provider is gone.
        let mut results = Vec::with_capacity(dataset.len());
        for record in dataset {
            let result = evaluate_record(config, estimators, model, taxonomy, record);
            let stop = matches!(result, Err(Error::ProviderUnavailable(_)));
            results.push(result);
            if stop {
                break;
            }
        }
        results
    };

    let mut completed = Vec::new();
    let mut abort_reason = None;
    for (record, result) in dataset.iter().zip(results) {
        match result {
            Ok(outcome) => completed.push((record, outcome)),
            Err(e @ Error::ProviderUnavailable(_)) => {
                abort_reason = Some(format!("record {:?}: {e}", record.id));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    completed.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let codes = taxonomy.codes();
    let gold = LabelMatrix::new(
        completed.iter().map(|(r, _)| r.gold_vector(taxonomy)).collect(),
        taxonomy.len(),
    )?;

    let mut methods = Vec::with_capacity(estimators.len());
    let mut per_record: Vec<BTreeMap<String, ScoreMap>> = vec![BTreeMap::new(); completed.len()];
    for (m, estimator) in estimators.iter().enumerate() {
        let mut rows = Vec::with_capacity(completed.len());
        let mut warnings = Warnings::default();
        let mut stats: Option<ExplorationStats> = None;
        let mut wall_time = Duration::ZERO;
        for (i, (_, outcome)) in completed.iter().enumerate() {
            let (outcome, elapsed) = &outcome.outcomes[m];
            wall_time += *elapsed;
            let scores = match outcome {
                Outcome::Scored(estimate) => {
                    if estimate.malformed_output {
                        warnings.malformed_verdicts += 1;
                    }
                    if let Some(s) = &estimate.stats {
                        stats.get_or_insert_with(ExplorationStats::default).absorb(s);
                    }
                    estimate.scores.clone()
                }
                Outcome::OverBudget => {
                    warnings.budget_exceeded += 1;
                    ScoreMap::zeros(taxonomy)
                }
            };
            rows.push(scores.values().to_vec());
            per_record[i].insert(estimator.name().to_owned(), scores);
        }
        let matrix = ScoreMatrix::new(rows, taxonomy.len())?;
        let micro_f1_at_default = micro_f1(&gold, &matrix.threshold(config.default_threshold))?;
        let sweep = threshold_sweep(&matrix, &gold, &config.grid)?;
        let (macro_value, per_label_auc, skipped_labels) = if estimator.is_binary() || completed.is_empty() {
            (None, Vec::new(), Vec::new())
        } else {
            match macro_auc(&matrix, &gold, &codes) {
                Ok(m) => {
                    let skipped = m.skipped().map(str::to_owned).collect();
                    (Some(m.mean), m.per_label, skipped)
                }
                Err(Error::AllLabelsDegenerate) => (None, Vec::new(), codes.iter().map(|c| (*c).to_owned()).collect()),
                Err(e) => return Err(e),
            }
        };
        if estimator.name() == "marginal" && stats.is_none() {
            stats = Some(ExplorationStats::default());
        }
        methods.push(MethodReport {
            method: estimator.name().to_owned(),
            default_threshold: config.default_threshold,
            micro_f1_at_default,
            best_threshold: sweep.best,
            sweep: sweep.points,
            macro_auc: macro_value,
            per_label_auc,
            skipped_labels,
            stats,
            warnings,
            wall_time,
        });
    }

    let records = completed
        .iter()
        .zip(per_record)
        .map(|((record, _), scores)| RecordScores {
            id: record.id.clone(),
            gold_labels: record.gold_labels.clone(),
            scores,
        })
        .collect();

    Ok(EvalReport {
        tool: ToolInfo::default(),
        config: config.clone(),
        taxonomy: codes.iter().map(|c| (*c).to_owned()).collect(),
        records_evaluated: completed.len(),
        partial: abort_reason.is_some(),
        abort_reason,
        methods,
        records,
    })
}
