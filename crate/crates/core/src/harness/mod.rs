//! Dataset ingestion, evaluation runs, oracle comparison and reports.

mod compare;
mod config;
mod dataset;
mod evaluate;
mod scores;

pub use compare::{oracle_compare, CompareRow, CompareSummary, CompareTable};
pub use config::{parse_grid, parse_methods, RunConfig};
pub use dataset::{load_dataset, parse_dataset, EvalRecord};
pub use evaluate::{
    configured_estimators, run_evaluation, run_evaluation_with, EvalReport, MethodReport,
    RecordScores, ToolInfo, Warnings,
};
pub use scores::{load_scores, parse_scores, ScoreLine};
