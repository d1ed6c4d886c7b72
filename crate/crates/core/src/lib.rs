//! Label-level confidence for generative classifiers.
//!
//! Guard-style models answer with a structured verdict (`safe`, or `unsafe`
//! followed by category codes). This crate turns such a model into a
//! multi-label scorer by reading token probabilities along its generation
//! paths:
//!
//! * [`estimators::conditional_scores`]: probability of a label's token on the greedy path;
//! * [`estimators::joint_scores`]: probability of the greedy prefix ending in the label;
//! * [`estimators::marginal_scores`]: total mass of generations containing the label,
//!   approximated by a pruned depth-first search.
//!
//! [`oracle`] computes exact marginals by enumeration on small models, [`metrics`]
//! scores predictions, and [`harness`] runs whole datasets.

pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod harness;
pub mod labelspace;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod sum;

pub use error::{Error, Result};
pub use estimators::{ExplorationStats, MarginalConfig, Method, ScoreMap};
pub use labelspace::{MatchMode, Taxonomy, Verdict};
pub use model::{LanguageModel, NextTokenDistribution, TableModel, Token};
