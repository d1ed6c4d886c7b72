//! Per-label confidence estimators.
//!
//! Every estimator maps (model, prompt, taxonomy) to a [`ScoreMap`] holding one
//! confidence in `[0, 1]` per label. Conditional, joint and the two
//! uncertainty baselines read a single greedy decode; the marginal estimator
//! explores many generation paths.

mod greedy;
mod marginal;

use std::fmt;
use std::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::labelspace::{MatchMode, Taxonomy};
use crate::model::{LanguageModel, Token};

pub use greedy::{
    conditional_scores, entropy_uncertainty, greedy_classify, joint_scores, label_steps,
    probability_uncertainty, GreedyVerdict, LabelStep,
};
pub use marginal::{
    marginal_scores, marginal_scores_with_order, ExplorationStats, MarginalConfig,
    SiblingPermutation,
};

/// Confidence per taxonomy label, in taxonomy order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    codes: Vec<String>,
    scores: Vec<f64>,
}

impl ScoreMap {
    pub fn zeros(taxonomy: &Taxonomy) -> Self {
        Self {
            codes: taxonomy.codes().into_iter().map(str::to_owned).collect(),
            scores: vec![0.0; taxonomy.len()],
        }
    }

    pub fn from_values(taxonomy: &Taxonomy, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != taxonomy.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} scores for {} labels",
                scores.len(),
                taxonomy.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::validation("score map", format!("score {bad} outside [0, 1]")));
        }
        let mut map = Self::zeros(taxonomy);
        map.scores = scores;
        Ok(map)
    }

    pub fn get(&self, code: &str) -> Option<f64> {
        self.codes.iter().position(|c| c == code).map(|i| self.scores[i])
    }

    pub fn values(&self) -> &[f64] {
        &self.scores
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.codes.iter().map(String::as_str).zip(self.scores.iter().copied())
    }

    pub(crate) fn set(&mut self, index: usize, value: f64) {
        self.scores[index] = value.clamp(0.0, 1.0);
    }
}

impl Serialize for ScoreMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.codes.len()))?;
        for (code, score) in self.iter() {
            map.serialize_entry(code, &score)?;
        }
        map.end()
    }
}

impl fmt::Display for ScoreMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (code, score)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{code}={score:.6}")?;
        }
        Ok(())
    }
}

/// Settings shared by the estimators that read one greedy decode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub max_new_tokens: usize,
    pub match_mode: MatchMode,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 16,
            match_mode: MatchMode::LiteralSuffix,
        }
    }
}

/// Result of running one estimator on one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub scores: ScoreMap,
    /// Present only for path-exploring estimators.
    pub stats: Option<ExplorationStats>,
    /// The greedy output left the verdict grammar.
    pub malformed_output: bool,
}

impl Estimate {
    fn plain(scores: ScoreMap) -> Self {
        Self {
            scores,
            stats: None,
            malformed_output: false,
        }
    }
}

/// Scoring slot: anything that produces a [`ScoreMap`] for a prompt.
///
/// Third-party estimators plug into the evaluation harness through this trait.
pub trait Estimator: Send + Sync {
    fn name(&self) -> &str;

    /// Scores are hard 0/1 decisions, so ranking metrics are not reported.
    fn is_binary(&self) -> bool {
        false
    }

    fn estimate(
        &self,
        model: &dyn LanguageModel,
        prompt: &[Token],
        taxonomy: &Taxonomy,
    ) -> Result<Estimate>;
}

/// Built-in scoring methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Greedy,
    Conditional,
    Joint,
    Marginal,
    ProbUncertainty,
    EntropyUncertainty,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Greedy,
        Method::Conditional,
        Method::Joint,
        Method::Marginal,
        Method::ProbUncertainty,
        Method::EntropyUncertainty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Greedy => "greedy",
            Method::Conditional => "conditional",
            Method::Joint => "joint",
            Method::Marginal => "marginal",
            Method::ProbUncertainty => "prob-uncertainty",
            Method::EntropyUncertainty => "entropy-uncertainty",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// A built-in method bound to its settings.
#[derive(Debug, Clone)]
pub struct MethodEstimator {
    pub method: Method,
    pub decode: DecodeConfig,
    pub marginal: MarginalConfig,
}

impl Estimator for MethodEstimator {
    fn name(&self) -> &str {
        self.method.as_str()
    }

    fn is_binary(&self) -> bool {
        self.method == Method::Greedy
    }

    fn estimate(
        &self,
        model: &dyn LanguageModel,
        prompt: &[Token],
        taxonomy: &Taxonomy,
    ) -> Result<Estimate> {
        let decode = &self.decode;
        Ok(match self.method {
            Method::Greedy => {
                let verdict = greedy_classify(model, prompt, taxonomy, decode)?;
                let scores = ScoreMap::from_values(
                    taxonomy,
                    verdict
                        .verdict
                        .to_vector(taxonomy)
                        .into_iter()
                        .map(|b| if b { 1.0 } else { 0.0 })
                        .collect(),
                )?;
                Estimate {
                    scores,
                    stats: None,
                    malformed_output: verdict.malformed,
                }
            }
            Method::Conditional => Estimate::plain(conditional_scores(model, prompt, taxonomy, decode)?),
            Method::Joint => Estimate::plain(joint_scores(model, prompt, taxonomy, decode)?),
            Method::ProbUncertainty => {
                Estimate::plain(probability_uncertainty(model, prompt, taxonomy, decode)?)
            }
            Method::EntropyUncertainty => {
                Estimate::plain(entropy_uncertainty(model, prompt, taxonomy, decode)?)
            }
            Method::Marginal => {
                let (scores, stats) = marginal_scores(model, prompt, taxonomy, &self.marginal)?;
                Estimate {
                    scores,
                    stats: Some(stats),
                    malformed_output: false,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("beam".parse::<Method>().is_err());
    }

    #[test]
    fn score_map_rejects_out_of_range() {
        let t = Taxonomy::new(&["A", "B"]).unwrap();
        assert!(ScoreMap::from_values(&t, vec![0.5, 1.5]).is_err());
        assert!(ScoreMap::from_values(&t, vec![0.5]).is_err());
        let m = ScoreMap::from_values(&t, vec![0.25, 1.0]).unwrap();
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"{"A":0.25,"B":1.0}"#);
    }
}
