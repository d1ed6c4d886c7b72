//! Exact label marginals by exhaustive path enumeration.
//!
//! Only practical for small models, but free of every approximation the
//! search-based estimator makes: each complete sequence is listed with its
//! probability computed as a direct product, and a label's marginal is the
//! total probability of the sequences containing it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::ScoreMap;
use crate::labelspace::{contained_labels, Taxonomy};
use crate::model::{decode_text, Context, LanguageModel, Token};
use crate::sum::NeumaierSum;

pub const DEFAULT_PATH_CAP: usize = 1_000_000;

/// A complete generation (ending in EOS or at the horizon) and its probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedSequence {
    pub tokens: Vec<Token>,
    pub probability: f64,
}

impl WeightedSequence {
    pub fn text(&self) -> String {
        decode_text(&self.tokens)
    }
}

pub fn enumerate_paths<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    horizon: usize,
    floor: f64,
) -> Result<Vec<WeightedSequence>> {
    enumerate_paths_capped(model, prompt, horizon, floor, DEFAULT_PATH_CAP)
}

/// Enumerates, level by level, every path whose probability exceeds `floor`.
///
/// Fails with [`Error::StateExplosion`] as soon as the number of held paths
/// (finished plus frontier) exceeds `cap`. Output is sorted by token sequence.
pub fn enumerate_paths_capped<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    horizon: usize,
    floor: f64,
    cap: usize,
) -> Result<Vec<WeightedSequence>> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    if floor.is_nan() || floor < 0.0 {
        return Err(Error::Config(format!("floor {floor} must be nonnegative")));
    }
    let root = Context::new(prompt.to_vec());
    root.validate_for_query()?;

    let mut finished = Vec::new();
    let mut frontier: Vec<(Vec<Token>, f64)> = vec![(Vec::new(), 1.0)];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for (tokens, probability) in frontier {
            let ctx = Context::with_generated(prompt.to_vec(), tokens.clone())?;
            let dist = model.next_distribution(&ctx)?;
            for (token, p) in dist.entries() {
                let q = probability * p;
                if *p <= 0.0 || q <= floor {
                    continue;
                }
                let mut extended = tokens.clone();
                extended.push(token.clone());
                if token.is_eos() || extended.len() >= horizon {
                    finished.push(WeightedSequence {
                        tokens: extended,
                        probability: q,
                    });
                } else {
                    next.push((extended, q));
                }
                if finished.len() + next.len() > cap {
                    return Err(Error::StateExplosion { cap });
                }
            }
        }
        frontier = next;
    }
    finished.sort_by(|a, b| a.tokens.cmp(&b.tokens));
    Ok(finished)
}

/// Total probability of the enumerated sequences.
pub fn path_mass(paths: &[WeightedSequence]) -> f64 {
    paths.iter().map(|p| p.probability).collect::<NeumaierSum>().value()
}

/// Marginal of each label from an already enumerated path set.
pub fn marginal_from_paths(paths: &[WeightedSequence], taxonomy: &Taxonomy) -> ScoreMap {
    let mut sums = vec![NeumaierSum::new(); taxonomy.len()];
    for path in paths {
        for (sum, contained) in sums.iter_mut().zip(contained_labels(&path.text(), taxonomy)) {
            if contained {
                sum.add(path.probability);
            }
        }
    }
    let mut scores = ScoreMap::zeros(taxonomy);
    for (i, sum) in sums.iter().enumerate() {
        scores.set(i, sum.value());
    }
    scores
}

/// Exact marginal of each label over all sequences up to `horizon` tokens.
pub fn exact_marginal<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    taxonomy: &Taxonomy,
    horizon: usize,
) -> Result<ScoreMap> {
    let paths = enumerate_paths(model, prompt, horizon, 0.0)?;
    Ok(marginal_from_paths(&paths, taxonomy))
}
