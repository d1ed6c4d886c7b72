use log::warn;

use super::{DecodeConfig, ScoreMap};
use crate::error::{Error, Result};
use crate::labelspace::{parse_verdict, PathLabelTracker, Taxonomy, Verdict};
use crate::model::{greedy_decode, GreedyDecode, LanguageModel, Token};

/// A label recognized on a decoded path, and the step holding its final token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelStep {
    pub label: usize,
    pub step: usize,
}

/// Replays a decoded sequence and reports, for each label it contains, the
/// step that produced the last character of the label's first occurrence.
pub fn label_steps(decoded: &GreedyDecode, taxonomy: &Taxonomy, config: &DecodeConfig) -> Vec<LabelStep> {
    let mut tracker = PathLabelTracker::new(taxonomy, config.match_mode);
    let mut text = String::new();
    let mut ends = Vec::with_capacity(decoded.tokens.len());
    let mut found = Vec::new();
    for (step, token) in decoded.tokens.iter().enumerate() {
        text.push_str(token.text());
        ends.push(text.len());
        let complete = step + 1 == decoded.tokens.len();
        for (label, end) in tracker.pending(&text, complete) {
            tracker.mark(label);
            let step = ends.partition_point(|&e| e < end);
            found.push(LabelStep { label, step });
        }
    }
    found.sort_by_key(|s| s.label);
    found
}

/// Probability of the final label token at the step that emitted it.
pub fn conditional_scores<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    taxonomy: &Taxonomy,
    config: &DecodeConfig,
) -> Result<ScoreMap> {
    let decoded = greedy_decode(model, prompt, config.max_new_tokens)?;
    let mut scores = ScoreMap::zeros(taxonomy);
    for hit in label_steps(&decoded, taxonomy, config) {
        scores.set(hit.label, decoded.probabilities[hit.step]);
    }
    Ok(scores)
}

/// Probability of the greedy prefix up to and including the label's final
/// token, accumulated as a sum of log probabilities.
pub fn joint_scores<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    taxonomy: &Taxonomy,
    config: &DecodeConfig,
) -> Result<ScoreMap> {
    let decoded = greedy_decode(model, prompt, config.max_new_tokens)?;
    let mut prefix_log = Vec::with_capacity(decoded.probabilities.len());
    let mut running = 0.0;
    for p in &decoded.probabilities {
        running += p.ln();
        prefix_log.push(running);
    }
    let mut scores = ScoreMap::zeros(taxonomy);
    for hit in label_steps(&decoded, taxonomy, config) {
        scores.set(hit.label, prefix_log[hit.step].exp());
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyVerdict {
    pub verdict: Verdict,
    pub text: String,
    /// The output did not follow the verdict grammar and was read as safe.
    pub malformed: bool,
}

pub fn greedy_classify<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    taxonomy: &Taxonomy,
    config: &DecodeConfig,
) -> Result<GreedyVerdict> {
    let decoded = greedy_decode(model, prompt, config.max_new_tokens)?;
    let text = decoded.text();
    match parse_verdict(&text, taxonomy) {
        Ok(verdict) => Ok(GreedyVerdict {
            verdict,
            text,
            malformed: false,
        }),
        Err(Error::MalformedVerdict(_)) => {
            warn!("greedy output {text:?} is not a verdict; scoring as safe");
            Ok(GreedyVerdict {
                verdict: Verdict::safe(),
                text,
                malformed: true,
            })
        }
        Err(e) => Err(e),
    }
}

fn uniform_over_matched(
    decoded: &GreedyDecode,
    taxonomy: &Taxonomy,
    config: &DecodeConfig,
    value: f64,
) -> ScoreMap {
    let mut scores = ScoreMap::zeros(taxonomy);
    for hit in label_steps(decoded, taxonomy, config) {
        scores.set(hit.label, value);
    }
    scores
}

/// Chosen-token probability at the verdict head, shared by every predicted label.
pub fn probability_uncertainty<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    taxonomy: &Taxonomy,
    config: &DecodeConfig,
) -> Result<ScoreMap> {
    let decoded = greedy_decode(model, prompt, config.max_new_tokens)?;
    let head = decoded.probabilities[0];
    Ok(uniform_over_matched(&decoded, taxonomy, config, head))
}

/// One minus the normalized entropy of the head distribution, shared by every
/// predicted label. A single-token support scores 1.
pub fn entropy_uncertainty<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    taxonomy: &Taxonomy,
    config: &DecodeConfig,
) -> Result<ScoreMap> {
    let decoded = greedy_decode(model, prompt, config.max_new_tokens)?;
    let head = &decoded.head_distribution;
    let support = head.support_len();
    let confidence = if support <= 1 {
        1.0
    } else {
        let entropy: f64 = head
            .entries()
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(_, p)| -p * p.ln())
            .sum();
        1.0 - entropy / (support as f64).ln()
    };
    Ok(uniform_over_matched(&decoded, taxonomy, config, confidence.clamp(0.0, 1.0)))
}
