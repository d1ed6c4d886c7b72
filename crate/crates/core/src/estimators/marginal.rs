//! Marginal label probability by bounded depth-first exploration.
//!
//! The search walks generation paths from the prompt, keeping at each node
//! only the nucleus candidates, and credits a label with the probability of
//! the prefix on which it first appears. Three cuts keep it tractable: a
//! probability floor on paths, the nucleus itself, and a depth limit, plus
//! two early-stop rules that abandon the remaining siblings of a node once a
//! likely end-of-sequence is seen.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ScoreMap;
use crate::error::{Error, Result};
use crate::labelspace::{MatchMode, PathLabelTracker, Taxonomy};
use crate::model::{top_p_filter, Context, LanguageModel, Token};
use crate::sum::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginalConfig {
    pub top_p: f64,
    pub prune_threshold: f64,
    pub max_new_tokens: usize,
    pub eos_break_prob: f64,
    pub third_token_eos_break: bool,
    pub match_mode: MatchMode,
    /// Hard cap on expanded nodes.
    pub node_budget: usize,
    /// Explore the root's children on the rayon pool.
    pub parallel: bool,
}

impl Default for MarginalConfig {
    fn default() -> Self {
        Self {
            top_p: 0.99,
            prune_threshold: 1e-7,
            max_new_tokens: 16,
            eos_break_prob: 0.7,
            third_token_eos_break: true,
            match_mode: MatchMode::LiteralSuffix,
            node_budget: 1_000_000,
            parallel: false,
        }
    }
}

impl MarginalConfig {
    /// Every cut and early stop switched off.
    pub fn exhaustive(max_new_tokens: usize) -> Self {
        Self {
            top_p: 1.0,
            prune_threshold: 0.0,
            max_new_tokens,
            eos_break_prob: 1.0,
            third_token_eos_break: false,
            match_mode: MatchMode::BoundarySafe,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top_p {} not in (0, 1]", self.top_p)));
        }
        if !(0.0..1.0).contains(&self.prune_threshold) {
            return Err(Error::Config(format!(
                "prune threshold {} not in [0, 1)",
                self.prune_threshold
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be at least 1".into()));
        }
        if !(self.eos_break_prob > 0.0 && self.eos_break_prob <= 1.0) {
            return Err(Error::Config(format!(
                "EOS break probability {} not in (0, 1]",
                self.eos_break_prob
            )));
        }
        if self.node_budget == 0 {
            return Err(Error::Config("node budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cost counters for one marginal computation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplorationStats {
    pub nodes_expanded: u64,
    pub model_calls: u64,
    pub paths_terminated: u64,
    /// Probability mass of paths dropped by the floor.
    pub mass_pruned: f64,
    /// Scores that had to be clamped into [0, 1].
    pub clamp_events: u64,
}

impl ExplorationStats {
    pub fn absorb(&mut self, other: &ExplorationStats) {
        self.nodes_expanded += other.nodes_expanded;
        self.model_calls += other.model_calls;
        self.paths_terminated += other.paths_terminated;
        self.mass_pruned += other.mass_pruned;
        self.clamp_events += other.clamp_events;
    }
}

/// Reorders a node's candidates before they are visited. Only meaningful with
/// the early-stop rules disabled, since those depend on visiting order.
pub type SiblingPermutation = dyn Fn(&Context, &mut Vec<(Token, f64)>) + Sync;

pub fn marginal_scores<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    taxonomy: &Taxonomy,
    config: &MarginalConfig,
) -> Result<(ScoreMap, ExplorationStats)> {
    marginal_scores_with_order(model, prompt, taxonomy, config, None)
}

/// [`marginal_scores`] with an optional candidate permutation applied at every node.
pub fn marginal_scores_with_order<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    taxonomy: &Taxonomy,
    config: &MarginalConfig,
    permutation: Option<&SiblingPermutation>,
) -> Result<(ScoreMap, ExplorationStats)> {
    config.validate()?;
    let mut root = Context::new(prompt.to_vec());
    root.validate_for_query()?;

    let expanded = AtomicUsize::new(0);
    let mut explorer = Explorer {
        model,
        config,
        permutation,
        expanded: &expanded,
        tracker: PathLabelTracker::new(taxonomy, config.match_mode),
        text: String::new(),
        credit: vec![NeumaierSum::new(); taxonomy.len()],
        stats: ExplorationStats::default(),
    };

    let children = explorer.expand(&root, 1.0, 0)?;
    if config.parallel && children.len() > 1 {
        let branches = children
            .into_par_iter()
            .map(|child| {
                let mut branch = explorer.fork();
                let mut ctx = root.clone();
                branch.descend(&mut ctx, child, 0)?;
                Ok((branch.credit, branch.stats))
            })
            .collect::<Result<Vec<_>>>()?;
        for (credit, stats) in branches {
            for (acc, part) in explorer.credit.iter_mut().zip(&credit) {
                acc.merge(part);
            }
            explorer.stats.absorb(&stats);
        }
    } else {
        for child in children {
            explorer.descend(&mut root, child, 0)?;
        }
    }

    let mut stats = explorer.stats;
    let mut scores = ScoreMap::zeros(taxonomy);
    for (i, acc) in explorer.credit.iter().enumerate() {
        let value = acc.value();
        if !(0.0..=1.0).contains(&value) {
            stats.clamp_events += 1;
        }
        scores.set(i, value);
    }
    Ok((scores, stats))
}

struct Child {
    token: Token,
    path_probability: f64,
    credited: Vec<usize>,
}

struct Explorer<'a, M: ?Sized> {
    model: &'a M,
    config: &'a MarginalConfig,
    permutation: Option<&'a SiblingPermutation>,
    expanded: &'a AtomicUsize,
    tracker: PathLabelTracker<'a>,
    /// Decoded text of the generated tokens on the current path.
    text: String,
    credit: Vec<NeumaierSum>,
    stats: ExplorationStats,
}

impl<'a, M: LanguageModel + ?Sized> Explorer<'a, M> {
    fn fork(&self) -> Self {
        Self {
            model: self.model,
            config: self.config,
            permutation: self.permutation,
            expanded: self.expanded,
            tracker: self.tracker.clone(),
            text: self.text.clone(),
            credit: vec![NeumaierSum::new(); self.credit.len()],
            stats: ExplorationStats::default(),
        }
    }

    /// Visits one node: credits labels completed by each candidate and returns
    /// the candidates to recurse into, honoring the early-stop rules.
    fn expand(&mut self, ctx: &Context, path_probability: f64, depth: usize) -> Result<Vec<Child>> {
        let cfg = self.config;
        if path_probability < cfg.prune_threshold {
            self.stats.mass_pruned += path_probability;
            return Ok(Vec::new());
        }
        if self.expanded.fetch_add(1, Ordering::Relaxed) >= cfg.node_budget {
            return Err(Error::BudgetExceeded {
                cap: cfg.node_budget,
            });
        }
        self.stats.nodes_expanded += 1;
        self.stats.model_calls += 1;
        let dist = self.model.next_distribution(ctx)?;
        let mut candidates = top_p_filter(&dist, cfg.top_p).entries().to_vec();
        if let Some(permute) = self.permutation {
            permute(ctx, &mut candidates);
        }
        let eos_among = candidates.iter().any(|(t, _)| t.is_eos());

        let base_len = self.text.len();
        let mut children = Vec::new();
        for (token, probability) in candidates {
            let child_probability = path_probability * probability;
            let complete = token.is_eos() || depth + 1 >= cfg.max_new_tokens;

            self.text.push_str(token.text());
            let pending = self.tracker.pending(&self.text, complete);
            self.text.truncate(base_len);
            for &(label, _) in &pending {
                self.credit[label].add(child_probability);
            }

            if token.is_eos() && probability >= cfg.eos_break_prob {
                self.stats.paths_terminated += 1;
                break;
            }
            if cfg.third_token_eos_break && eos_among && depth == 2 {
                self.stats.paths_terminated += 1;
                break;
            }
            if complete {
                self.stats.paths_terminated += 1;
                continue;
            }
            children.push(Child {
                token,
                path_probability: child_probability,
                credited: pending.into_iter().map(|(label, _)| label).collect(),
            });
        }
        Ok(children)
    }

    fn descend(&mut self, ctx: &mut Context, child: Child, depth: usize) -> Result<()> {
        let base_len = self.text.len();
        self.text.push_str(child.token.text());
        for &label in &child.credited {
            self.tracker.mark(label);
        }
        ctx.push(child.token);

        let result = self.explore(ctx, child.path_probability, depth + 1);

        ctx.pop();
        for &label in &child.credited {
            self.tracker.unmark(label);
        }
        self.text.truncate(base_len);
        result
    }

    fn explore(&mut self, ctx: &mut Context, path_probability: f64, depth: usize) -> Result<()> {
        for child in self.expand(ctx, path_probability, depth)? {
            self.descend(ctx, child, depth)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::worked_toy_model;
    use crate::model::load_table_model;

    fn prompt() -> Vec<Token> {
        vec![Token::new("X").unwrap()]
    }

    fn tax() -> Taxonomy {
        Taxonomy::new(&["S1", "S3"]).unwrap()
    }

    #[test]
    fn worked_model_exhaustive() {
        let (scores, stats) =
            marginal_scores(&worked_toy_model(), &prompt(), &tax(), &MarginalConfig::exhaustive(6)).unwrap();
        assert!((scores.get("S1").unwrap() - 0.42).abs() < 1e-9);
        assert!((scores.get("S3").unwrap() - 0.49).abs() < 1e-9);
        assert_eq!(stats.clamp_events, 0);
        // Nodes: X, safe, unsafe, \n, S1, S1-",", S1-","-S3, S3.
        assert_eq!(stats.nodes_expanded, 8);
    }

    #[test]
    fn literal_mode_defaults_agree_on_worked_model() {
        let cfg = MarginalConfig {
            top_p: 1.0,
            prune_threshold: 0.0,
            max_new_tokens: 6,
            ..MarginalConfig::default()
        };
        let (scores, _) = marginal_scores(&worked_toy_model(), &prompt(), &tax(), &cfg).unwrap();
        assert!((scores.get("S1").unwrap() - 0.42).abs() < 1e-9);
        assert!((scores.get("S3").unwrap() - 0.49).abs() < 1e-9);
    }

    #[test]
    fn deterministic_chain_scores_one() {
        let m = load_table_model(
            r#"{"vocabulary":["unsafe","\n","S1","</s>"],
                "transitions":{"X":{"unsafe":1.0},"X\u001Funsafe":{"\n":1.0},"X\u001Funsafe\u001F\n":{"S1":1.0}},
                "default":{"</s>":1.0}}"#,
        )
        .unwrap();
        let (scores, _) = marginal_scores(&m, &prompt(), &tax(), &MarginalConfig::default()).unwrap();
        assert_eq!(scores.values(), [1.0, 0.0]);
    }

    #[test]
    fn prune_threshold_only_lowers_scores() {
        let cfg = MarginalConfig {
            prune_threshold: 0.5,
            ..MarginalConfig::exhaustive(6)
        };
        let (scores, stats) = marginal_scores(&worked_toy_model(), &prompt(), &tax(), &cfg).unwrap();
        // Paths below 0.5 are cut: X-unsafe-\n-S1 (0.42) and X-unsafe-\n-S3 (0.28)
        // are still credited by their parent, whose mass 0.7 clears the floor.
        assert!(scores.get("S1").unwrap() <= 0.42 + 1e-12);
        assert!(scores.get("S3").unwrap() <= 0.49 + 1e-12);
        assert!((scores.get("S1").unwrap() - 0.42).abs() < 1e-12);
        assert!((scores.get("S3").unwrap() - 0.28).abs() < 1e-12);
        assert!(stats.mass_pruned > 0.0);
    }

    #[test]
    fn depth_limit_stops_recursion() {
        let cfg = MarginalConfig {
            max_new_tokens: 3,
            ..MarginalConfig::exhaustive(3)
        };
        let (scores, _) = marginal_scores(&worked_toy_model(), &prompt(), &tax(), &cfg).unwrap();
        // The S1-","-S3 path needs five tokens; only unsafe-\n-S3 credits S3.
        assert!((scores.get("S1").unwrap() - 0.42).abs() < 1e-12);
        assert!((scores.get("S3").unwrap() - 0.28).abs() < 1e-12);
    }

    #[test]
    fn likely_eos_stops_siblings() {
        // At "X": EOS 0.8 comes first and stops "unsafe" from being explored.
        let m = load_table_model(
            r#"{"vocabulary":["S1","</s>"],"transitions":{"X":{"</s>":0.8,"S1":0.2}},"default":{"</s>":1.0}}"#,
        )
        .unwrap();
        let (scores, _) = marginal_scores(&m, &prompt(), &tax(), &MarginalConfig::default()).unwrap();
        assert_eq!(scores.get("S1"), Some(0.0));
        let relaxed = MarginalConfig {
            eos_break_prob: 0.9,
            ..MarginalConfig::default()
        };
        let (scores, _) = marginal_scores(&m, &prompt(), &tax(), &relaxed).unwrap();
        assert!((scores.get("S1").unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn third_token_rule_keeps_only_first_candidate() {
        // Third position offers S1 0.6, S3 0.3, EOS 0.1: only S1 is credited.
        let m = load_table_model(
            r#"{"vocabulary":["a","b","S1","S3","</s>"],
                "transitions":{"X":{"a":1.0},"X\u001Fa":{"b":1.0},"X\u001Fa\u001Fb":{"S1":0.6,"S3":0.3,"</s>":0.1}},
                "default":{"</s>":1.0}}"#,
        )
        .unwrap();
        let cfg = MarginalConfig {
            top_p: 1.0,
            ..MarginalConfig::default()
        };
        let (scores, _) = marginal_scores(&m, &prompt(), &tax(), &cfg).unwrap();
        assert_eq!(scores.values(), [0.6, 0.0]);
        let off = MarginalConfig {
            third_token_eos_break: false,
            ..cfg
        };
        let (scores, _) = marginal_scores(&m, &prompt(), &tax(), &off).unwrap();
        assert_eq!(scores.values(), [0.6, 0.3]);
    }

    #[test]
    fn budget_is_enforced() {
        let cfg = MarginalConfig {
            node_budget: 3,
            ..MarginalConfig::exhaustive(6)
        };
        let err = marginal_scores(&worked_toy_model(), &prompt(), &tax(), &cfg).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { cap: 3 }));
    }

    #[test]
    fn parallel_matches_sequential() {
        let seq = MarginalConfig::exhaustive(6);
        let par = MarginalConfig {
            parallel: true,
            ..seq
        };
        let (a, sa) = marginal_scores(&worked_toy_model(), &prompt(), &tax(), &seq).unwrap();
        let (b, sb) = marginal_scores(&worked_toy_model(), &prompt(), &tax(), &par).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert_eq!(sa.nodes_expanded, sb.nodes_expanded);
    }

    #[test]
    fn invalid_config_rejected() {
        for cfg in [
            MarginalConfig { top_p: 0.0, ..Default::default() },
            MarginalConfig { top_p: 1.5, ..Default::default() },
            MarginalConfig { prune_threshold: 1.0, ..Default::default() },
            MarginalConfig { max_new_tokens: 0, ..Default::default() },
            MarginalConfig { eos_break_prob: 0.0, ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
