//! Autoregressive model abstraction.
//!
//! A model is anything that, given a prompt and the tokens generated so far,
//! returns a normalized distribution over its next token. Two providers ship
//! with the crate: [`TableModel`], a table-driven toy model loaded from a JSON
//! document, and [`RemoteModel`], an HTTP client for an external server.

mod remote;
mod table;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use remote::{CachedModel, RemoteModel, DISTRIBUTION_PATH};
pub use table::{load_table_model, TableModel, TableModelDocument};

/// Surface form reserved for the end-of-sequence token in documents and on the wire.
pub const EOS_MARKER: &str = "</s>";

/// Separator between token texts in context keys and pre-tokenized prompts.
pub const KEY_SEPARATOR: char = '\u{1F}';

/// Tolerance on the total mass of a distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// One vocabulary unit.
///
/// The end-of-sequence token carries an empty text, so it decodes to nothing
/// and sorts ahead of every ordinary token on probability ties.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    text: String,
    is_eos: bool,
}

impl Token {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.is_empty() {
            return Err(Error::validation("token", "token text must be non-empty"));
        }
        if text == EOS_MARKER {
            return Ok(Self::eos());
        }
        Ok(Self {
            text,
            is_eos: false,
        })
    }

    pub fn eos() -> Self {
        Self {
            text: String::new(),
            is_eos: true,
        }
    }

    /// Parses a surface form where [`EOS_MARKER`] denotes end-of-sequence.
    pub fn from_surface(surface: &str) -> Result<Self> {
        Self::new(surface)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn is_eos(&self) -> bool {
        self.is_eos
    }

    /// Text used in documents, context keys and wire messages.
    pub fn surface(&self) -> &str {
        if self.is_eos {
            EOS_MARKER
        } else {
            &self.text
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.surface())
    }
}

impl Ord for Token {
    fn cmp(&self, other: &Self) -> Ordering {
        self.text
            .cmp(&other.text)
            .then(other.is_eos.cmp(&self.is_eos))
    }
}

impl PartialOrd for Token {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Splits a pre-tokenized prompt (token texts joined by [`KEY_SEPARATOR`]).
pub fn tokenize_prompt(text: &str) -> Result<Vec<Token>> {
    text.split(KEY_SEPARATOR)
        .map(|piece| {
            let token = Token::new(piece)?;
            if token.is_eos() {
                return Err(Error::validation("prompt", "prompt may not contain EOS"));
            }
            Ok(token)
        })
        .collect()
}

/// Canonical order: probability descending, then token text ascending.
pub(crate) fn canonical_order(a: &(Token, f64), b: &(Token, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// A validated next-token distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    entries: Vec<(Token, f64)>,
}

impl NextTokenDistribution {
    /// Validates and stores `entries` in canonical order.
    pub fn new(mut entries: Vec<(Token, f64)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        let mut total = 0.0;
        for (token, p) in &entries {
            if !p.is_finite() || *p < 0.0 || *p > 1.0 {
                return Err(Error::MalformedDistribution(format!(
                    "probability {p} for token {token:?} outside [0, 1]"
                )));
            }
            if !seen.insert(token) {
                return Err(Error::MalformedDistribution(format!(
                    "token {token:?} repeated"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::MalformedDistribution(format!(
                "probabilities sum to {total}, expected 1 within {NORMALIZATION_TOLERANCE}"
            )));
        }
        entries.sort_by(canonical_order);
        Ok(Self { entries })
    }

    /// Entries in canonical order.
    pub fn entries(&self) -> &[(Token, f64)] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn probability(&self, token: &Token) -> f64 {
        self.entries
            .iter()
            .find(|(t, _)| t == token)
            .map_or(0.0, |(_, p)| *p)
    }

    /// Highest-probability entry, ties broken by token text.
    pub fn argmax(&self) -> &(Token, f64) {
        &self.entries[0]
    }

    pub fn support_len(&self) -> usize {
        self.entries.iter().filter(|(_, p)| *p > 0.0).count()
    }
}

/// The prompt plus the tokens generated so far.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Context {
    prompt: Vec<Token>,
    generated: Vec<Token>,
}

impl Context {
    pub fn new(prompt: Vec<Token>) -> Self {
        Self {
            prompt,
            generated: Vec::new(),
        }
    }

    pub fn with_generated(prompt: Vec<Token>, generated: Vec<Token>) -> Result<Self> {
        let ctx = Self { prompt, generated };
        if let Some(pos) = ctx.generated.iter().position(Token::is_eos) {
            if pos + 1 != ctx.generated.len() {
                return Err(Error::InvalidContext("EOS must be the last generated token".into()));
            }
        }
        Ok(ctx)
    }

    pub fn prompt(&self) -> &[Token] {
        &self.prompt
    }

    pub fn generated(&self) -> &[Token] {
        &self.generated
    }

    pub fn is_finished(&self) -> bool {
        self.generated.last().is_some_and(Token::is_eos)
    }

    pub(crate) fn push(&mut self, token: Token) {
        debug_assert!(!self.is_finished());
        self.generated.push(token);
    }

    pub(crate) fn pop(&mut self) -> Option<Token> {
        self.generated.pop()
    }

    /// Checks the preconditions every provider relies on.
    pub fn validate_for_query(&self) -> Result<()> {
        if self.prompt.is_empty() {
            return Err(Error::InvalidContext("prompt is empty".into()));
        }
        if self.generated.iter().any(Token::is_eos) {
            return Err(Error::InvalidContext("context already ended with EOS".into()));
        }
        Ok(())
    }

    /// Prompt and generated surfaces joined by [`KEY_SEPARATOR`].
    pub fn key(&self) -> String {
        let mut key = String::new();
        for (i, token) in self.prompt.iter().chain(&self.generated).enumerate() {
            if i > 0 {
                key.push(KEY_SEPARATOR);
            }
            key.push_str(token.surface());
        }
        key
    }

    pub fn surfaces(&self) -> Vec<String> {
        self.prompt
            .iter()
            .chain(&self.generated)
            .map(|t| t.surface().to_owned())
            .collect()
    }
}

/// Any source of next-token distributions.
///
/// Implementations must be deterministic and tolerate concurrent read-only queries.
pub trait LanguageModel: Send + Sync {
    fn next_distribution(&self, context: &Context) -> Result<NextTokenDistribution>;
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn next_distribution(&self, context: &Context) -> Result<NextTokenDistribution> {
        (**self).next_distribution(context)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn next_distribution(&self, context: &Context) -> Result<NextTokenDistribution> {
        (**self).next_distribution(context)
    }
}

/// Nucleus candidates in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenCandidates {
    entries: Vec<(Token, f64)>,
}

impl TokenCandidates {
    pub fn entries(&self) -> &[(Token, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn contains_eos(&self) -> bool {
        self.entries.iter().any(|(t, _)| t.is_eos())
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Token, f64)> {
        self.entries.iter()
    }
}

/// Smallest canonical-order prefix whose cumulative mass reaches `p`.
///
/// Zero-probability tokens are never returned. With `p >= 1` every token of
/// nonzero mass is kept, regardless of rounding in the running sum.
pub fn top_p_filter(dist: &NextTokenDistribution, p: f64) -> TokenCandidates {
    let mut entries = Vec::new();
    let mut cumulative = 0.0;
    for (token, prob) in dist.entries() {
        if *prob <= 0.0 {
            break;
        }
        entries.push((token.clone(), *prob));
        cumulative += prob;
        if p < 1.0 && cumulative >= p {
            break;
        }
    }
    if entries.is_empty() {
        // Unreachable for validated distributions; keep the argmax anyway.
        entries.push(dist.argmax().clone());
    }
    TokenCandidates { entries }
}

/// Output of [`greedy_decode`].
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyDecode {
    pub tokens: Vec<Token>,
    /// Probability of each chosen token under its step's distribution.
    pub probabilities: Vec<f64>,
    /// Distribution at the first generated position.
    pub head_distribution: NextTokenDistribution,
}

impl GreedyDecode {
    pub fn text(&self) -> String {
        decode_text(&self.tokens)
    }

    pub fn ended_with_eos(&self) -> bool {
        self.tokens.last().is_some_and(Token::is_eos)
    }
}

/// Concatenates token texts; EOS decodes to nothing.
pub fn decode_text(tokens: &[Token]) -> String {
    tokens.iter().map(Token::text).collect()
}

pub fn greedy_decode<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    max_tokens: usize,
) -> Result<GreedyDecode> {
    if max_tokens == 0 {
        return Err(Error::Config("max_tokens must be at least 1".into()));
    }
    let mut context = Context::new(prompt.to_vec());
    context.validate_for_query()?;
    let mut tokens = Vec::new();
    let mut probabilities = Vec::new();
    let mut head = None;
    while tokens.len() < max_tokens {
        let dist = model.next_distribution(&context)?;
        let (token, p) = dist.argmax().clone();
        if head.is_none() {
            head = Some(dist);
        }
        tokens.push(token.clone());
        probabilities.push(p);
        if token.is_eos() {
            break;
        }
        context.push(token);
    }
    Ok(GreedyDecode {
        tokens,
        probabilities,
        head_distribution: head.expect("at least one step is always taken"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(s: &str) -> Token {
        Token::new(s).unwrap()
    }

    fn dist(pairs: &[(&str, f64)]) -> NextTokenDistribution {
        NextTokenDistribution::new(pairs.iter().map(|(t, p)| (tok(t), *p)).collect()).unwrap()
    }

    fn texts(c: &TokenCandidates) -> Vec<&str> {
        c.iter().map(|(t, _)| t.surface()).collect()
    }

    #[test]
    fn top_p_smallest_covering_prefix() {
        let d = dist(&[("a", 0.5), ("b", 0.3), ("c", 0.15), ("d", 0.05)]);
        assert_eq!(texts(&top_p_filter(&d, 0.9)), ["a", "b", "c"]);
    }

    #[test]
    fn top_p_full_mass_keeps_nonzero() {
        let d = dist(&[("a", 0.5), ("b", 0.3), ("c", 0.2), ("z", 0.0)]);
        let c = top_p_filter(&d, 1.0);
        assert_eq!(texts(&c), ["a", "b", "c"]);
        assert!((c.total() - d.total()).abs() <= 1e-9);
    }

    #[test]
    fn top_p_single_token_covers() {
        let d = dist(&[("a", 1.0), ("b", 0.0)]);
        assert_eq!(texts(&top_p_filter(&d, 0.5)), ["a"]);
    }

    #[test]
    fn ties_break_by_text_with_eos_first() {
        let d = dist(&[(",", 0.5), (EOS_MARKER, 0.5)]);
        assert!(d.argmax().0.is_eos());
        let d = dist(&[("b", 0.5), ("a", 0.5)]);
        assert_eq!(d.argmax().0.text(), "a");
    }

    #[test]
    fn distribution_rejects_bad_mass() {
        let err = NextTokenDistribution::new(vec![(tok("a"), 0.5), (tok("b"), 0.3)]).unwrap_err();
        assert!(matches!(err, Error::MalformedDistribution(_)));
        let err = NextTokenDistribution::new(vec![(tok("a"), 0.5), (tok("a"), 0.5)]).unwrap_err();
        assert!(matches!(err, Error::MalformedDistribution(_)));
        let err = NextTokenDistribution::new(vec![(tok("a"), 1.5), (tok("b"), -0.5)]).unwrap_err();
        assert!(matches!(err, Error::MalformedDistribution(_)));
    }

    #[test]
    fn context_rejects_interior_eos() {
        let err = Context::with_generated(vec![tok("X")], vec![Token::eos(), tok("a")]).unwrap_err();
        assert!(matches!(err, Error::InvalidContext(_)));
        let ctx = Context::with_generated(vec![tok("X")], vec![tok("a"), Token::eos()]).unwrap();
        assert!(ctx.is_finished());
        assert!(ctx.validate_for_query().is_err());
    }

    #[test]
    fn context_key_joins_surfaces() {
        let ctx = Context::with_generated(vec![tok("X")], vec![tok("unsafe"), tok("\n")]).unwrap();
        assert_eq!(ctx.key(), "X\u{1F}unsafe\u{1F}\n");
    }

    #[test]
    fn token_rejects_empty_text() {
        assert!(Token::new("").is_err());
        assert!(Token::new(EOS_MARKER).unwrap().is_eos());
    }
}
