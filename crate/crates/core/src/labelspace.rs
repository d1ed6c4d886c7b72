//! Category taxonomy, verdict grammar and label matching over decoded text.
//!
//! Guard-style classifiers answer either `safe` or `unsafe` followed by a
//! newline and a comma-separated list of category codes (`unsafe\nS1, S3`).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EOS_MARKER;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Label {
    pub index: usize,
    pub code: String,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

/// Ordered, closed set of category codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    labels: Vec<Label>,
    /// For each label, the indices of longer codes that start with its code.
    extenders: Vec<Vec<usize>>,
}

impl Taxonomy {
    pub fn new<S: AsRef<str>>(codes: &[S]) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::validation("taxonomy", "at least one label is required"));
        }
        let mut seen = HashSet::new();
        let mut labels = Vec::with_capacity(codes.len());
        for (index, code) in codes.iter().enumerate() {
            let code = code.as_ref();
            if code.is_empty() {
                return Err(Error::validation("taxonomy", format!("label {index} has an empty code")));
            }
            if !seen.insert(code) {
                return Err(Error::validation("taxonomy", format!("code {code:?} listed twice")));
            }
            labels.push(Label {
                index,
                code: code.to_owned(),
            });
        }
        let extenders = labels
            .iter()
            .map(|short| {
                labels
                    .iter()
                    .filter(|long| long.code.len() > short.code.len() && long.code.starts_with(&short.code))
                    .map(|long| long.index)
                    .collect()
            })
            .collect();
        Ok(Self { labels, extenders })
    }

    /// The fourteen hazard categories `S1` … `S14`.
    pub fn guard_default() -> Self {
        let codes: Vec<String> = (1..=14).map(|i| format!("S{i}")).collect();
        Self::new(&codes).expect("static taxonomy is valid")
    }

    /// Parses a JSON array of label codes.
    pub fn from_json(document: &str) -> Result<Self> {
        let codes: Vec<String> = serde_json::from_str(document).map_err(|e| {
            Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        Self::new(&codes)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, code: &str) -> Option<&Label> {
        self.labels.iter().find(|l| l.code == code)
    }

    pub fn codes(&self) -> Vec<&str> {
        self.labels.iter().map(|l| l.code.as_str()).collect()
    }

    /// True when no code is a proper prefix of another.
    pub fn is_prefix_free(&self) -> bool {
        self.extenders.iter().all(Vec::is_empty)
    }

    fn extenders(&self, index: usize) -> impl Iterator<Item = &Label> {
        self.extenders[index].iter().map(|&i| &self.labels[i])
    }
}

/// Parsed classifier answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    safe: bool,
    violated: Vec<Label>,
}

impl Verdict {
    pub fn safe() -> Self {
        Self {
            safe: true,
            violated: Vec::new(),
        }
    }

    /// An unsafe verdict; duplicates are collapsed and labels kept in taxonomy order.
    pub fn unsafe_with(labels: impl IntoIterator<Item = Label>) -> Result<Self> {
        let mut violated: Vec<Label> = labels.into_iter().collect();
        violated.sort();
        violated.dedup();
        if violated.is_empty() {
            return Err(Error::MalformedVerdict("unsafe verdict without labels".into()));
        }
        Ok(Self {
            safe: false,
            violated,
        })
    }

    pub fn is_safe(&self) -> bool {
        self.safe
    }

    pub fn violated(&self) -> &[Label] {
        &self.violated
    }

    /// Binary indicator vector in taxonomy order.
    pub fn to_vector(&self, taxonomy: &Taxonomy) -> Vec<bool> {
        let mut v = vec![false; taxonomy.len()];
        for label in &self.violated {
            v[label.index] = true;
        }
        v
    }

    pub fn render(&self) -> String {
        if self.safe {
            return "safe".to_owned();
        }
        let codes: Vec<&str> = self.violated.iter().map(|l| l.code.as_str()).collect();
        format!("unsafe\n{}", codes.join(", "))
    }
}

pub fn parse_verdict(text: &str, taxonomy: &Taxonomy) -> Result<Verdict> {
    let mut body = text.trim_end();
    while let Some(rest) = body.strip_suffix(EOS_MARKER) {
        body = rest.trim_end();
    }
    let body = body.trim_start();
    if body == "safe" {
        return Ok(Verdict::safe());
    }
    let Some(list) = body.strip_prefix("unsafe\n") else {
        return Err(Error::MalformedVerdict(text.to_owned()));
    };
    let mut labels = Vec::new();
    for code in list.split(',').map(str::trim) {
        match taxonomy.get(code) {
            Some(label) => labels.push(label.clone()),
            None => return Err(Error::MalformedVerdict(text.to_owned())),
        }
    }
    Verdict::unsafe_with(labels).map_err(|_| Error::MalformedVerdict(text.to_owned()))
}

/// How label codes are recognized in partially decoded text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Credit a code whenever the decoded text ends with it.
    #[default]
    #[serde(alias = "literal")]
    LiteralSuffix,
    /// Credit a code only once no longer code can still grow out of it.
    #[serde(alias = "boundary")]
    BoundarySafe,
}

impl std::str::FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" | "literal-suffix" => Ok(MatchMode::LiteralSuffix),
            "boundary" | "boundary-safe" => Ok(MatchMode::BoundarySafe),
            other => Err(Error::Config(format!("unknown match mode {other:?}"))),
        }
    }
}

/// Labels whose code is a suffix of `text`.
///
/// In boundary-safe mode a suffix match is withheld while some longer code
/// could still extend it at the same position.
pub fn match_terminal_labels(text: &str, taxonomy: &Taxonomy, mode: MatchMode) -> Vec<Label> {
    taxonomy
        .labels()
        .iter()
        .filter(|label| text.ends_with(&label.code))
        .filter(|label| match mode {
            MatchMode::LiteralSuffix => true,
            MatchMode::BoundarySafe => taxonomy.extenders(label.index).next().is_none(),
        })
        .cloned()
        .collect()
}

/// End offset of the earliest confirmed occurrence of each label in `text`.
///
/// An occurrence of a code at offset `s` is confirmed when no longer code that
/// extends it is present at `s`, and (unless the text is `complete`) the rest
/// of the text from `s` could not still grow into such a code.
pub fn confirmed_occurrences(text: &str, taxonomy: &Taxonomy, complete: bool) -> Vec<Option<usize>> {
    taxonomy
        .labels()
        .iter()
        .map(|label| {
            text.char_indices().find_map(|(start, _)| {
                let tail = &text[start..];
                if !tail.starts_with(&label.code) {
                    return None;
                }
                let shadowed = taxonomy.extenders(label.index).any(|long| {
                    tail.starts_with(&long.code) || (!complete && long.code.starts_with(tail))
                });
                (!shadowed).then_some(start + label.code.len())
            })
        })
        .collect()
}

/// Labels contained in a finished text at a confirmed boundary.
pub fn contained_labels(text: &str, taxonomy: &Taxonomy) -> Vec<bool> {
    confirmed_occurrences(text, taxonomy, true)
        .into_iter()
        .map(|end| end.is_some())
        .collect()
}

/// Tracks which labels have already been credited along one generation path,
/// so that each label is credited at most once per path.
#[derive(Debug, Clone)]
pub struct PathLabelTracker<'a> {
    taxonomy: &'a Taxonomy,
    mode: MatchMode,
    credited: Vec<bool>,
}

impl<'a> PathLabelTracker<'a> {
    pub fn new(taxonomy: &'a Taxonomy, mode: MatchMode) -> Self {
        Self {
            taxonomy,
            mode,
            credited: vec![false; taxonomy.len()],
        }
    }

    /// Labels matched by `text` that this path has not credited yet, paired
    /// with the end offset of the matching occurrence. `complete` marks the
    /// last text of a path (EOS or depth cutoff).
    pub fn pending(&self, text: &str, complete: bool) -> Vec<(usize, usize)> {
        match self.mode {
            MatchMode::LiteralSuffix => self
                .taxonomy
                .labels()
                .iter()
                .filter(|l| !self.credited[l.index] && text.ends_with(&l.code))
                .map(|l| (l.index, text.len()))
                .collect(),
            MatchMode::BoundarySafe => confirmed_occurrences(text, self.taxonomy, complete)
                .into_iter()
                .enumerate()
                .filter_map(|(i, end)| end.filter(|_| !self.credited[i]).map(|e| (i, e)))
                .collect(),
        }
    }

    pub fn mark(&mut self, index: usize) {
        self.credited[index] = true;
    }

    pub fn unmark(&mut self, index: usize) {
        self.credited[index] = false;
    }

    pub fn is_credited(&self, index: usize) -> bool {
        self.credited[index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tax(codes: &[&str]) -> Taxonomy {
        Taxonomy::new(codes).unwrap()
    }

    fn codes(labels: &[Label]) -> Vec<&str> {
        labels.iter().map(|l| l.code.as_str()).collect()
    }

    #[test]
    fn parses_unsafe_list() {
        let t = Taxonomy::guard_default();
        let v = parse_verdict("unsafe\nS1, S3", &t).unwrap();
        assert!(!v.is_safe());
        assert_eq!(codes(v.violated()), ["S1", "S3"]);
    }

    #[test]
    fn parses_safe_with_trailing_eos() {
        let t = Taxonomy::guard_default();
        assert!(parse_verdict("safe", &t).unwrap().is_safe());
        assert!(parse_verdict("safe</s>", &t).unwrap().is_safe());
        assert!(parse_verdict("\n\nsafe \n", &t).unwrap().is_safe());
    }

    #[test]
    fn collapses_duplicate_codes() {
        let t = Taxonomy::guard_default();
        let v = parse_verdict("unsafe\nS3,S1, S3", &t).unwrap();
        assert_eq!(codes(v.violated()), ["S1", "S3"]);
    }

    #[test]
    fn rejects_unknown_code_and_garbage() {
        let t = Taxonomy::guard_default();
        for text in ["unsafe\nS99", "maybe", "unsafe", "unsafe\n", "unsafe\nS1,,S2"] {
            assert!(
                matches!(parse_verdict(text, &t), Err(Error::MalformedVerdict(_))),
                "{text:?}"
            );
        }
    }

    #[test]
    fn terminal_match_only_sees_suffix() {
        let t = tax(&["S1", "S3"]);
        for mode in [MatchMode::LiteralSuffix, MatchMode::BoundarySafe] {
            assert_eq!(codes(&match_terminal_labels("unsafe\nS1, S3", &t, mode)), ["S3"]);
        }
        assert_eq!(codes(&match_terminal_labels("unsafe\nS1", &t, MatchMode::LiteralSuffix)), ["S1"]);
    }

    #[test]
    fn boundary_mode_withholds_extendable_code() {
        let t = tax(&["S1", "S11"]);
        assert!(match_terminal_labels("unsafe\nS1", &t, MatchMode::BoundarySafe).is_empty());
        assert_eq!(codes(&match_terminal_labels("unsafe\nS1", &t, MatchMode::LiteralSuffix)), ["S1"]);
        assert_eq!(codes(&match_terminal_labels("unsafe\nS11", &t, MatchMode::BoundarySafe)), ["S11"]);
    }

    #[test]
    fn confirmation_waits_for_boundary() {
        let t = tax(&["S1", "S11"]);
        assert_eq!(confirmed_occurrences("x S1", &t, false), [None, None]);
        assert_eq!(confirmed_occurrences("x S1", &t, true), [Some(4), None]);
        assert_eq!(confirmed_occurrences("x S1,", &t, false), [Some(4), None]);
        assert_eq!(confirmed_occurrences("x S11", &t, false), [None, Some(5)]);
        // "S12" can no longer become "S11", so it confirms "S1".
        assert_eq!(confirmed_occurrences("x S12", &t, false), [Some(4), None]);
    }

    #[test]
    fn tracker_credits_once() {
        let t = tax(&["S1", "S3"]);
        let mut tracker = PathLabelTracker::new(&t, MatchMode::LiteralSuffix);
        assert_eq!(tracker.pending("unsafe\nS1", false), [(0, 9)]);
        tracker.mark(0);
        assert!(tracker.pending("unsafe\nS1", true).is_empty());
        tracker.unmark(0);
        assert!(!tracker.is_credited(0));
    }

    #[test]
    fn taxonomy_validation() {
        assert!(Taxonomy::new::<&str>(&[]).is_err());
        assert!(Taxonomy::new(&["S1", "S1"]).is_err());
        assert!(Taxonomy::new(&["S1", ""]).is_err());
        assert!(Taxonomy::guard_default().len() == 14);
        assert!(!Taxonomy::guard_default().is_prefix_free());
        assert!(tax(&["S1", "S3"]).is_prefix_free());
        assert_eq!(Taxonomy::from_json(r#"["A","B"]"#).unwrap().codes(), ["A", "B"]);
    }
}
