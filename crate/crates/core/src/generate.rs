//! Candidate explanations inconsistent with a given one.
//!
//! Two rules feed the candidate list: dropping a single negation token, and
//! re-expressing the matched key elements through the templates of the other
//! labels.

use serde::{Deserialize, Serialize};

use crate::data::{Explanation, NliLabel};
use crate::template::TemplateSet;

/// Tokens removed by the negation rule.
pub const NEGATION_TOKENS: [&str; 2] = ["not", "n't"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum Provenance {
    /// The negation token at `position` was removed.
    Negation { position: usize },
    /// Instantiation of a variant of another label's template.
    Swap { template: String, variant: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub tokens: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InconsistencySet {
    pub source: Explanation,
    /// Label whose templates matched the source; `None` only for label-free
    /// sources that produced negation candidates alone.
    pub source_label: Option<NliLabel>,
    pub candidates: Vec<Candidate>,
}

impl InconsistencySet {
    pub fn contains(&self, tokens: &[String]) -> bool {
        self.position(tokens).is_some()
    }

    pub fn position(&self, tokens: &[String]) -> Option<usize> {
        self.candidates.iter().position(|c| c.tokens == tokens)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum GenerationOutcome {
    Generated(InconsistencySet),
    Discarded,
}

impl GenerationOutcome {
    pub fn set(&self) -> Option<&InconsistencySet> {
        match self {
            GenerationOutcome::Generated(s) => Some(s),
            GenerationOutcome::Discarded => None,
        }
    }

    pub fn is_discarded(&self) -> bool {
        matches!(self, GenerationOutcome::Discarded)
    }
}

/// One variant per negation token, each with exactly that occurrence removed.
pub fn negation_variants(tokens: &[String]) -> Vec<Vec<String>> {
    negation_candidates(tokens).into_iter().map(|c| c.tokens).collect()
}

fn negation_candidates(tokens: &[String]) -> Vec<Candidate> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| NEGATION_TOKENS.contains(&t.as_str()))
        .map(|(position, _)| {
            let mut v = tokens.to_vec();
            v.remove(position);
            Candidate {
                tokens: v,
                provenance: Provenance::Negation { position },
            }
        })
        .collect()
}

/// Matches `tokens` against the templates of `label` and re-instantiates the
/// binding in every wildcard-free variant of every other label's templates,
/// in file order. Empty when nothing matches.
pub fn swap_variants(tokens: &[String], label: NliLabel, templates: &TemplateSet) -> Vec<Candidate> {
    match templates.match_label(tokens, label) {
        Some(m) => swap_from(label, &m.binding, templates),
        None => Vec::new(),
    }
}

fn swap_from(label: NliLabel, binding: &crate::template::Binding, templates: &TemplateSet) -> Vec<Candidate> {
    templates
        .iter()
        .filter(|(t, _)| t.label != label)
        .flat_map(|(t, variants)| {
            variants.iter().enumerate().filter_map(move |(i, v)| {
                v.instantiate(binding).map(|tokens| Candidate {
                    tokens,
                    provenance: Provenance::Swap {
                        template: t.id.clone(),
                        variant: i,
                    },
                })
            })
        })
        .collect()
}

/// Builds the candidate set for `explanation`.
///
/// With a known label only that label's templates are matched. Without one,
/// labels are tried in canonical order and the matching label becomes the
/// source label. Negation candidates come first, then swaps; duplicates and
/// copies of the source are dropped.
pub fn build_inconsistency_set(
    explanation: &Explanation,
    label: Option<NliLabel>,
    templates: &TemplateSet,
) -> GenerationOutcome {
    let tokens = &explanation.tokens;
    let negations = negation_candidates(tokens);
    let matched = match label {
        Some(l) => templates.match_label(tokens, l),
        None => templates.match_any(tokens),
    };
    if negations.is_empty() && matched.is_none() {
        return GenerationOutcome::Discarded;
    }
    let (source_label, swaps) = match matched {
        Some(m) => (Some(m.template.label), swap_from(m.template.label, &m.binding, templates)),
        None => (label, Vec::new()),
    };

    let mut candidates: Vec<Candidate> = Vec::with_capacity(negations.len() + swaps.len());
    for c in negations.into_iter().chain(swaps) {
        if c.tokens != *tokens && !candidates.iter().any(|k| k.tokens == c.tokens) {
            candidates.push(c);
        }
    }
    GenerationOutcome::Generated(InconsistencySet {
        source: explanation.clone(),
        source_label,
        candidates,
    })
}
