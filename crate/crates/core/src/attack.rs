//! Per-instance attack records.

use serde::{Deserialize, Serialize};

use crate::data::NliInstance;
use crate::generate::{GenerationOutcome, InconsistencySet, Provenance};
use crate::protocol::ForwardResponse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Reverse,
    Forward,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceError {
    pub stage: Stage,
    pub message: String,
}

/// What happened to one candidate explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackCandidateTrace {
    pub index: usize,
    pub candidate: Vec<String>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse_variable: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse: Option<ForwardResponse>,
    pub verified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TraceError>,
}

impl AttackCandidateTrace {
    pub fn is_errored(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackResult {
    pub instance: NliInstance,
    /// `None` when the initial forward query failed; see `error`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<ForwardResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<GenerationOutcome>,
    pub traces: Vec<AttackCandidateTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AttackResult {
    pub fn is_discarded(&self) -> bool {
        self.outcome.as_ref().is_some_and(GenerationOutcome::is_discarded)
    }

    pub fn set(&self) -> Option<&InconsistencySet> {
        self.outcome.as_ref().and_then(GenerationOutcome::set)
    }

    pub fn verified(&self) -> impl Iterator<Item = &AttackCandidateTrace> {
        self.traces.iter().filter(|t| t.verified)
    }

    pub fn errored_traces(&self) -> usize {
        self.traces.iter().filter(|t| t.is_errored()).count()
    }

    /// Re-checks every verified trace against the candidate set alone.
    pub fn verification_is_sound(&self) -> bool {
        let set = self.set();
        self.verified().all(|t| {
            let Some(reverse) = &t.reverse else { return false };
            set.is_some_and(|s| s.contains(&reverse.explanation.tokens))
        })
    }
}

/// Splits an instance into the context and variable sent on the wire. In
/// stand-alone mode the context is empty and the whole input is variable.
pub fn wire_input(instance: &NliInstance, standalone: bool) -> (String, String) {
    if !standalone {
        return (instance.context.clone(), instance.variable.clone());
    }
    let whole = if instance.context.trim().is_empty() {
        instance.variable.clone()
    } else {
        format!("{} {}", instance.context.trim(), instance.variable.trim())
    };
    (String::new(), whole)
}

/// Orders results by instance id; traces keep their candidate order.
pub fn sort_results(results: &mut [AttackResult]) {
    results.sort_by(|a, b| a.instance.id.cmp(&b.instance.id));
    for r in results.iter_mut() {
        r.traces.sort_by_key(|t| t.index);
    }
}
