//! A deterministic, fact-based stand-in for the forward and reverse models.
//!
//! Each fact `(x, y, label)` is realized as one canonical explanation per
//! label:
//!
//! | label         | explanation           |
//! |---------------|-----------------------|
//! | entailment    | `x is a type of y`    |
//! | neutral       | `not all x are y`     |
//! | contradiction | `x is not y`          |
//!
//! The forward oracle answers with the realization of the fact's own label.
//! The reverse oracle turns a canonical explanation back into a hypothesis;
//! realizations of a foreign label produce a hypothesis carrying a label
//! marker ("certainly", "perhaps", "it is false that"). A seeded fact answers
//! such a marked hypothesis with the foreign realization when the marker names
//! its [`seed_target`] label, which is exactly one inconsistency per attack on
//! that fact. Unseeded facts always answer consistently.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{join_tokens, normalize, Explanation, NliInstance, NliLabel};
use crate::protocol::{ForwardResponse, Mode, ModelHandler, Query, Reply, Request, ReverseResponse};
use crate::template::TemplateSet;

pub const FALLBACK_EXPLANATION: &str = "no supporting fact";
pub const FALLBACK_HYPOTHESIS: &str = "something is happening";

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("duplicate fact key `{0}`")]
    DuplicateKey(String),
    #[error("seed `{0}` names no fact")]
    UnknownSeed(String),
    #[error("seed `{0}` is listed twice")]
    DuplicateSeed(String),
    #[error("fact `{0}` has an empty side")]
    EmptyFact(String),
    #[error("fact `{key}`: the {label} realization does not round-trip through the templates")]
    Unrealizable { key: String, label: NliLabel },
    #[error("cannot seed {seeded} of {facts} facts")]
    TooManySeeds { seeded: usize, facts: usize },
    #[error("cannot read oracle spec {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid oracle spec: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub key: String,
    pub x: String,
    pub y: String,
    pub label: NliLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub facts: Vec<Fact>,
    /// Keys of facts that answer inconsistently.
    #[serde(default)]
    pub seeds: Vec<String>,
}

impl OracleSpec {
    pub fn from_json_file(path: &Path) -> Result<Self, OracleError> {
        let text = fs::read_to_string(path).map_err(|e| OracleError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

/// The label a seeded fact flips to.
pub fn seed_target(label: NliLabel) -> NliLabel {
    match label {
        NliLabel::Entailment => NliLabel::Contradiction,
        NliLabel::Neutral | NliLabel::Contradiction => NliLabel::Entailment,
    }
}

fn marker(label: NliLabel) -> &'static [&'static str] {
    match label {
        NliLabel::Entailment => &["certainly"],
        NliLabel::Neutral => &["perhaps"],
        NliLabel::Contradiction => &["it", "is", "false", "that"],
    }
}

fn words(s: &[&str]) -> Vec<String> {
    s.iter().map(|w| w.to_string()).collect()
}

#[derive(Debug, Clone)]
struct CompiledFact {
    x: Vec<String>,
    y: Vec<String>,
    label: NliLabel,
    seeded: bool,
}

impl CompiledFact {
    fn realize(&self, label: NliLabel) -> Vec<String> {
        realize(&self.x, &self.y, label)
    }
}

/// Canonical explanation of `(x, y)` under `label`.
pub fn realize(x: &[String], y: &[String], label: NliLabel) -> Vec<String> {
    let (pre, mid): (&[&str], &[&str]) = match label {
        NliLabel::Entailment => (&[], &["is", "a", "type", "of"]),
        NliLabel::Neutral => (&["not", "all"], &["are"]),
        NliLabel::Contradiction => (&[], &["is", "not"]),
    };
    let mut out = words(pre);
    out.extend(x.iter().cloned());
    out.extend(words(mid));
    out.extend(y.iter().cloned());
    out
}

fn find_seq(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn article_for(word: &str) -> &'static str {
    if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

#[derive(Debug, Clone)]
pub struct Oracle {
    facts: Vec<CompiledFact>,
    templates: TemplateSet,
}

impl Oracle {
    pub fn new(spec: &OracleSpec) -> Result<Self, OracleError> {
        let templates = TemplateSet::shipped();
        let mut keys = HashSet::new();
        for fact in &spec.facts {
            if !keys.insert(fact.key.as_str()) {
                return Err(OracleError::DuplicateKey(fact.key.clone()));
            }
        }
        let mut seeds = HashSet::new();
        for seed in &spec.seeds {
            if !keys.contains(seed.as_str()) {
                return Err(OracleError::UnknownSeed(seed.clone()));
            }
            if !seeds.insert(seed.as_str()) {
                return Err(OracleError::DuplicateSeed(seed.clone()));
            }
        }
        let mut facts = Vec::with_capacity(spec.facts.len());
        for fact in &spec.facts {
            let compiled = CompiledFact {
                x: normalize(&fact.x),
                y: normalize(&fact.y),
                label: fact.label,
                seeded: seeds.contains(fact.key.as_str()),
            };
            if compiled.x.is_empty() || compiled.y.is_empty() {
                return Err(OracleError::EmptyFact(fact.key.clone()));
            }
            for label in NliLabel::ALL {
                let tokens = compiled.realize(label);
                let round_trips = templates
                    .match_label(&tokens, label)
                    .is_some_and(|m| m.binding.x == compiled.x && m.binding.y == compiled.y);
                if !round_trips {
                    return Err(OracleError::Unrealizable {
                        key: fact.key.clone(),
                        label,
                    });
                }
            }
            facts.push(compiled);
        }
        Ok(Oracle { facts, templates })
    }

    /// Rewrites the context around the fact: `x` is replaced by `y` (fixing a
    /// preceding article), or `x near y` when the context does not mention `x`.
    fn base_hypothesis(fact: &CompiledFact, context: &[String]) -> Vec<String> {
        match find_seq(context, &fact.x) {
            Some(at) => {
                let mut out = context[..at].to_vec();
                if let Some(last) = out.last_mut() {
                    if last == "a" || last == "an" {
                        *last = article_for(&fact.y[0]).to_string();
                    }
                }
                out.extend(fact.y.iter().cloned());
                out.extend(context[at + fact.x.len()..].iter().cloned());
                out
            }
            None => {
                let mut out = fact.x.clone();
                out.push("near".into());
                out.extend(fact.y.iter().cloned());
                out
            }
        }
    }

    fn hypothesis(fact: &CompiledFact, label: NliLabel, context: &[String]) -> Vec<String> {
        let base = Self::base_hypothesis(fact, context);
        if label == fact.label {
            return base;
        }
        let mut out = words(marker(label));
        out.extend(base);
        out
    }

    pub fn forward(&self, context: &str, variable: &str) -> ForwardResponse {
        let context = normalize(context);
        let variable = normalize(variable);
        let scope: Vec<String> = context.iter().chain(&variable).cloned().collect();
        let Some(fact) = self
            .facts
            .iter()
            .find(|f| find_seq(&scope, &f.x).is_some() && find_seq(&variable, &f.y).is_some())
        else {
            return ForwardResponse {
                label: Some(NliLabel::Neutral),
                explanation: Explanation::new(FALLBACK_EXPLANATION),
            };
        };
        let target = seed_target(fact.label);
        let flipped = fact.seeded && variable == Self::hypothesis(fact, target, &context);
        let label = if flipped { target } else { fact.label };
        ForwardResponse {
            label: Some(label),
            explanation: Explanation::from_tokens(fact.realize(label)),
        }
    }

    pub fn reverse(&self, context: &str, explanation: &str) -> ReverseResponse {
        let context = normalize(context);
        let explanation = normalize(explanation);
        for fact in &self.facts {
            for label in NliLabel::ALL {
                if fact.realize(label) == explanation {
                    return ReverseResponse {
                        variable: join_tokens(&Self::hypothesis(fact, label, &context)),
                    };
                }
            }
        }
        for label in NliLabel::ALL {
            let Some(m) = self.templates.match_label(&explanation, label) else {
                continue;
            };
            if let Some(fact) = self.facts.iter().find(|f| f.x == m.binding.x && f.y == m.binding.y) {
                return ReverseResponse {
                    variable: join_tokens(&Self::base_hypothesis(fact, &context)),
                };
            }
        }
        ReverseResponse {
            variable: FALLBACK_HYPOTHESIS.to_string(),
        }
    }
}

/// Serves one side of the oracle over the wire protocol.
#[derive(Debug, Clone)]
pub struct OracleHandler {
    oracle: Oracle,
    mode: Mode,
}

impl OracleHandler {
    pub fn new(oracle: Oracle, mode: Mode) -> Self {
        OracleHandler { oracle, mode }
    }
}

impl ModelHandler for OracleHandler {
    fn handle(&self, request: &Request) -> Reply {
        if request.query.mode() != self.mode {
            return Reply::error(
                &request.id,
                format!("this endpoint serves {} requests only", self.mode),
            );
        }
        match &request.query {
            Query::Forward { context, variable } => {
                let r = self.oracle.forward(context, variable);
                Reply::forward(&request.id, r.label, r.explanation.raw)
            }
            Query::Reverse { context, explanation } => {
                Reply::reverse(&request.id, self.oracle.reverse(context, explanation).variable)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub spec: OracleSpec,
    pub instances: Vec<NliInstance>,
}

const SUBJECTS: [&str; 12] = [
    "dog", "woman", "biker", "child", "swan", "toddler", "guard", "family", "player", "student", "cook", "sailor",
];
const KINDS: [&str; 12] = [
    "animal", "person", "rider", "kid", "bird", "infant", "officer", "group", "athlete", "pupil", "chef", "mariner",
];

/// A fact base with `facts` facts, `seeded` of them seeded, and a matching
/// dataset: one instance per fact followed by `distractors` instances that
/// mention no fact. Fully determined by `seed`.
pub fn synthetic_corpus(facts: usize, seeded: usize, distractors: usize, seed: u64) -> Result<SyntheticCorpus, OracleError> {
    if seeded > facts {
        return Err(OracleError::TooManySeeds { seeded, facts });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = OracleSpec::default();
    let mut instances = Vec::with_capacity(facts + distractors);
    for i in 0..facts {
        let x = format!("{}-{i}", SUBJECTS[i % SUBJECTS.len()]);
        let y = format!("{}-{i}", KINDS[(i / SUBJECTS.len() + i) % KINDS.len()]);
        let label = NliLabel::ALL[rng.random_range(0..3)];
        instances.push(
            NliInstance::new(
                format!("syn-{i:05}"),
                format!("{} {x} is in the park.", article_for(&x)),
                format!("{} {y} is in the park.", article_for(&y)),
                Some(label),
            )
            .expect("non-empty hypothesis"),
        );
        spec.facts.push(Fact {
            key: format!("fact-{i}"),
            x,
            y,
            label,
        });
    }
    let mut picked = index::sample(&mut rng, facts, seeded).into_vec();
    picked.sort_unstable();
    spec.seeds = picked.into_iter().map(|i| format!("fact-{i}")).collect();
    for j in 0..distractors {
        instances.push(
            NliInstance::new(
                format!("syn-{:05}", facts + j),
                "A crowd gathers in the square.",
                format!("People are waiting for bus {j}."),
                Some(NliLabel::Neutral),
            )
            .expect("non-empty hypothesis"),
        );
    }
    Ok(SyntheticCorpus { spec, instances })
}
