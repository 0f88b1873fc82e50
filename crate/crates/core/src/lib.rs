//! Detection of mutually inconsistent natural-language explanations.
//!
//! Given a model that predicts and explains, the pieces here build the list
//! of explanations inconsistent with one it produced ([`generate`]), match
//! and instantiate the label templates that drive that list ([`template`]),
//! and account for the pairs an attack run verifies ([`stats`], [`report`]).
//! The model boundary itself is the line protocol in [`protocol`]; [`oracle`]
//! is a deterministic model for end-to-end testing.

pub mod attack;
pub mod data;
pub mod generate;
pub mod oracle;
pub mod protocol;
pub mod report;
pub mod stats;
pub mod template;

pub use attack::{AttackCandidateTrace, AttackResult};
pub use data::{normalize, Explanation, NliInstance, NliLabel};
pub use generate::{build_inconsistency_set, GenerationOutcome, InconsistencySet};
pub use protocol::{ForwardResponse, ReverseResponse};
pub use stats::{InconsistencyPair, RunSummary};
pub use template::{Binding, Template, TemplateSet};
