//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export takes plain strings and returns a JSON document, so the page
//! needs no generated type definitions.

use inconsistency_core::data::join_tokens;
use inconsistency_core::generate::{GenerationOutcome, Provenance};
use inconsistency_core::template::{describe_binding, expand, parse_template};
use inconsistency_core::{build_inconsistency_set, normalize, Explanation, NliLabel, TemplateSet};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub struct MatchView {
    pub tokens: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateView>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct TemplateView {
    pub id: String,
    pub label: NliLabel,
    pub pattern: String,
    pub variant: usize,
    pub x: String,
    pub y: String,
    pub binding: String,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct CandidateView {
    pub text: String,
    pub rule: String,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct SetView {
    pub discarded: bool,
    pub source_label: Option<NliLabel>,
    pub candidates: Vec<CandidateView>,
}

#[derive(Debug, Serialize, PartialEq)]
#[serde(untagged)]
pub enum ExpandView {
    Ok { id: String, label: NliLabel, variants: Vec<String> },
    Err { error: String },
}

fn parse_label(label: &str) -> Result<Option<NliLabel>, String> {
    match label.trim() {
        "" | "any" => Ok(None),
        other => other.parse().map(Some).map_err(|e| format!("{e}")),
    }
}

pub fn match_view(text: &str, templates: &TemplateSet) -> MatchView {
    let tokens = normalize(text);
    let template = templates.match_any(&tokens).map(|m| TemplateView {
        id: m.template.id.clone(),
        label: m.template.label,
        pattern: m.template.source.clone(),
        variant: m.variant,
        x: join_tokens(&m.binding.x),
        y: join_tokens(&m.binding.y),
        binding: describe_binding(&m.binding),
    });
    MatchView { tokens, template }
}

pub fn set_view(text: &str, label: Option<NliLabel>, templates: &TemplateSet) -> SetView {
    match build_inconsistency_set(&Explanation::new(text), label, templates) {
        GenerationOutcome::Discarded => SetView {
            discarded: true,
            source_label: label,
            candidates: Vec::new(),
        },
        GenerationOutcome::Generated(set) => SetView {
            discarded: false,
            source_label: set.source_label,
            candidates: set
                .candidates
                .iter()
                .map(|c| CandidateView {
                    text: join_tokens(&c.tokens),
                    rule: match &c.provenance {
                        Provenance::Negation { .. } => "negation".to_string(),
                        Provenance::Swap { template, .. } => template.clone(),
                    },
                })
                .collect(),
        },
    }
}

/// Accepts a tab or a run of spaces between label and pattern.
pub fn expand_view(line: &str) -> ExpandView {
    let line = line.trim();
    let line = match line.split_once(char::is_whitespace) {
        Some((label, rest)) if !line.contains('\t') => format!("{label}\t{}", rest.trim_start()),
        _ => line.to_string(),
    };
    match parse_template(&line) {
        Ok(t) => ExpandView::Ok {
            id: t.id.clone(),
            label: t.label,
            variants: expand(&t).iter().map(ToString::to_string).collect(),
        },
        Err(e) => ExpandView::Err { error: e.to_string() },
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("views serialize")
}

thread_local! {
    static SHIPPED: TemplateSet = TemplateSet::shipped();
}

/// Normalized tokens and the first template the explanation matches.
#[wasm_bindgen]
pub fn match_explanation(text: &str) -> String {
    SHIPPED.with(|t| to_json(&match_view(text, t)))
}

/// Inconsistent candidates for an explanation. `label` is `entailment`,
/// `neutral`, `contradiction`, or empty to try all three.
#[wasm_bindgen]
pub fn inconsistencies(text: &str, label: &str) -> String {
    match parse_label(label) {
        Ok(label) => SHIPPED.with(|t| to_json(&set_view(text, label, t))),
        Err(error) => to_json(&ExpandView::Err { error }),
    }
}

/// Variants of one template line, or an error with its column.
#[wasm_bindgen]
pub fn expand_template(line: &str) -> String {
    to_json(&expand_view(line))
}

/// The shipped template file, for display.
#[wasm_bindgen]
pub fn shipped_templates() -> String {
    inconsistency_core::template::SHIPPED_TEMPLATES.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn match_reports_binding() {
        let v: Value = serde_json::from_str(&match_explanation("Dog is a type of animal.")).unwrap();
        assert_eq!(v["template"]["id"], "entailment-1");
        assert_eq!(v["template"]["x"], "dog");
        assert_eq!(v["template"]["y"], "animal");
        let v: Value = serde_json::from_str(&match_explanation("people walking")).unwrap();
        assert!(v.get("template").is_none());
    }

    #[test]
    fn lists_candidates() {
        let v: Value =
            serde_json::from_str(&inconsistencies("One cannot eat and sleep simultaneously.", "contradiction")).unwrap();
        assert_eq!(v["discarded"], false);
        let texts: Vec<&str> = v["candidates"].as_array().unwrap().iter().map(|c| c["text"].as_str().unwrap()).collect();
        assert!(texts.contains(&"eat implies sleep"));
        let v: Value = serde_json::from_str(&inconsistencies("people walking", "")).unwrap();
        assert_eq!(v["discarded"], true);
        let v: Value = serde_json::from_str(&inconsistencies("x", "maybe")).unwrap();
        assert!(v["error"].as_str().unwrap().contains("maybe"));
    }

    #[test]
    fn expands_lines() {
        let v: Value = serde_json::from_str(&expand_template("entailment  X [surely] implies Y")).unwrap();
        assert_eq!(v["variants"], serde_json::json!(["X surely implies Y", "X implies Y"]));
        let v: Value = serde_json::from_str(&expand_template("entailment\tX implies")).unwrap();
        assert!(v["error"].as_str().is_some());
    }
}
