//! Newline-delimited JSON messages exchanged with forward and reverse models.
//!
//! Requests:
//!
//! ```text
//! {"id":"7","op":"forward","context":"...","variable":"..."}
//! {"id":"8","op":"reverse","context":"...","explanation":"..."}
//! ```
//!
//! Replies carry the request id plus `label`/`explanation` (forward),
//! `variable` (reverse) or `error`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Explanation, NliLabel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("malformed message ({message}): {raw}")]
    Malformed { message: String, raw: String },
    #[error("reply is missing `{field}`: {raw}")]
    MissingField { field: &'static str, raw: String },
    #[error("model error: {0}")]
    Model(String),
}

/// What the forward model says about one input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardResponse {
    /// Absent for label-free models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<NliLabel>,
    pub explanation: Explanation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReverseResponse {
    pub variable: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Query {
    Forward { context: String, variable: String },
    Reverse { context: String, explanation: String },
}

impl Query {
    pub fn mode(&self) -> Mode {
        match self {
            Query::Forward { .. } => Mode::Forward,
            Query::Reverse { .. } => Mode::Reverse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: String,
    #[serde(flatten)]
    pub query: Query,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<NliLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Reply {
    pub fn forward(id: impl Into<String>, label: Option<NliLabel>, explanation: impl Into<String>) -> Self {
        Reply {
            id: id.into(),
            label,
            explanation: Some(explanation.into()),
            ..Reply::default()
        }
    }

    pub fn reverse(id: impl Into<String>, variable: impl Into<String>) -> Self {
        Reply {
            id: id.into(),
            variable: Some(variable.into()),
            ..Reply::default()
        }
    }

    pub fn error(id: impl Into<String>, message: impl Into<String>) -> Self {
        Reply {
            id: id.into(),
            error: Some(message.into()),
            ..Reply::default()
        }
    }

    /// Interprets the reply to a forward request; the explanation is
    /// normalized here.
    pub fn into_forward(self) -> Result<ForwardResponse, ProtocolError> {
        if let Some(e) = self.error {
            return Err(ProtocolError::Model(e));
        }
        let raw = encode(&self);
        match self.explanation {
            Some(text) if !text.trim().is_empty() => Ok(ForwardResponse {
                label: self.label,
                explanation: Explanation::new(text),
            }),
            _ => Err(ProtocolError::MissingField {
                field: "explanation",
                raw,
            }),
        }
    }

    pub fn into_reverse(self) -> Result<ReverseResponse, ProtocolError> {
        if let Some(e) = self.error {
            return Err(ProtocolError::Model(e));
        }
        let raw = encode(&self);
        match self.variable {
            Some(variable) if !variable.trim().is_empty() => Ok(ReverseResponse { variable }),
            _ => Err(ProtocolError::MissingField { field: "variable", raw }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Forward,
    Reverse,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Forward => "forward",
            Mode::Reverse => "reverse",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Mode::Forward),
            "reverse" => Ok(Mode::Reverse),
            other => Err(format!("unknown mode `{other}` (expected forward or reverse)")),
        }
    }
}

/// Anything that can answer protocol queries synchronously.
pub trait ModelHandler: Send + Sync {
    fn handle(&self, request: &Request) -> Reply;
}

/// Compact JSON without the trailing newline.
pub fn encode<T: Serialize>(message: &T) -> String {
    serde_json::to_string(message).expect("protocol messages always serialize")
}

pub fn parse_request(line: &str) -> Result<Request, ProtocolError> {
    serde_json::from_str(line).map_err(|e| ProtocolError::Malformed {
        message: e.to_string(),
        raw: line.to_string(),
    })
}

pub fn parse_reply(line: &str) -> Result<Reply, ProtocolError> {
    serde_json::from_str(line).map_err(|e| ProtocolError::Malformed {
        message: e.to_string(),
        raw: line.to_string(),
    })
}

/// Best-effort id recovery from a line that failed to parse as a message.
pub fn salvage_id(line: &str) -> Option<String> {
    let value: serde_json::Value = serde_json::from_str(line).ok()?;
    value.get("id")?.as_str().map(String::from)
}

/// Answers one input line. Lines that do not parse get an error reply under
/// their id when it can be recovered, otherwise under an empty id with the
/// 1-based line number in the message.
pub fn handle_line(handler: &dyn ModelHandler, line: &str, line_no: usize) -> Reply {
    match parse_request(line) {
        Ok(request) => handler.handle(&request),
        Err(ProtocolError::Malformed { message, .. }) => match salvage_id(line) {
            Some(id) => Reply::error(id, format!("malformed request: {message}")),
            None => Reply::error("", format!("line {line_no}: malformed request: {message}")),
        },
        Err(other) => Reply::error("", format!("line {line_no}: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Echo;

    impl ModelHandler for Echo {
        fn handle(&self, request: &Request) -> Reply {
            match &request.query {
                Query::Forward { variable, .. } => Reply::forward(&request.id, Some(NliLabel::Neutral), variable.clone()),
                Query::Reverse { explanation, .. } => Reply::reverse(&request.id, explanation.clone()),
            }
        }
    }

    #[test]
    fn request_wire_layout() {
        let r = Request {
            id: "1".into(),
            query: Query::Forward {
                context: "a dog".into(),
                variable: "an animal".into(),
            },
        };
        assert_eq!(encode(&r), r#"{"id":"1","op":"forward","context":"a dog","variable":"an animal"}"#);
        let r = Request {
            id: "2".into(),
            query: Query::Reverse {
                context: "".into(),
                explanation: "dog is a type of animal".into(),
            },
        };
        assert_eq!(
            encode(&r),
            r#"{"id":"2","op":"reverse","context":"","explanation":"dog is a type of animal"}"#
        );
    }

    #[test]
    fn reply_wire_layout() {
        assert_eq!(
            encode(&Reply::forward("1", Some(NliLabel::Entailment), "x")),
            r#"{"id":"1","label":"entailment","explanation":"x"}"#
        );
        assert_eq!(encode(&Reply::reverse("2", "v")), r#"{"id":"2","variable":"v"}"#);
        assert_eq!(encode(&Reply::error("3", "boom")), r#"{"id":"3","error":"boom"}"#);
    }

    #[test]
    fn reply_interpretation() {
        let f = Reply::forward("1", Some(NliLabel::Entailment), "Dog is a type of animal.")
            .into_forward()
            .unwrap();
        assert_eq!(f.explanation.text(), "dog is a type of animal");
        assert_eq!(f.explanation.raw, "Dog is a type of animal.");

        assert!(matches!(
            Reply::reverse("1", "v").into_forward(),
            Err(ProtocolError::MissingField { field: "explanation", .. })
        ));
        assert!(matches!(
            Reply::error("1", "oom").into_reverse(),
            Err(ProtocolError::Model(m)) if m == "oom"
        ));
        assert!(parse_reply(r#"{"id":"1","label":"maybe","explanation":"x"}"#).is_err());
    }

    #[test]
    fn malformed_lines_get_error_replies() {
        let r = handle_line(&Echo, r#"{"id":"9","op":"sideways"}"#, 3);
        assert_eq!(r.id, "9");
        assert!(r.error.unwrap().contains("malformed"));
        let r = handle_line(&Echo, "not json", 4);
        assert_eq!(r.id, "");
        assert!(r.error.unwrap().starts_with("line 4:"));
        let r = handle_line(&Echo, r#"{"id":"5","op":"reverse","context":"","explanation":"e"}"#, 5);
        assert_eq!(r, Reply::reverse("5", "e"));
    }

    fn label() -> impl Strategy<Value = Option<NliLabel>> {
        proptest::option::of(proptest::sample::select(NliLabel::ALL.to_vec()))
    }

    proptest! {
        #[test]
        fn messages_round_trip(id in "\\PC{0,8}", a in "\\PC{0,20}", b in "\\PC{0,20}", forward in any::<bool>(), l in label()) {
            let query = if forward {
                Query::Forward { context: a.clone(), variable: b.clone() }
            } else {
                Query::Reverse { context: a.clone(), explanation: b.clone() }
            };
            let req = Request { id: id.clone(), query };
            prop_assert_eq!(parse_request(&encode(&req)).unwrap(), req);
            for reply in [Reply::forward(id.clone(), l, a.clone()), Reply::reverse(id.clone(), b.clone()), Reply::error(id.clone(), a.clone())] {
                let line = encode(&reply);
                prop_assert!(!line.contains('\n'));
                prop_assert_eq!(parse_reply(&line).unwrap(), reply);
            }
        }
    }
}
