//! Label-tagged explanation templates.
//!
//! A template line is `LABEL<TAB>PATTERN`. Patterns are whitespace-separated
//! literal tokens plus:
//!
//! * `X`, `Y`: the key elements, each exactly once, `X` before `Y`;
//! * `(a|b c|d)`: alternation between literal token sequences;
//! * `[ ... ]`: an optional group (no placeholders, no nesting);
//! * `*`: a wildcard standing for one or more irrelevant tokens.
//!
//! Matching works on expanded [`Variant`]s, which contain only literals,
//! placeholders and wildcards.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{join_tokens, NliLabel};

/// The template listing shipped with the crate.
pub const SHIPPED_TEMPLATES: &str = include_str!("../data/templates.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("template {template} variant {variant} contains a wildcard and cannot be instantiated")]
    WildcardVariant { template: String, variant: usize },
    #[error("template {template} has no variant {variant}")]
    NoSuchVariant { template: String, variant: usize },
    #[error("binding parts must be non-empty")]
    EmptyBinding,
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Element {
    Literal(String),
    PlaceholderX,
    PlaceholderY,
    Alternation(Vec<Vec<String>>),
    Optional(Vec<Element>),
    Wildcard,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    /// `<label>-<n>` with `n` counting from 1 within the label, in file order.
    pub id: String,
    pub label: NliLabel,
    pub elements: Vec<Element>,
    pub source: String,
}

/// One concrete form of a template after expanding all groups.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Piece {
    Literal(String),
    X,
    Y,
    Wildcard,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Variant {
    pub pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Binding {
    pub x: Vec<String>,
    pub y: Vec<String>,
}

impl Binding {
    pub fn new(x: Vec<String>, y: Vec<String>) -> Result<Self, TemplateError> {
        if x.is_empty() || y.is_empty() {
            return Err(TemplateError::EmptyBinding);
        }
        Ok(Binding { x, y })
    }
}

impl Variant {
    pub fn has_wildcard(&self) -> bool {
        self.pieces.contains(&Piece::Wildcard)
    }

    pub fn literals(&self) -> impl Iterator<Item = &str> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Literal(t) => Some(t.as_str()),
            _ => None,
        })
    }

    /// Substitutes the binding; `None` when the variant holds a wildcard.
    pub fn instantiate(&self, binding: &Binding) -> Option<Vec<String>> {
        let mut out = Vec::new();
        for piece in &self.pieces {
            match piece {
                Piece::Literal(t) => out.push(t.clone()),
                Piece::X => out.extend(binding.x.iter().cloned()),
                Piece::Y => out.extend(binding.y.iter().cloned()),
                Piece::Wildcard => return None,
            }
        }
        Some(out)
    }

    /// Anchored match against the whole token sequence.
    pub fn match_tokens(&self, tokens: &[String]) -> Option<Binding> {
        let mut spans = Spans::default();
        if match_from(&self.pieces, tokens, 0, 0, &mut spans) {
            let (x, y) = (spans.x?, spans.y?);
            Some(Binding {
                x: tokens[x.0..x.1].to_vec(),
                y: tokens[y.0..y.1].to_vec(),
            })
        } else {
            None
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let words: Vec<&str> = self
            .pieces
            .iter()
            .map(|p| match p {
                Piece::Literal(t) => t.as_str(),
                Piece::X => "X",
                Piece::Y => "Y",
                Piece::Wildcard => "*",
            })
            .collect();
        f.write_str(&words.join(" "))
    }
}

#[derive(Default)]
struct Spans {
    x: Option<(usize, usize)>,
    y: Option<(usize, usize)>,
}

fn match_from(pieces: &[Piece], tokens: &[String], pi: usize, ti: usize, spans: &mut Spans) -> bool {
    let Some(piece) = pieces.get(pi) else {
        return ti == tokens.len();
    };
    // every remaining piece consumes at least one token
    let needed = pieces.len() - pi;
    if tokens.len() < ti + needed {
        return false;
    }
    match piece {
        Piece::Literal(lit) => tokens[ti] == *lit && match_from(pieces, tokens, pi + 1, ti + 1, spans),
        Piece::X | Piece::Y | Piece::Wildcard => {
            let last_end = tokens.len() - (needed - 1);
            for end in ti + 1..=last_end {
                if match_from(pieces, tokens, pi + 1, end, spans) {
                    match piece {
                        Piece::X => spans.x = Some((ti, end)),
                        Piece::Y => spans.y = Some((ti, end)),
                        _ => {}
                    }
                    return true;
                }
            }
            false
        }
    }
}

/// Cartesian expansion of every alternation and optional group, in source
/// order: alternatives as listed, optional groups present before absent.
pub fn expand(template: &Template) -> Vec<Variant> {
    expand_elements(&template.elements)
        .into_iter()
        .map(|pieces| Variant { pieces })
        .collect()
}

fn expand_elements(elements: &[Element]) -> Vec<Vec<Piece>> {
    let mut acc: Vec<Vec<Piece>> = vec![Vec::new()];
    for element in elements {
        let options: Vec<Vec<Piece>> = match element {
            Element::Literal(t) => vec![vec![Piece::Literal(t.clone())]],
            Element::PlaceholderX => vec![vec![Piece::X]],
            Element::PlaceholderY => vec![vec![Piece::Y]],
            Element::Wildcard => vec![vec![Piece::Wildcard]],
            Element::Alternation(alts) => alts
                .iter()
                .map(|alt| alt.iter().cloned().map(Piece::Literal).collect())
                .collect(),
            Element::Optional(body) => {
                let mut present = expand_elements(body);
                present.push(Vec::new());
                present
            }
        };
        acc = acc
            .iter()
            .flat_map(|prefix| {
                options.iter().map(move |opt| {
                    let mut v = prefix.clone();
                    v.extend(opt.iter().cloned());
                    v
                })
            })
            .collect();
    }
    acc
}

/// Replaces X and Y in the given variant of `template`.
pub fn instantiate(template: &Template, variant: usize, binding: &Binding) -> Result<Vec<String>, TemplateError> {
    let variants = expand(template);
    let v = variants.get(variant).ok_or_else(|| TemplateError::NoSuchVariant {
        template: template.id.clone(),
        variant,
    })?;
    v.instantiate(binding).ok_or_else(|| TemplateError::WildcardVariant {
        template: template.id.clone(),
        variant,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateMatch<'a> {
    pub template: &'a Template,
    pub variant: usize,
    pub binding: Binding,
}

/// Tries `templates` in order and, within each, its variants in expansion
/// order; the first variant matching the whole sequence wins.
pub fn match_tokens<'a>(tokens: &[String], templates: &'a [Template]) -> Option<TemplateMatch<'a>> {
    templates.iter().find_map(|t| {
        expand(t).iter().enumerate().find_map(|(i, v)| {
            v.match_tokens(tokens).map(|binding| TemplateMatch {
                template: t,
                variant: i,
                binding,
            })
        })
    })
}

/// Parses a single `LABEL<TAB>PATTERN` line.
pub fn parse_template(dsl_line: &str) -> Result<Template, TemplateError> {
    parse_line(dsl_line, 1, 1)
}

fn parse_line(line: &str, line_no: usize, index: usize) -> Result<Template, TemplateError> {
    let err = |column: usize, message: String| TemplateError::Parse {
        line: line_no,
        column,
        message,
    };
    let line = line.trim_end_matches(['\r', '\n']);
    let Some((label_text, pattern)) = line.split_once('\t') else {
        return Err(err(1, "expected `label<TAB>pattern`".into()));
    };
    let label: NliLabel = label_text
        .parse()
        .map_err(|_| err(1, format!("unknown label `{}`", label_text.trim())))?;
    let offset = label_text.chars().count() + 1;
    let lexemes = lex(pattern);
    let mut parser = Parser {
        lexemes: &lexemes,
        pos: 0,
        offset,
        line: line_no,
    };
    let elements = parser.sequence(false)?;
    if let Some(lx) = parser.peek() {
        return Err(parser.error_at(lx, format!("unexpected `{}`", lx.text)));
    }
    if elements.is_empty() {
        return Err(err(offset + 1, "empty pattern".into()));
    }
    let position = |target: &Element| elements.iter().position(|e| e == target);
    let count = |target: &Element| elements.iter().filter(|e| *e == target).count();
    match (count(&Element::PlaceholderX), count(&Element::PlaceholderY)) {
        (1, 1) => {}
        (x, y) => return Err(err(offset + 1, format!("pattern needs exactly one X and one Y (found {x} X, {y} Y)"))),
    }
    if position(&Element::PlaceholderY) < position(&Element::PlaceholderX) {
        return Err(err(offset + 1, "Y appears before X".into()));
    }
    Ok(Template {
        id: format!("{label}-{index}"),
        label,
        elements,
        source: line.to_string(),
    })
}

#[derive(Debug)]
struct Lexeme {
    text: String,
    /// 1-based character column within the pattern.
    column: usize,
}

fn lex(pattern: &str) -> Vec<Lexeme> {
    let mut out = Vec::new();
    let mut word = String::new();
    let mut word_col = 0;
    for (i, c) in pattern.chars().enumerate() {
        let col = i + 1;
        if c.is_whitespace() || "()|[]".contains(c) {
            if !word.is_empty() {
                out.push(Lexeme {
                    text: std::mem::take(&mut word),
                    column: word_col,
                });
            }
            if !c.is_whitespace() {
                out.push(Lexeme {
                    text: c.to_string(),
                    column: col,
                });
            }
        } else {
            if word.is_empty() {
                word_col = col;
            }
            word.push(c);
        }
    }
    if !word.is_empty() {
        out.push(Lexeme {
            text: word,
            column: word_col,
        });
    }
    out
}

struct Parser<'l> {
    lexemes: &'l [Lexeme],
    pos: usize,
    offset: usize,
    line: usize,
}

impl<'l> Parser<'l> {
    fn peek(&self) -> Option<&'l Lexeme> {
        self.lexemes.get(self.pos)
    }

    fn error_at(&self, lx: &Lexeme, message: String) -> TemplateError {
        TemplateError::Parse {
            line: self.line,
            column: self.offset + lx.column,
            message,
        }
    }

    fn end_error(&self, message: &str) -> TemplateError {
        let column = self
            .lexemes
            .last()
            .map(|l| l.column + l.text.chars().count())
            .unwrap_or(1);
        TemplateError::Parse {
            line: self.line,
            column: self.offset + column,
            message: message.to_string(),
        }
    }

    fn sequence(&mut self, in_optional: bool) -> Result<Vec<Element>, TemplateError> {
        let mut elements = Vec::new();
        while let Some(lx) = self.peek() {
            match lx.text.as_str() {
                "]" if in_optional => return Ok(elements),
                "]" => return Err(self.error_at(lx, "unbalanced `]`".into())),
                ")" | "|" => return Err(self.error_at(lx, format!("unexpected `{}`", lx.text))),
                "(" => {
                    self.pos += 1;
                    elements.push(self.alternation(lx)?);
                }
                "[" => {
                    if in_optional {
                        return Err(self.error_at(lx, "optional groups cannot nest".into()));
                    }
                    self.pos += 1;
                    let body = self.sequence(true)?;
                    match self.peek() {
                        Some(close) if close.text == "]" => self.pos += 1,
                        _ => return Err(self.end_error("unbalanced `[`")),
                    }
                    if body.is_empty() {
                        return Err(self.error_at(lx, "empty optional group".into()));
                    }
                    elements.push(Element::Optional(body));
                }
                "*" => {
                    self.pos += 1;
                    elements.push(Element::Wildcard);
                }
                "X" | "Y" => {
                    if in_optional {
                        return Err(self.error_at(lx, "placeholders cannot be optional".into()));
                    }
                    self.pos += 1;
                    elements.push(if lx.text == "X" {
                        Element::PlaceholderX
                    } else {
                        Element::PlaceholderY
                    });
                }
                word => {
                    self.pos += 1;
                    elements.push(Element::Literal(word.to_lowercase()));
                }
            }
        }
        if in_optional {
            return Err(self.end_error("unbalanced `[`"));
        }
        Ok(elements)
    }

    fn alternation(&mut self, open: &Lexeme) -> Result<Element, TemplateError> {
        let mut alternatives = vec![Vec::new()];
        loop {
            let Some(lx) = self.peek() else {
                return Err(self.end_error("unbalanced `(`"));
            };
            self.pos += 1;
            match lx.text.as_str() {
                ")" => break,
                "|" => alternatives.push(Vec::new()),
                "(" | "[" | "]" | "*" | "X" | "Y" => {
                    return Err(self.error_at(lx, format!("`{}` is not allowed inside an alternation", lx.text)))
                }
                word => alternatives.last_mut().expect("non-empty").push(word.to_lowercase()),
            }
        }
        if alternatives.iter().any(Vec::is_empty) {
            return Err(self.error_at(open, "empty alternative".into()));
        }
        if alternatives.len() < 2 {
            return Err(self.error_at(open, "alternation needs at least two alternatives".into()));
        }
        Ok(Element::Alternation(alternatives))
    }
}

/// Templates in file order, with their expansions cached.
#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    templates: Vec<Template>,
    variants: Vec<Vec<Variant>>,
}

impl TemplateSet {
    /// Parses a template listing; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut templates = Vec::new();
        let mut per_label = [0usize; 3];
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let label_index = line
                .split_once('\t')
                .and_then(|(l, _)| l.parse::<NliLabel>().ok())
                .map(|l| l as usize);
            let index = label_index.map(|l| per_label[l] + 1).unwrap_or(1);
            let template = parse_line(line, i + 1, index)?;
            per_label[template.label as usize] += 1;
            templates.push(template);
        }
        Ok(Self::from_templates(templates))
    }

    pub fn from_templates(templates: Vec<Template>) -> Self {
        let variants = templates.iter().map(expand).collect();
        TemplateSet { templates, variants }
    }

    /// The e-SNLI listing compiled into the crate.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_TEMPLATES).expect("shipped template file parses")
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn count(&self, label: NliLabel) -> usize {
        self.by_label(label).count()
    }

    pub fn by_label(&self, label: NliLabel) -> impl Iterator<Item = &Template> {
        self.templates.iter().filter(move |t| t.label == label)
    }

    pub fn get(&self, id: &str) -> Option<(&Template, &[Variant])> {
        self.templates
            .iter()
            .position(|t| t.id == id)
            .map(|i| (&self.templates[i], self.variants[i].as_slice()))
    }

    /// Templates paired with their expansions, in file order.
    pub fn iter(&self) -> impl Iterator<Item = (&Template, &[Variant])> {
        self.templates.iter().zip(self.variants.iter().map(Vec::as_slice))
    }

    /// Matches against the templates of one label only.
    pub fn match_label(&self, tokens: &[String], label: NliLabel) -> Option<TemplateMatch<'_>> {
        self.match_where(tokens, |t| t.label == label)
    }

    /// Matches against every label, entailment first, then neutral, then
    /// contradiction.
    pub fn match_any(&self, tokens: &[String]) -> Option<TemplateMatch<'_>> {
        NliLabel::ALL.iter().find_map(|&l| self.match_label(tokens, l))
    }

    fn match_where(&self, tokens: &[String], keep: impl Fn(&Template) -> bool) -> Option<TemplateMatch<'_>> {
        self.iter().filter(|(t, _)| keep(t)).find_map(|(t, variants)| {
            variants.iter().enumerate().find_map(|(i, v)| {
                v.match_tokens(tokens).map(|binding| TemplateMatch {
                    template: t,
                    variant: i,
                    binding,
                })
            })
        })
    }
}

pub fn load_template_file(path: &Path) -> Result<TemplateSet, TemplateError> {
    let text = fs::read_to_string(path).map_err(|e| TemplateError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    TemplateSet::parse(&text)
}

/// Human-readable rendering of a binding, e.g. `X = dog, Y = animal`.
pub fn describe_binding(binding: &Binding) -> String {
    format!("X = {}, Y = {}", join_tokens(&binding.x), join_tokens(&binding.y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn lit(s: &str) -> Element {
        Element::Literal(s.into())
    }

    #[test]
    fn parses_plain_template() {
        let t = parse_template("entailment\tX is a type of Y").unwrap();
        assert_eq!(t.label, NliLabel::Entailment);
        assert_eq!(
            t.elements,
            vec![
                Element::PlaceholderX,
                lit("is"),
                lit("a"),
                lit("type"),
                lit("of"),
                Element::PlaceholderY
            ]
        );
    }

    #[test]
    fn parses_groups() {
        let t = parse_template("contradiction\t[*] (cannot|can not|ca n't) [be] X and Y at the same time").unwrap();
        assert_eq!(
            t.elements,
            vec![
                Element::Optional(vec![Element::Wildcard]),
                Element::Alternation(vec![toks("cannot"), toks("can not"), toks("ca n't")]),
                Element::Optional(vec![lit("be")]),
                Element::PlaceholderX,
                lit("and"),
                Element::PlaceholderY,
                lit("at"),
                lit("the"),
                lit("same"),
                lit("time"),
            ]
        );
    }

    #[test]
    fn rejects_bad_patterns() {
        let cases = [
            ("neutral\tX Y Y", "exactly one"),
            ("neutral\tnot all are Y", "exactly one"),
            ("neutral\tY then X", "before"),
            ("neutral\tX (a||b) Y", "empty alternative"),
            ("neutral\tX Y (a|b", "unbalanced `(`"),
            ("neutral\tX (a|b Y", "not allowed inside"),
            ("neutral\tX Y [a", "unbalanced `[`"),
            ("neutral\tX a] Y", "unbalanced `]`"),
            ("neutral\tX (a) Y", "two alternatives"),
            ("neutral\tX [[a]] Y", "nest"),
            ("neutral\t[X] Y", "optional"),
            ("neutral\tX [] Y", "empty optional"),
            ("neutral X Y", "label<TAB>pattern"),
            ("maybe\tX Y", "unknown label"),
        ];
        for (line, needle) in cases {
            match parse_template(line) {
                Err(TemplateError::Parse { message, .. }) => {
                    assert!(message.contains(needle), "{line:?}: {message}")
                }
                other => panic!("{line:?} should fail, got {other:?}"),
            }
        }
    }

    #[test]
    fn parse_error_reports_column() {
        // `]` sits at character 12 of the line
        let err = parse_template("neutral\tX a] Y").unwrap_err();
        assert_eq!(
            err,
            TemplateError::Parse {
                line: 1,
                column: 12,
                message: "unbalanced `]`".into()
            }
        );
    }

    #[test]
    fn expands_in_source_order() {
        let t = parse_template("entailment\tX (is|are) a type of Y").unwrap();
        let v: Vec<String> = expand(&t).iter().map(ToString::to_string).collect();
        assert_eq!(v, ["X is a type of Y", "X are a type of Y"]);

        let t = parse_template("entailment\t[if] X , then Y").unwrap();
        let v: Vec<String> = expand(&t).iter().map(ToString::to_string).collect();
        assert_eq!(v, ["if X , then Y", "X , then Y"]);

        let t = parse_template("entailment\tX implies Y").unwrap();
        assert_eq!(expand(&t).len(), 1);
        assert_eq!(expand(&t)[0].to_string(), "X implies Y");

        let t = parse_template("contradiction\tX if [(is|are)] Y").unwrap();
        let v: Vec<String> = expand(&t).iter().map(ToString::to_string).collect();
        assert_eq!(v, ["X if is Y", "X if are Y", "X if Y"]);
    }

    #[test]
    fn matches_lazily_and_anchored() {
        let set = TemplateSet::shipped();
        let m = set.match_label(&toks("dog is a type of animal"), NliLabel::Entailment).unwrap();
        assert_eq!(m.template.id, "entailment-1");
        assert_eq!(m.variant, 0);
        assert_eq!(m.binding, Binding::new(toks("dog"), toks("animal")).unwrap());

        let m = set
            .match_label(&toks("one cannot eat and sleep simultaneously"), NliLabel::Contradiction)
            .unwrap();
        assert_eq!(m.template.id, "contradiction-1");
        assert_eq!((m.binding.x.clone(), m.binding.y.clone()), (toks("eat"), toks("sleep")));

        assert!(set.match_any(&toks("people walking together")).is_none());
        // anchored at both ends
        let synonyms = parse_template("entailment\tX and Y are (synonyms|synonymous)").unwrap();
        let one = std::slice::from_ref(&synonyms);
        assert!(match_tokens(&toks("dog and hound are synonyms"), one).is_some());
        assert!(match_tokens(&toks("dog and hound are synonyms today"), one).is_none());
        assert!(match_tokens(&toks("so dog and hound are synonyms"), one).is_some_and(|m| m.binding.x == toks("so dog")));
    }

    #[test]
    fn generic_template_is_tried_last() {
        let set = TemplateSet::shipped();
        let m = set.match_label(&toks("a man is a prisoner"), NliLabel::Entailment).unwrap();
        assert_eq!(m.template.id, "entailment-13");
        assert_eq!(m.binding.x, toks("a man"));
        assert_eq!(m.binding.y, toks("a prisoner"));
    }

    #[test]
    fn instantiates_variants() {
        let t = parse_template("entailment\tX implies Y").unwrap();
        let b = Binding::new(toks("eat"), toks("sleep")).unwrap();
        assert_eq!(instantiate(&t, 0, &b).unwrap(), toks("eat implies sleep"));

        let t = parse_template("contradiction\t[*] (is|are) either X or Y").unwrap();
        assert!(matches!(instantiate(&t, 0, &b), Err(TemplateError::WildcardVariant { .. })));
        assert_eq!(instantiate(&t, 2, &b).unwrap(), toks("is either eat or sleep"));
        assert!(matches!(instantiate(&t, 9, &b), Err(TemplateError::NoSuchVariant { .. })));
        assert_eq!(Binding::new(vec![], toks("a")), Err(TemplateError::EmptyBinding));
    }

    #[test]
    fn shipped_file_has_expected_counts() {
        let set = TemplateSet::shipped();
        assert_eq!(set.count(NliLabel::Entailment), 13);
        assert_eq!(set.count(NliLabel::Neutral), 6);
        assert_eq!(set.count(NliLabel::Contradiction), 9);
        assert_eq!(set.templates()[13].id, "neutral-1");
    }

    #[test]
    fn listing_errors_name_the_line() {
        assert!(TemplateSet::parse("").unwrap().is_empty());
        let text = "# header\nentailment\tX implies Y\n\nneutral\tX Y Y\n";
        match TemplateSet::parse(text) {
            Err(TemplateError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            load_template_file(Path::new("/nonexistent/templates.tsv")),
            Err(TemplateError::Io { .. })
        ));
    }

    fn group_product(elements: &[Element]) -> usize {
        elements
            .iter()
            .map(|e| match e {
                Element::Alternation(alts) => alts.len(),
                Element::Optional(body) => group_product(body) + 1,
                _ => 1,
            })
            .product()
    }

    #[test]
    fn expansion_count_is_product_of_groups() {
        for (t, variants) in TemplateSet::shipped().iter() {
            assert_eq!(variants.len(), group_product(&t.elements), "{}", t.source);
        }
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-z]{1,6}"
    }

    proptest! {
        #[test]
        fn match_inverts_instantiate(
            pick in 0usize..1000,
            x in proptest::collection::vec(word(), 1..4),
            y in proptest::collection::vec(word(), 1..4),
        ) {
            let set = TemplateSet::shipped();
            let all: Vec<(&Template, &Variant)> = set
                .iter()
                .flat_map(|(t, vs)| vs.iter().filter(|v| !v.has_wildcard()).map(move |v| (t, v)))
                .collect();
            let (template, variant) = all[pick % all.len()];
            let literals: Vec<&str> = variant.literals().collect();
            prop_assume!(!x.iter().chain(&y).any(|w| literals.contains(&w.as_str())));
            let binding = Binding::new(x, y).unwrap();
            let tokens = variant.instantiate(&binding).unwrap();
            let found = match_tokens(&tokens, std::slice::from_ref(template));
            prop_assert!(found.is_some());
            let found = found.unwrap();
            let again = instantiate(found.template, found.variant, &found.binding).unwrap();
            prop_assert_eq!(again, tokens);
        }

        #[test]
        fn matching_is_deterministic(words in proptest::collection::vec("(is|a|not|dog|and|the|same|as|cat)", 2..9)) {
            let set = TemplateSet::shipped();
            let a = set.match_any(&words).map(|m| (m.template.id.clone(), m.variant, m.binding));
            let b = set.match_any(&words).map(|m| (m.template.id.clone(), m.variant, m.binding));
            if let Some((_, _, ref binding)) = a {
                prop_assert!(!binding.x.is_empty() && !binding.y.is_empty());
            }
            prop_assert_eq!(a, b);
        }
    }
}
