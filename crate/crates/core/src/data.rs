//! NLI instances, explanations and the e-SNLI CSV loader.
//!
//! Every string comparison in the crate goes through [`normalize`], so two
//! explanations are "the same" exactly when their token sequences are equal.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: header is missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("invalid column mapping: {0}")]
    ColumnMap(#[from] serde_json::Error),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("instance `{0}` has an empty variable part")]
    EmptyVariable(String),
    #[error("unknown split `{0}` (expected train, dev or test)")]
    UnknownSplit(String),
}

/// The three mutually exclusive NLI relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Neutral,
    Contradiction,
}

impl NliLabel {
    pub const ALL: [NliLabel; 3] = [
        NliLabel::Entailment,
        NliLabel::Neutral,
        NliLabel::Contradiction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NliLabel::Entailment => "entailment",
            NliLabel::Neutral => "neutral",
            NliLabel::Contradiction => "contradiction",
        }
    }

    /// The two labels this one excludes, in canonical order.
    pub fn others(self) -> [NliLabel; 2] {
        match self {
            NliLabel::Entailment => [NliLabel::Neutral, NliLabel::Contradiction],
            NliLabel::Neutral => [NliLabel::Entailment, NliLabel::Contradiction],
            NliLabel::Contradiction => [NliLabel::Entailment, NliLabel::Neutral],
        }
    }
}

impl fmt::Display for NliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NliLabel {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "entailment" => Ok(NliLabel::Entailment),
            "neutral" => Ok(NliLabel::Neutral),
            "contradiction" => Ok(NliLabel::Contradiction),
            _ => Err(DataError::UnknownLabel(s.to_string())),
        }
    }
}

/// One task input split into a fixed context part (the premise) and a
/// variable part (the hypothesis) that the attack is allowed to replace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliInstance {
    pub id: String,
    /// May be empty: stand-alone inputs have no context.
    pub context: String,
    pub variable: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<NliLabel>,
}

impl NliInstance {
    pub fn new(
        id: impl Into<String>,
        context: impl Into<String>,
        variable: impl Into<String>,
        gold_label: Option<NliLabel>,
    ) -> Result<Self, DataError> {
        let id = id.into();
        let variable = variable.into();
        if variable.trim().is_empty() {
            return Err(DataError::EmptyVariable(id));
        }
        Ok(NliInstance {
            id,
            context: context.into(),
            variable,
            gold_label,
        })
    }
}

/// A natural-language explanation: the raw string for display and its
/// normalized tokens for every comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Explanation {
    pub raw: String,
    pub tokens: Vec<String>,
}

impl Explanation {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let tokens = normalize(&raw);
        Explanation { raw, tokens }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        Explanation {
            raw: join_tokens(&tokens),
            tokens,
        }
    }

    /// Normalized form joined with single spaces.
    pub fn text(&self) -> String {
        join_tokens(&self.tokens)
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains_token(&self, token: &str) -> bool {
        self.tokens.iter().any(|t| t == token)
    }
}

pub fn join_tokens(tokens: &[String]) -> String {
    tokens.join(" ")
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Lowercases and tokenizes `text`.
///
/// Punctuation marks become tokens of their own, except that a contracted
/// negation is detached as `n't` ("doesn't" -> "does", "n't") and periods are
/// dropped. A period or hyphen sitting between two alphanumeric characters
/// stays inside its word ("3.5", "dark-haired").
pub fn normalize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lowered.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_alphanumeric() {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    let joins = (d == '.' || d == '-')
                        && chars[i - 1].is_alphanumeric()
                        && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
                    if d.is_alphanumeric() || joins {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let negated = chars[i - 1] == 'n'
                    && chars.get(i).copied().is_some_and(is_apostrophe)
                    && chars.get(i + 1) == Some(&'t')
                    && !chars.get(i + 2).is_some_and(|n| n.is_alphanumeric());
                if negated {
                    let mut stem = &chars[start..i - 1];
                    let mut joiner = None;
                    if let Some((&last, rest)) = stem.split_last() {
                        if last == '.' || last == '-' {
                            stem = rest;
                            joiner = Some(last);
                        }
                    }
                    if !stem.is_empty() {
                        tokens.push(stem.iter().collect());
                    }
                    if joiner == Some('-') {
                        tokens.push("-".to_string());
                    }
                    tokens.push("n't".to_string());
                    i += 2;
                } else {
                    tokens.push(chars[start..i].iter().collect());
                }
            } else {
                if c != '.' {
                    tokens.push(c.to_string());
                }
                i += 1;
            }
        }
    }
    tokens
}

/// Keeps the explanations whose tokens contain `keyword`.
pub fn filter_by_concept<'a>(explanations: &'a [Explanation], keyword: &str) -> Vec<&'a Explanation> {
    explanations
        .iter()
        .filter(|e| e.contains_token(keyword))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    /// File names of the public e-SNLI release for this split.
    pub fn file_names(self) -> &'static [&'static str] {
        match self {
            Split::Train => &["esnli_train_1.csv", "esnli_train_2.csv"],
            Split::Dev => &["esnli_dev.csv"],
            Split::Test => &["esnli_test.csv"],
        }
    }
}

impl FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(DataError::UnknownSplit(other.to_string())),
        }
    }
}

/// Header names used to locate the fields of an e-SNLI style CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub id: String,
    pub label: String,
    pub premise: String,
    pub hypothesis: String,
    pub explanation: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            id: "pairID".into(),
            label: "gold_label".into(),
            premise: "Sentence1".into(),
            hypothesis: "Sentence2".into(),
            explanation: "Explanation_1".into(),
        }
    }
}

impl ColumnMap {
    /// Reads a JSON object; absent keys keep their defaults.
    pub fn from_json_file(path: &Path) -> Result<Self, DataError> {
        let file = File::open(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsnliRecord {
    pub instance: NliInstance,
    pub explanation: Explanation,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedSplit {
    pub records: Vec<EsnliRecord>,
    /// Data rows dropped for a missing or invalid gold label or an empty hypothesis.
    pub skipped: usize,
    pub rows: usize,
}

impl LoadedSplit {
    pub fn explanations(&self) -> Vec<Explanation> {
        self.records.iter().map(|r| r.explanation.clone()).collect()
    }
}

/// Loads an e-SNLI split. `path` is either a CSV file or a directory holding
/// the release files for `split`.
pub fn load_esnli(path: &Path, split: Split) -> Result<LoadedSplit, DataError> {
    load_esnli_with(path, split, &ColumnMap::default())
}

pub fn load_esnli_with(path: &Path, split: Split, columns: &ColumnMap) -> Result<LoadedSplit, DataError> {
    if !path.is_dir() {
        return load_csv(path, columns);
    }
    let mut loaded = LoadedSplit::default();
    for name in split.file_names() {
        let part = load_csv(&path.join(name), columns)?;
        loaded.records.extend(part.records);
        loaded.skipped += part.skipped;
        loaded.rows += part.rows;
    }
    Ok(loaded)
}

fn load_csv(path: &Path, columns: &ColumnMap) -> Result<LoadedSplit, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(BufReader::new(file));
    let header = reader.headers().map_err(csv_err)?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let id_col = column(&columns.id)?;
    let label_col = column(&columns.label)?;
    let premise_col = column(&columns.premise)?;
    let hypothesis_col = column(&columns.hypothesis)?;
    let explanation_col = column(&columns.explanation)?;

    let mut loaded = LoadedSplit::default();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        loaded.rows += 1;
        let field = |i: usize| row.get(i).unwrap_or("");
        let Ok(label) = field(label_col).parse::<NliLabel>() else {
            loaded.skipped += 1;
            continue;
        };
        match NliInstance::new(field(id_col), field(premise_col), field(hypothesis_col), Some(label)) {
            Ok(instance) => loaded.records.push(EsnliRecord {
                instance,
                explanation: Explanation::new(field(explanation_col)),
            }),
            Err(_) => loaded.skipped += 1,
        }
    }
    Ok(loaded)
}

/// Writes records in the e-SNLI column layout that [`load_esnli`] reads.
pub fn write_esnli_csv<W: Write>(out: W, records: &[EsnliRecord]) -> Result<(), csv::Error> {
    let columns = ColumnMap::default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([&columns.id, &columns.label, &columns.premise, &columns.hypothesis, &columns.explanation])?;
    for r in records {
        let label = r.instance.gold_label.map(NliLabel::as_str).unwrap_or("-");
        w.write_record([
            r.instance.id.as_str(),
            label,
            r.instance.context.as_str(),
            r.instance.variable.as_str(),
            r.explanation.raw.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn normalizes_running_example() {
        assert_eq!(normalize("Dog is a type of animal."), toks("dog is a type of animal"));
        assert_eq!(
            normalize("One cannot eat and sleep simultaneously."),
            toks("one cannot eat and sleep simultaneously")
        );
        assert!(normalize("").is_empty());
    }

    #[test]
    fn detaches_contracted_negation() {
        assert_eq!(normalize("doesn't"), toks("does n't"));
        assert_eq!(normalize("A man can't fly."), toks("a man ca n't fly"));
        assert_eq!(normalize("It DOESN’T matter"), toks("it does n't matter"));
        assert_eq!(normalize("does n't"), toks("does n't"));
        assert_eq!(normalize("n't"), toks("n't"));
        // not a contraction
        assert_eq!(normalize("n'thing"), toks("n ' thing"));
        assert_eq!(normalize("x-n't"), toks("x - n't"));
    }

    #[test]
    fn splits_punctuation() {
        assert_eq!(normalize("If a dog, then an animal."), toks("if a dog , then an animal"));
        assert_eq!(normalize("the dog's ball!"), toks("the dog ' s ball !"));
        assert_eq!(normalize("dark-haired women, 3.5 m."), toks("dark-haired women , 3.5 m"));
        assert_eq!(normalize("wait... what?"), toks("wait what ?"));
        assert_eq!(normalize("(really)"), toks("( really )"));
    }

    #[test]
    fn label_round_trips_through_str() {
        for label in NliLabel::ALL {
            assert_eq!(label.as_str().parse::<NliLabel>().unwrap(), label);
            assert!(!label.others().contains(&label));
        }
        assert!("-".parse::<NliLabel>().is_err());
    }

    #[test]
    fn instance_requires_variable() {
        assert!(NliInstance::new("a", "", "x", None).is_ok());
        assert!(matches!(
            NliInstance::new("a", "ctx", "  ", None),
            Err(DataError::EmptyVariable(_))
        ));
    }

    #[test]
    fn filter_keeps_token_matches_only() {
        let set: Vec<Explanation> = ["A woman is a person.", "Women are people.", "The woman sings."]
            .into_iter()
            .map(Explanation::new)
            .collect();
        let hits = filter_by_concept(&set, "woman");
        assert_eq!(hits.len(), 2);
        assert!(filter_by_concept(&set, "snowboarding").is_empty());
    }

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "pairID,gold_label,Sentence1,Sentence2,Explanation_1\n";

    #[test]
    fn loader_skips_unlabeled_rows() {
        let f = write_csv(&format!(
            "{HEADER}1,entailment,\"A dog, running.\",An animal runs.,A dog is an animal.\n\
             2,-,Some premise.,Some hypothesis.,whatever\n\
             3,contradiction,A cat sleeps.,A cat runs.,One cannot sleep and run simultaneously.\n"
        ));
        let loaded = load_esnli(f.path(), Split::Test).unwrap();
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.skipped, 1);
        assert_eq!(loaded.rows, 3);
        let first = &loaded.records[0];
        assert_eq!(first.instance.context, "A dog, running.");
        assert_eq!(first.instance.gold_label, Some(NliLabel::Entailment));
        assert_eq!(first.explanation.tokens, toks("a dog is an animal"));
    }

    #[test]
    fn loader_handles_empty_file_and_errors() {
        let f = write_csv(HEADER);
        let loaded = load_esnli(f.path(), Split::Dev).unwrap();
        assert!(loaded.records.is_empty());
        assert_eq!(loaded.skipped, 0);

        let bad = write_csv("pairID,gold_label,Sentence1,Explanation_1\n");
        match load_esnli(bad.path(), Split::Dev) {
            Err(DataError::MissingColumn { column, .. }) => assert_eq!(column, "Sentence2"),
            other => panic!("expected missing column, got {other:?}"),
        }
        assert!(matches!(
            load_esnli(Path::new("/nonexistent/esnli.csv"), Split::Test),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn loader_respects_column_map() {
        let f = write_csv("id,label,p,h,e\nq1,neutral,P.,H.,Not all dogs are big.\n");
        let map: ColumnMap =
            serde_json::from_str(r#"{"id":"id","label":"label","premise":"p","hypothesis":"h","explanation":"e"}"#)
                .unwrap();
        let loaded = load_esnli_with(f.path(), Split::Train, &map).unwrap();
        assert_eq!(loaded.records[0].instance.id, "q1");
        // partial mapping falls back to defaults
        let partial: ColumnMap = serde_json::from_str(r#"{"id":"id"}"#).unwrap();
        assert_eq!(partial.label, "gold_label");
    }

    #[test]
    fn written_csv_loads_back() {
        let records = vec![EsnliRecord {
            instance: NliInstance::new("7", "A \"quoted\", premise.", "H.", Some(NliLabel::Neutral)).unwrap(),
            explanation: Explanation::new("Not all dogs are big."),
        }];
        let mut buf = Vec::new();
        write_esnli_csv(&mut buf, &records).unwrap();
        let f = write_csv(std::str::from_utf8(&buf).unwrap());
        assert_eq!(load_esnli(f.path(), Split::Test).unwrap().records, records);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(text in "\\PC{0,60}") {
            let once = normalize(&text);
            let twice = normalize(&join_tokens(&once));
            prop_assert_eq!(&once, &twice);
        }

        #[test]
        fn normalize_never_yields_uppercase_or_period(text in "[A-Za-z .,'’!?-]{0,60}") {
            for t in normalize(&text) {
                prop_assert!(t != ".");
                prop_assert!(!t.chars().any(char::is_uppercase));
                prop_assert!(!t.is_empty());
            }
        }

        #[test]
        fn filter_is_a_subset(words in proptest::collection::vec("[a-c]{1,2}( [a-c]{1,2}){0,4}", 0..12), key in "[a-c]{1,2}") {
            let set: Vec<Explanation> = words.into_iter().map(Explanation::new).collect();
            let hits = filter_by_concept(&set, &key);
            prop_assert!(hits.iter().all(|e| e.contains_token(&key)));
            prop_assert_eq!(hits.len(), set.iter().filter(|e| e.contains_token(&key)).count());
        }
    }
}
