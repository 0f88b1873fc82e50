//! Running the attack loop against live endpoints.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use futures::stream::{self, StreamExt};
use inconsistency_core::attack::{sort_results, wire_input, AttackCandidateTrace, AttackResult, Stage, TraceError};
use inconsistency_core::data::NliInstance;
use inconsistency_core::generate::{build_inconsistency_set, Candidate, GenerationOutcome};
use inconsistency_core::protocol::ForwardResponse;
use inconsistency_core::report::{write_report, Report, ReportError, ReportWriter};
use inconsistency_core::stats::{compute_summary, Deviation, RunSummary, StatsError};
use inconsistency_core::template::TemplateSet;
use log::{info, warn};
use thiserror::Error;

use crate::endpoint::Endpoint;
use crate::EndpointError;

#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub standalone: bool,
    pub instance_concurrency: usize,
    pub candidate_concurrency: usize,
    /// Extra attempts after a retryable endpoint failure.
    pub retries: usize,
    pub realism: f64,
    pub deviation: Deviation,
    pub checkpoint: Option<PathBuf>,
    /// Stop after this many newly attacked instances, leaving the run
    /// resumable.
    pub limit: Option<usize>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            standalone: false,
            instance_concurrency: 4,
            candidate_concurrency: 4,
            retries: 1,
            realism: 1.0,
            deviation: Deviation::Population,
            checkpoint: None,
            limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackItem {
    pub instance: NliInstance,
    /// Use this instead of querying the model for the original explanation.
    pub precomputed: Option<ForwardResponse>,
}

impl From<NliInstance> for AttackItem {
    fn from(instance: NliInstance) -> Self {
        AttackItem {
            instance,
            precomputed: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("duplicate instance id `{0}` in dataset")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Complete(RunSummary),
    /// The instance limit was reached; `remaining` instances are left.
    Partial { done: usize, remaining: usize },
}

async fn with_retries<T, F, Fut>(retries: usize, mut call: F) -> Result<T, EndpointError>
where
    F: FnMut() -> Fut,
    Fut: std::future::Future<Output = Result<T, EndpointError>>,
{
    let mut attempt = 0;
    loop {
        match call().await {
            Err(e) if e.is_retryable() && attempt < retries => {
                attempt += 1;
                warn!("retrying after {e} (attempt {attempt} of {retries})");
            }
            other => return other,
        }
    }
}

async fn run_candidate(
    index: usize,
    candidate: &Candidate,
    set: &inconsistency_core::InconsistencySet,
    context: &str,
    model: &Endpoint,
    reverser: &Endpoint,
    config: &AttackConfig,
) -> AttackCandidateTrace {
    let mut trace = AttackCandidateTrace {
        index,
        candidate: candidate.tokens.clone(),
        provenance: candidate.provenance.clone(),
        reverse_variable: None,
        reverse: None,
        verified: false,
        error: None,
    };
    let explanation = inconsistency_core::data::join_tokens(&candidate.tokens);
    let reverse = with_retries(config.retries, || reverser.reverse(context, &explanation)).await;
    let variable = match reverse {
        Ok(r) => r.variable,
        Err(e) => {
            trace.error = Some(TraceError {
                stage: Stage::Reverse,
                message: e.to_string(),
            });
            return trace;
        }
    };
    trace.reverse_variable = Some(variable.clone());
    match with_retries(config.retries, || model.forward(context, &variable)).await {
        Ok(response) => {
            trace.verified = set.contains(&response.explanation.tokens);
            trace.reverse = Some(response);
        }
        Err(e) => {
            trace.error = Some(TraceError {
                stage: Stage::Forward,
                message: e.to_string(),
            });
        }
    }
    trace
}

/// Attacks a single instance. Endpoint failures are recorded in the result
/// rather than returned.
pub async fn attack_instance(
    item: &AttackItem,
    model: &Endpoint,
    reverser: &Endpoint,
    templates: &TemplateSet,
    config: &AttackConfig,
) -> AttackResult {
    let (context, variable) = wire_input(&item.instance, config.standalone);
    let mut result = AttackResult {
        instance: item.instance.clone(),
        original: None,
        outcome: None,
        traces: Vec::new(),
        error: None,
    };
    let original = match &item.precomputed {
        Some(r) => r.clone(),
        None => match with_retries(config.retries, || model.forward(&context, &variable)).await {
            Ok(r) => r,
            Err(e) => {
                result.error = Some(e.to_string());
                return result;
            }
        },
    };
    let outcome = build_inconsistency_set(&original.explanation, original.label, templates);
    result.original = Some(original);
    if let GenerationOutcome::Generated(set) = &outcome {
        let context = context.as_str();
        result.traces = stream::iter(set.candidates.iter().enumerate())
            .map(|(i, c)| run_candidate(i, c, set, context, model, reverser, config))
            .buffered(config.candidate_concurrency.max(1))
            .collect()
            .await;
    }
    result.outcome = Some(outcome);
    result
}

/// Attacks every item and returns results sorted by instance id.
pub async fn attack_all(
    items: &[AttackItem],
    model: &Endpoint,
    reverser: &Endpoint,
    templates: &TemplateSet,
    config: &AttackConfig,
) -> Vec<AttackResult> {
    let mut results: Vec<AttackResult> = stream::iter(items)
        .map(|item| attack_instance(item, model, reverser, templates, config))
        .buffer_unordered(config.instance_concurrency.max(1))
        .collect()
        .await;
    sort_results(&mut results);
    results
}

fn checkpoint_error(path: &Path, message: impl Into<String>) -> AttackError {
    AttackError::Checkpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads completed ids, one JSON string per line. An unterminated last line
/// is what an interrupted write leaves behind and is ignored.
fn read_checkpoint(path: &Path) -> Result<Vec<String>, AttackError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(checkpoint_error(path, e.to_string())),
    };
    let complete = match text.rfind('\n') {
        Some(end) => &text[..=end],
        None => "",
    };
    let mut ids = Vec::new();
    for (n, line) in complete.lines().enumerate() {
        let id: String = serde_json::from_str(line)
            .map_err(|e| checkpoint_error(path, format!("line {}: {e}", n + 1)))?;
        ids.push(id);
    }
    Ok(ids)
}

fn journal_path(report: &Path) -> PathBuf {
    let mut p = report.as_os_str().to_owned();
    p.push(".partial");
    PathBuf::from(p)
}

/// Attacks a dataset, journaling each result as it completes, and writes the
/// final sorted report with its summary to `report`.
///
/// With a checkpoint configured, instances it lists are not attacked again;
/// their results come from the journal next to the report.
pub async fn attack_dataset(
    items: &[AttackItem],
    model: &Endpoint,
    reverser: &Endpoint,
    templates: &TemplateSet,
    config: &AttackConfig,
    report: &Path,
) -> Result<RunStatus, AttackError> {
    let mut known = HashSet::new();
    for item in items {
        if !known.insert(item.instance.id.as_str()) {
            return Err(AttackError::DuplicateId(item.instance.id.clone()));
        }
    }

    let journal = journal_path(report);
    let mut done: HashMap<String, AttackResult> = HashMap::new();
    let (mut writer, mut checkpoint) = match &config.checkpoint {
        Some(cp) if cp.exists() => {
            let ids = read_checkpoint(cp)?;
            let (writer, prior) = if journal.exists() {
                ReportWriter::resume(&journal)?
            } else if ids.is_empty() {
                (ReportWriter::create(&journal)?, Vec::new())
            } else {
                return Err(checkpoint_error(cp, format!("journal {} is missing", journal.display())));
            };
            let prior: HashMap<String, AttackResult> =
                prior.into_iter().map(|r| (r.instance.id.clone(), r)).collect();
            for id in ids {
                if !known.contains(id.as_str()) {
                    return Err(checkpoint_error(cp, format!("unknown instance id `{id}`")));
                }
                let Some(r) = prior.get(&id) else {
                    return Err(checkpoint_error(cp, format!("no journaled result for `{id}`")));
                };
                if done.insert(id.clone(), r.clone()).is_some() {
                    return Err(checkpoint_error(cp, format!("instance `{id}` listed twice")));
                }
            }
            rewrite_checkpoint(cp, done.keys())?;
            let file = OpenOptions::new()
                .append(true)
                .open(cp)
                .map_err(|e| checkpoint_error(cp, e.to_string()))?;
            (writer, Some((cp.clone(), file)))
        }
        Some(cp) => {
            let file = File::create(cp).map_err(|e| checkpoint_error(cp, e.to_string()))?;
            (ReportWriter::create(&journal)?, Some((cp.clone(), file)))
        }
        None => (ReportWriter::create(&journal)?, None),
    };
    if !done.is_empty() {
        info!("resuming: {} of {} instances already done", done.len(), items.len());
    }

    let todo: Vec<&AttackItem> = items.iter().filter(|i| !done.contains_key(&i.instance.id)).collect();
    let take = config.limit.unwrap_or(todo.len()).min(todo.len());
    let mut stream = stream::iter(&todo[..take])
        .map(|item| attack_instance(item, model, reverser, templates, config))
        .buffer_unordered(config.instance_concurrency.max(1));
    while let Some(result) = stream.next().await {
        writer.append(&result)?;
        if let Some((path, file)) = &mut checkpoint {
            let mut line = serde_json::to_string(&result.instance.id).expect("ids serialize");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| checkpoint_error(path, e.to_string()))?;
        }
        done.insert(result.instance.id.clone(), result);
    }
    drop(stream);
    drop(writer);

    if take < todo.len() {
        return Ok(RunStatus::Partial {
            done: done.len(),
            remaining: todo.len() - take,
        });
    }
    let mut results: Vec<AttackResult> = done.into_values().collect();
    sort_results(&mut results);
    let summary = compute_summary(&results, config.realism, config.deviation)?;
    write_report(
        report,
        &Report {
            results,
            summary: Some(summary.clone()),
        },
    )?;
    let _ = fs::remove_file(&journal);
    Ok(RunStatus::Complete(summary))
}

/// Rewrites the checkpoint without any partial tail, in a stable order.
fn rewrite_checkpoint<'a>(path: &Path, ids: impl Iterator<Item = &'a String>) -> Result<(), AttackError> {
    let mut ids: Vec<&String> = ids.collect();
    ids.sort();
    let mut text = String::new();
    for id in ids {
        text.push_str(&serde_json::to_string(id).expect("ids serialize"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| checkpoint_error(path, e.to_string()))
}
