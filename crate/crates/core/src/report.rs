//! Report files: a header line, one line per attack result and a closing
//! summary line, all compact JSON.
//!
//! While a run is in progress the same file acts as a journal: results are
//! appended as they complete and the summary is missing. Finalizing rewrites
//! the file with results sorted by instance id.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::AttackResult;
use crate::stats::RunSummary;

pub const REPORT_FORMAT: &str = "inconsistency-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report is truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("line {line} (byte {offset}): {message}")]
    Malformed {
        line: usize,
        offset: usize,
        message: String,
    },
    #[error("missing report header")]
    MissingHeader,
    #[error("not a report file (format `{0}`)")]
    Format(String),
    #[error("report schema version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("line {line}: record after the summary")]
    TrailingRecord { line: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Header { format: String, version: u32 },
    Result(AttackResult),
    Summary(RunSummary),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub results: Vec<AttackResult>,
    pub summary: Option<RunSummary>,
}

fn header_line() -> String {
    serde_json::to_string(&Record::Header {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
    })
    .expect("header serializes")
}

fn result_line(result: &AttackResult) -> String {
    serde_json::to_string(&Record::Result(result.clone())).expect("results serialize")
}

fn summary_line(summary: &RunSummary) -> String {
    serde_json::to_string(&Record::Summary(summary.clone())).expect("summary serializes")
}

/// Canonical bytes of a report; results are written in the order given.
pub fn serialize_report(report: &Report) -> Vec<u8> {
    let mut out = header_line();
    out.push('\n');
    for r in &report.results {
        out.push_str(&result_line(r));
        out.push('\n');
    }
    if let Some(s) = &report.summary {
        out.push_str(&summary_line(s));
        out.push('\n');
    }
    out.into_bytes()
}

/// Writes via a temporary file and rename, so readers never see a partial
/// report.
pub fn write_report(path: &Path, report: &Report) -> Result<(), ReportError> {
    let io = |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, serialize_report(report)).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn read_report(path: &Path) -> Result<Report, ReportError> {
    let bytes = fs::read(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_report(&bytes)
}

/// Strict parse: a missing final newline or an unparsable line is an error.
pub fn parse_report(bytes: &[u8]) -> Result<Report, ReportError> {
    let parsed = parse_lines(bytes, false)?;
    Ok(parsed.report)
}

struct Parsed {
    report: Report,
    /// Length of the prefix made of the header and complete result lines.
    journal_len: usize,
}

fn parse_lines(bytes: &[u8], lenient_tail: bool) -> Result<Parsed, ReportError> {
    let mut report = Report::default();
    let mut offset = 0;
    let mut line_no = 0;
    let mut seen_header = false;
    let mut journal_len = 0;
    while offset < bytes.len() {
        line_no += 1;
        let Some(len) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            if lenient_tail {
                break;
            }
            return Err(ReportError::Truncated { offset });
        };
        let line = &bytes[offset..offset + len];
        let record: Record = match serde_json::from_slice(line) {
            Ok(r) => r,
            Err(e) => {
                return Err(ReportError::Malformed {
                    line: line_no,
                    offset,
                    message: e.to_string(),
                })
            }
        };
        match record {
            Record::Header { format, version } => {
                if seen_header {
                    return Err(ReportError::Malformed {
                        line: line_no,
                        offset,
                        message: "duplicate header".into(),
                    });
                }
                if format != REPORT_FORMAT {
                    return Err(ReportError::Format(format));
                }
                if version != REPORT_VERSION {
                    return Err(ReportError::Version {
                        found: version,
                        expected: REPORT_VERSION,
                    });
                }
                seen_header = true;
            }
            _ if !seen_header => return Err(ReportError::MissingHeader),
            _ if report.summary.is_some() => return Err(ReportError::TrailingRecord { line: line_no }),
            Record::Result(r) => report.results.push(r),
            Record::Summary(s) => report.summary = Some(s),
        }
        offset += len + 1;
        if report.summary.is_none() {
            journal_len = offset;
        }
    }
    if !seen_header {
        return Err(ReportError::MissingHeader);
    }
    Ok(Parsed { report, journal_len })
}

/// Appends results to an in-progress report.
pub struct ReportWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl ReportWriter {
    /// Starts a fresh journal, replacing any existing file.
    pub fn create(path: &Path) -> Result<Self, ReportError> {
        let io = |source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io)?;
        let mut w = ReportWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.write_line(&header_line())?;
        Ok(w)
    }

    /// Reopens a journal for appending. A partial last line left by an
    /// interrupted run, or the summary of a finished one, is cut off; the
    /// results before it are returned.
    pub fn resume(path: &Path) -> Result<(Self, Vec<AttackResult>), ReportError> {
        let io = |source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        };
        let bytes = fs::read(path).map_err(io)?;
        let parsed = parse_lines(&bytes, true)?;
        let file = OpenOptions::new().write(true).open(path).map_err(io)?;
        file.set_len(parsed.journal_len as u64).map_err(io)?;
        drop(file);
        let file = OpenOptions::new().append(true).open(path).map_err(io)?;
        Ok((
            ReportWriter {
                path: path.to_path_buf(),
                out: BufWriter::new(file),
            },
            parsed.report.results,
        ))
    }

    fn write_line(&mut self, line: &str) -> Result<(), ReportError> {
        let io = |source| ReportError::Io {
            path: self.path.clone(),
            source,
        };
        self.out.write_all(line.as_bytes()).map_err(io)?;
        self.out.write_all(b"\n").map_err(io)?;
        self.out.flush().map_err(io)
    }

    pub fn append(&mut self, result: &AttackResult) -> Result<(), ReportError> {
        self.write_line(&result_line(result))
    }
}
