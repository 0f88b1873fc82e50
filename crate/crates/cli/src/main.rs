use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use inconsistency_core::data::{
    filter_by_concept, join_tokens, load_esnli_with, write_esnli_csv, ColumnMap, EsnliRecord, LoadedSplit, Split,
};
use inconsistency_core::generate::{GenerationOutcome, Provenance};
use inconsistency_core::oracle::{synthetic_corpus, Oracle, OracleHandler, OracleSpec};
use inconsistency_core::protocol::{ForwardResponse, Mode};
use inconsistency_core::report::read_report;
use inconsistency_core::stats::{collect_pairs, compute_summary, dedup_pairs, sample_for_annotation, write_annotation_csv, Deviation, RunSummary};
use inconsistency_core::template::{describe_binding, expand, load_template_file, parse_template};
use inconsistency_core::{build_inconsistency_set, normalize, Explanation, NliLabel, TemplateSet};
use inconsistency_runtime::{
    attack_dataset, bind_http, serve_stdio, AttackConfig, AttackItem, Endpoint, ModelEndpoint, RunStatus, ServeOptions,
    TransportSpec,
};

#[derive(Parser)]
#[command(name = "incheck", version, about = "Find inconsistent natural-language explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attack every instance of a dataset and write a report
    Attack(AttackArgs),
    /// List the inconsistent candidates for one explanation
    Gen {
        explanation: String,
        /// Label the explanation was given for; omit to try every label
        #[arg(long)]
        label: Option<NliLabel>,
        #[command(flatten)]
        templates: TemplateArgs,
        #[arg(long)]
        json: bool,
    },
    /// Show the template and binding an explanation matches
    Match {
        explanation: String,
        #[arg(long)]
        label: Option<NliLabel>,
        #[command(flatten)]
        templates: TemplateArgs,
    },
    /// Print the variants of one template line
    Expand {
        /// `LABEL<TAB>PATTERN`; a run of spaces after the label also works
        line: String,
    },
    /// Summarize a report
    Stats {
        report: PathBuf,
        /// Fraction of distinct pairs judged realistic
        #[arg(long)]
        realism: Option<f64>,
        /// Use the sample (n - 1) standard deviation
        #[arg(long)]
        sample_std: bool,
        #[arg(long)]
        json: bool,
    },
    /// Draw distinct pairs from a report for manual annotation
    Sample {
        report: PathBuf,
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output; stdout when omitted
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Serve one side of a deterministic oracle model
    Oracle {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        mode: Mode,
        /// Listen for HTTP on this address instead of using stdio
        #[arg(long)]
        http: Option<SocketAddr>,
        /// Answer stdio requests out of order
        #[arg(long)]
        reorder: bool,
    },
    /// Print dataset explanations containing a keyword
    Filter {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        keyword: String,
        /// Print only the number of matches
        #[arg(long)]
        count: bool,
    },
    /// Write an oracle spec and a matching dataset
    Synth {
        #[arg(long)]
        facts: usize,
        #[arg(long, default_value_t = 0)]
        seeded: usize,
        #[arg(long, default_value_t = 0)]
        distractors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct TemplateArgs {
    /// Template file; the shipped set when omitted
    #[arg(long)]
    templates: Option<PathBuf>,
}

impl TemplateArgs {
    fn load(&self) -> Result<TemplateSet> {
        match &self.templates {
            Some(p) => load_template_file(p).with_context(|| format!("loading templates from {}", p.display())),
            None => Ok(TemplateSet::shipped()),
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// e-SNLI CSV file, or a directory holding the release files
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// JSON object mapping id/label/premise/hypothesis/explanation to header names
    #[arg(long)]
    columns: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<LoadedSplit> {
        let columns = match &self.columns {
            Some(p) => ColumnMap::from_json_file(p)?,
            None => ColumnMap::default(),
        };
        let loaded = load_esnli_with(&self.data, self.split, &columns)?;
        if loaded.skipped > 0 {
            log::info!("skipped {} of {} rows", loaded.skipped, loaded.rows);
        }
        Ok(loaded)
    }
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model under attack: an http(s) URL or a command speaking the protocol on stdio
    #[arg(long)]
    model: String,
    /// Reverse explainer, same forms as --model
    #[arg(long)]
    reverser: String,
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    templates: TemplateArgs,
    /// Send an empty context and the whole input as the variable part
    #[arg(long)]
    standalone: bool,
    /// Use the dataset's explanation and gold label instead of querying the model first
    #[arg(long)]
    precomputed: bool,
    #[arg(long, default_value_t = 8)]
    max_inflight: usize,
    #[arg(long, default_value_t = 60_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 1)]
    retries: usize,
    /// Checkpoint file; an existing one resumes the run
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Attack at most this many new instances, then stop (needs --resume)
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    realism: f64,
    #[arg(long)]
    sample_std: bool,
}

fn deviation(sample: bool) -> Deviation {
    if sample {
        Deviation::Sample
    } else {
        Deviation::Population
    }
}

fn endpoint(text: &str, args: &AttackArgs) -> Result<Endpoint> {
    let mut spec = ModelEndpoint::new(TransportSpec::parse(text)?);
    spec.timeout = Duration::from_millis(args.timeout_ms);
    spec.max_inflight = args.max_inflight;
    Ok(Endpoint::connect(&spec)?)
}

async fn attack(args: AttackArgs) -> Result<()> {
    if args.limit.is_some() && args.resume.is_none() {
        bail!("--limit needs --resume so the run can be continued");
    }
    let templates = args.templates.load()?;
    let records = args.data.load()?.records;
    let items: Vec<AttackItem> = records
        .into_iter()
        .map(|r| AttackItem {
            precomputed: args.precomputed.then_some(ForwardResponse {
                label: r.instance.gold_label,
                explanation: r.explanation,
            }),
            instance: r.instance,
        })
        .collect();
    let model = endpoint(&args.model, &args)?;
    let reverser = endpoint(&args.reverser, &args)?;
    let config = AttackConfig {
        standalone: args.standalone,
        instance_concurrency: args.max_inflight,
        candidate_concurrency: args.max_inflight,
        retries: args.retries,
        realism: args.realism,
        deviation: deviation(args.sample_std),
        checkpoint: args.resume.clone(),
        limit: args.limit,
    };
    match attack_dataset(&items, &model, &reverser, &templates, &config, &args.out).await? {
        RunStatus::Complete(summary) => {
            print_summary(&summary);
            println!("report written to {}", args.out.display());
        }
        RunStatus::Partial { done, remaining } => {
            println!("stopped after {done} instances, {remaining} remaining; rerun with the same --resume to continue");
        }
    }
    Ok(())
}

fn print_summary(s: &RunSummary) {
    let rows: [(&str, String); 12] = [
        ("instances processed", s.processed.to_string()),
        ("discarded", format!("{} ({:.2}%)", s.discarded, 100.0 * s.discard_fraction)),
        ("errored instances", s.errored_instances.to_string()),
        ("errored traces", s.errored_traces.to_string()),
        ("verified pairs", s.raw_pairs.to_string()),
        ("distinct pairs", s.distinct_pairs.to_string()),
        (
            "reverse hypotheses per pair",
            format!("{:.2} ± {:.2}", s.hypotheses_per_pair_mean, s.hypotheses_per_pair_std),
        ),
        (
            "  weighted by raw pairs",
            format!("{:.2} ± {:.2}", s.hypotheses_per_raw_pair_mean, s.hypotheses_per_raw_pair_std),
        ),
        ("standard deviation", format!("{:?}", s.deviation).to_lowercase()),
        ("realism fraction", format!("{}", s.realism_fraction)),
        ("realistic distinct pairs", s.realistic_pairs.to_string()),
        ("success rate", format!("{:.2}%", 100.0 * s.success_rate)),
    ];
    for (name, value) in rows {
        println!("{name:<28} {value}");
    }
}

fn provenance(p: &Provenance) -> String {
    match p {
        Provenance::Negation { position } => format!("negation@{position}"),
        Provenance::Swap { template, variant } => format!("{template}/{variant}"),
    }
}

fn gen(explanation: &str, label: Option<NliLabel>, templates: &TemplateSet, json: bool) -> Result<()> {
    let outcome = build_inconsistency_set(&Explanation::new(explanation), label, templates);
    if json {
        println!("{}", serde_json::to_string_pretty(&outcome)?);
        return Ok(());
    }
    match outcome {
        GenerationOutcome::Discarded => println!("discarded: no negation and no template match"),
        GenerationOutcome::Generated(set) => {
            let source = set.source_label.map_or("-", NliLabel::as_str);
            println!("# {} candidates (source label {source})", set.len());
            for c in &set.candidates {
                println!("{}\t{}", provenance(&c.provenance), join_tokens(&c.tokens));
            }
        }
    }
    Ok(())
}

fn show_match(explanation: &str, label: Option<NliLabel>, templates: &TemplateSet) -> Result<()> {
    let tokens = normalize(explanation);
    let found = match label {
        Some(l) => templates.match_label(&tokens, l),
        None => templates.match_any(&tokens),
    };
    match found {
        Some(m) => {
            println!("{}\t{}", m.template.id, m.template.source);
            println!("variant {}\t{}", m.variant, describe_binding(&m.binding));
            Ok(())
        }
        None => bail!("no template matches `{}`", join_tokens(&tokens)),
    }
}

fn expand_line(line: &str) -> Result<()> {
    let line = match line.split_once('\t') {
        Some(_) => line.to_string(),
        None => match line.split_once(char::is_whitespace) {
            Some((label, rest)) => format!("{label}\t{}", rest.trim_start()),
            None => line.to_string(),
        },
    };
    let template = parse_template(&line)?;
    for (i, v) in expand(&template).iter().enumerate() {
        println!("{i}\t{v}");
    }
    Ok(())
}

fn stats(report: &Path, realism: Option<f64>, sample_std: bool, json: bool) -> Result<()> {
    let report = read_report(report)?;
    let realism = realism
        .or(report.summary.as_ref().map(|s| s.realism_fraction))
        .unwrap_or(1.0);
    let summary = compute_summary(&report.results, realism, deviation(sample_std))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        if report.summary.is_none() {
            println!("(report has no summary; the run may be unfinished)");
        }
        print_summary(&summary);
    }
    Ok(())
}

fn sample(report: &Path, n: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let report = read_report(report)?;
    let distinct = dedup_pairs(&collect_pairs(&report.results));
    let picked = sample_for_annotation(&distinct, n, seed)?;
    match out {
        Some(p) => write_annotation_csv(BufWriter::new(File::create(p)?), &picked)?,
        None => write_annotation_csv(io::stdout().lock(), &picked)?,
    }
    Ok(())
}

async fn oracle(spec: &Path, mode: Mode, http: Option<SocketAddr>, reorder: bool) -> Result<()> {
    let spec = OracleSpec::from_json_file(spec)?;
    let handler = Arc::new(OracleHandler::new(Oracle::new(&spec)?, mode));
    match http {
        Some(addr) => {
            let (bound, server) = bind_http(handler, addr).await?;
            eprintln!("serving {mode} requests on http://{bound}/");
            server.await?;
        }
        None => serve_stdio(handler, ServeOptions { reorder }).await?,
    }
    Ok(())
}

fn filter(data: &DataArgs, keyword: &str, count: bool) -> Result<()> {
    let explanations = data.load()?.explanations();
    let keyword = normalize(keyword);
    let [keyword] = keyword.as_slice() else {
        bail!("keyword must be a single token");
    };
    let hits = filter_by_concept(&explanations, keyword);
    if count {
        println!("{}", hits.len());
        return Ok(());
    }
    let mut out = io::stdout().lock();
    for e in hits {
        writeln!(out, "{}", e.raw)?;
    }
    Ok(())
}

fn synth(facts: usize, seeded: usize, distractors: usize, seed: u64, out_dir: &Path) -> Result<()> {
    let corpus = synthetic_corpus(facts, seeded, distractors, seed)?;
    let oracle = Oracle::new(&corpus.spec)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("spec.json"), corpus.spec.to_json())?;
    let records: Vec<EsnliRecord> = corpus
        .instances
        .into_iter()
        .map(|instance| {
            let explanation = oracle.forward(&instance.context, &instance.variable).explanation;
            EsnliRecord { instance, explanation }
        })
        .collect();
    write_esnli_csv(BufWriter::new(File::create(out_dir.join("dataset.csv"))?), &records)?;
    println!(
        "wrote {} facts ({seeded} seeded) and {} instances to {}",
        facts,
        records.len(),
        out_dir.display()
    );
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Attack(args) => attack(args).await,
        Command::Gen {
            explanation,
            label,
            templates,
            json,
        } => gen(&explanation, label, &templates.load()?, json),
        Command::Match {
            explanation,
            label,
            templates,
        } => show_match(&explanation, label, &templates.load()?),
        Command::Expand { line } => expand_line(&line),
        Command::Stats {
            report,
            realism,
            sample_std,
            json,
        } => stats(&report, realism, sample_std, json),
        Command::Sample { report, n, seed, out } => sample(&report, n, seed, out.as_deref()),
        Command::Oracle {
            spec,
            mode,
            http,
            reorder,
        } => oracle(&spec, mode, http, reorder).await,
        Command::Filter { data, keyword, count } => filter(&data, &keyword, count),
        Command::Synth {
            facts,
            seeded,
            distractors,
            seed,
            out_dir,
        } => synth(facts, seeded, distractors, seed, &out_dir),
    }
}
