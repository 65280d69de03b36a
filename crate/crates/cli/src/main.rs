use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use surgbench::arena::{leaderboard, read_reports, ArenaVector, LeaderboardEntry};
use surgbench::datamodel::{
    read_corpus, read_jsonl, write_corpus, write_jsonl, CorpusHeader, ParseStatus, PredictionRecord, Protocol,
    RecordKind, SampleRecord, TaskKind, TaskVocabularies,
};
use surgbench::harness::{
    entry_from_run_dir, run_eval, write_synthetic_suite, BenchmarkSuite, ModelIdentity, PredictionSource, RunOptions,
};
use surgbench::kernel::selftest;
use surgbench::metrics::task_report;
use surgbench::parser::{parse_label, ParseConfig, Parsed};
use surgbench::pipeline::{import_cholec80, import_endoscapes, import_sar_rarp, run_build, ImportFormat, PipelineConfig};

#[derive(Parser)]
#[command(name = "surgbench", version, about = "Surgical VLM corpus, scoring and benchmark toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or import training corpora.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Parse raw model responses offline.
    Parse(ParseArgs),
    /// Score predictions against ground truth.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Rank runs by arena score.
    Arena(ArenaArgs),
    /// Run the six-dataset benchmark.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Numeric reference kernels.
    #[command(subcommand)]
    Kernel(KernelCmd),
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Run refine, enrich, explain and expand from a TOML config.
    Build {
        #[arg(long)]
        config: PathBuf,
    },
    /// Convert a public annotation file into a sample corpus.
    Import(ImportArgs),
}

#[derive(Args)]
struct ImportArgs {
    /// cholec80, endoscapes or sar_rarp.
    #[arg(long)]
    format: ImportFormat,
    #[arg(long = "in")]
    input: PathBuf,
    /// Cholec80 tool-presence file.
    #[arg(long)]
    tools: Option<PathBuf>,
    /// Video name used in sample ids; defaults to the input file stem.
    #[arg(long)]
    video: Option<String>,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long)]
    dataset_id: Option<String>,
    #[arg(long, default_value = "1970-01-01T00:00:00Z")]
    created_at: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ParseArgs {
    #[arg(long)]
    task: TaskKind,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Extra vocabulary table merged over the shipped one.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Replacement refusal-pattern file.
    #[arg(long)]
    refusals: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Prediction `conversation_id`s are `<sample_id>` or
    /// `<sample_id>:<task>`. Records without a parsed label are parsed first.
    Compute {
        #[arg(long)]
        task: TaskKind,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ArenaArgs {
    /// Run directories (with manifest.json) or directories of per-dataset
    /// report files.
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    /// Output stem; `.txt` and `.json` are written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Protocol recorded for directories without a manifest.
    #[arg(long, default_value = "ov")]
    protocol: Protocol,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Evaluate an endpoint or replay a predictions directory.
    Run(RunArgs),
    /// Write six synthetic corpora and a suite file for dry runs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 50)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    suite: PathBuf,
    /// Endpoint name from the suite file.
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    endpoint: Option<String>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    protocol: Option<Protocol>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value = "")]
    institute: String,
}

#[derive(Subcommand)]
enum KernelCmd {
    /// Check the kernel invariants and print a pass/fail table.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_config(vocab: Option<&Path>, refusals: Option<&Path>) -> Result<ParseConfig> {
    let mut vocabs = TaskVocabularies::builtin();
    if let Some(p) = vocab {
        vocabs = vocabs.merged(&TaskVocabularies::load(p)?);
    }
    let mut cfg = ParseConfig::default().with_vocab(vocabs);
    if let Some(p) = refusals {
        cfg = cfg.with_refusal_file(p)?;
    }
    Ok(cfg)
}

/// Fills status and parsed label of a raw record. Transport errors are
/// kept as they are.
fn parse_record(mut r: PredictionRecord, task: TaskKind, cfg: &ParseConfig) -> PredictionRecord {
    if r.status == ParseStatus::TransportError {
        r.parsed = None;
        return r;
    }
    let parsed = parse_label(task, &r.response, cfg);
    r.status = parsed.status();
    r.parsed = match parsed {
        Parsed::Value(l) => Some(l),
        _ => None,
    };
    r
}

fn load_corpus(path: &Path) -> Result<Vec<SampleRecord>> {
    let read = read_corpus(path)?;
    if let Some(d) = read.diagnostics.first() {
        bail!("{}:{}: {}", path.display(), d.line, d.message);
    }
    Ok(read.records)
}

fn load_predictions(path: &Path) -> Result<(Vec<PredictionRecord>, CorpusHeader)> {
    let read = read_jsonl::<PredictionRecord>(path, RecordKind::Prediction)?;
    if let Some(d) = read.diagnostics.first() {
        bail!("{}:{}: {}", path.display(), d.line, d.message);
    }
    let header = read
        .header
        .unwrap_or_else(|| CorpusHeader::new("predictions", "1970-01-01T00:00:00Z", RecordKind::Prediction));
    Ok((read.records, header))
}

fn cmd_import(a: ImportArgs) -> Result<()> {
    let video = a.video.clone().unwrap_or_else(|| {
        a.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".into())
    });
    let (records, default_id) = match a.format {
        ImportFormat::Cholec80 => (import_cholec80(&a.input, a.tools.as_deref(), &video, a.stride)?, "cholec80"),
        ImportFormat::Endoscapes => (import_endoscapes(&a.input)?, "endoscape2023_cvs"),
        ImportFormat::SarRarp => (import_sar_rarp(&a.input, &video, a.stride)?, "sar_rarp"),
    };
    let id = a.dataset_id.unwrap_or_else(|| default_id.to_string());
    let header = CorpusHeader::new(id, a.created_at, RecordKind::Sample);
    let n = write_corpus(&records, &header, &a.out)?;
    println!("imported {n} records into {}", a.out.display());
    Ok(())
}

fn cmd_parse(a: ParseArgs) -> Result<()> {
    let cfg = parse_config(a.vocab.as_deref(), a.refusals.as_deref())?;
    let (records, header) = load_predictions(&a.input)?;
    let out: Vec<PredictionRecord> = records.into_iter().map(|r| parse_record(r, a.task, &cfg)).collect();
    write_jsonl(&out, &header, &a.out)?;
    let count = |s: ParseStatus| out.iter().filter(|r| r.status == s).count();
    println!(
        "parsed {} failed {} refused {} transport_error {}",
        count(ParseStatus::Parsed),
        count(ParseStatus::ParseFailed),
        count(ParseStatus::Refused),
        count(ParseStatus::TransportError)
    );
    Ok(())
}

fn cmd_metrics(task: TaskKind, gt: &Path, pred: &Path, out: &Path, vocab: Option<&Path>) -> Result<()> {
    let cfg = parse_config(vocab, None)?;
    let records = load_corpus(gt)?;
    let (preds, _) = load_predictions(pred)?;
    let mut by_id: HashMap<String, PredictionRecord> = HashMap::new();
    for p in preds {
        let key = match p.conversation_id.split_once(':') {
            Some((sid, t)) if t == task.as_str() => sid.to_string(),
            Some(_) => continue,
            None => p.conversation_id.clone(),
        };
        by_id.insert(key, p);
    }
    let mut labels = Vec::new();
    let mut predicted = Vec::new();
    let mut statuses = Vec::new();
    let mut missing = Vec::new();
    for r in records.iter().filter(|r| r.labels.contains_key(&task)) {
        let Some(p) = by_id.remove(&r.sample_id) else {
            missing.push(r.sample_id.clone());
            continue;
        };
        let p = if p.parsed.is_none() && p.status == ParseStatus::ParseFailed {
            parse_record(p, task, &cfg)
        } else {
            p
        };
        labels.push(r.labels[&task].clone());
        statuses.push(p.status);
        predicted.push(if p.status == ParseStatus::Parsed { p.parsed } else { None });
    }
    if !missing.is_empty() {
        bail!("missing predictions for {} sample(s): {}", missing.len(), missing.join(", "));
    }
    if labels.is_empty() {
        bail!("no ground-truth records carry a {task} label");
    }
    let mut report = task_report(task, &labels, &predicted, &cfg.vocab)?;
    let count = |s: ParseStatus| statuses.iter().filter(|x| **x == s).count();
    report.parse_failures = count(ParseStatus::ParseFailed);
    report.refusals = count(ParseStatus::Refused);
    report.transport_errors = count(ParseStatus::TransportError);
    report.write(out)?;
    for (k, v) in &report.metrics {
        println!("{k:<28} {v:>8.2}");
    }
    Ok(())
}

fn cmd_arena(a: ArenaArgs) -> Result<()> {
    let mut entries = Vec::new();
    for dir in &a.reports {
        let entry = if dir.join("manifest.json").is_file() {
            entry_from_run_dir(dir)?
        } else {
            let reports = read_reports(dir)?;
            let vector = ArenaVector::from_reports(&reports)
                .with_context(|| format!("assembling arena vector from {}", dir.display()))?;
            let name = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string());
            LeaderboardEntry::new(name, String::new(), a.protocol, vector)?
        };
        entries.push(entry);
    }
    let board = leaderboard(entries)?;
    let (txt, json) = board.write(&a.out)?;
    print!("{}", board.render_text());
    println!("wrote {} and {}", txt.display(), json.display());
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let suite = BenchmarkSuite::load(&a.suite)?;
    let source = match (&a.endpoint, &a.predictions) {
        (Some(name), _) => {
            let endpoint = suite
                .endpoints
                .get(name)
                .with_context(|| format!("suite has no endpoint `{name}`"))?
                .clone();
            PredictionSource::Endpoint { name: name.clone(), endpoint }
        }
        (None, Some(dir)) => PredictionSource::Canned(dir.clone()),
        (None, None) => bail!("either --endpoint or --predictions is required"),
    };
    let protocol = a.protocol.unwrap_or(match &source {
        PredictionSource::Endpoint { endpoint, .. } => endpoint.protocol,
        PredictionSource::Canned(_) => Protocol::Ov,
    });
    let mut opts = RunOptions::new(protocol);
    opts.seed = a.seed;
    opts.budget = a.budget;
    opts.out = Some(a.out);
    opts.model = a.model.map(|name| ModelIdentity { name, institute: a.institute });
    let outcome = run_eval(&suite, &source, &opts)?;
    print!("{}", outcome.leaderboard.render_text());
    for (id, d) in &outcome.manifest.datasets {
        println!(
            "{id:<18} queries {:>5}  parsed {:>5}  failed {:>4}  refused {:>4}  transport {:>4}",
            d.queries, d.parsed, d.parse_failed, d.refused, d.transport_errors
        );
    }
    if let Some(dir) = &outcome.run_dir {
        println!("run directory {}", dir.display());
    }
    Ok(())
}

fn cmd_selftest(seed: u64) -> Result<bool> {
    let results = selftest(seed);
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    println!("{:<width$}  {:<6}  detail", "check", "result");
    for r in &results {
        println!("{:<width$}  {:<6}  {}", r.name, if r.passed { "pass" } else { "FAIL" }, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    Ok(failed == 0)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Pipeline(PipelineCmd::Build { config }) => {
            let cfg = PipelineConfig::load(&config)?;
            let report = run_build(&cfg)?;
            for s in &report.stages {
                println!("{:<10} in {:>6}  out {:>6}  produced {:>6}", s.stage, s.input_records, s.output_records, s.produced);
            }
            println!(
                "{} records, {} conversations, {} turns -> {}",
                report.records,
                report.conversations,
                report.turns,
                cfg.output.display()
            );
        }
        Command::Pipeline(PipelineCmd::Import(a)) => cmd_import(a)?,
        Command::Parse(a) => cmd_parse(a)?,
        Command::Metrics(MetricsCmd::Compute { task, gt, pred, out, vocab }) => {
            cmd_metrics(task, &gt, &pred, &out, vocab.as_deref())?
        }
        Command::Arena(a) => cmd_arena(a)?,
        Command::Bench(BenchCmd::Run(a)) => cmd_run(a)?,
        Command::Bench(BenchCmd::Synth { out, samples, budget, seed }) => {
            write_synthetic_suite(&out, samples, budget, seed)?;
            println!("wrote {}", out.join("suite.toml").display());
        }
        Command::Kernel(KernelCmd::Selftest { seed }) => return cmd_selftest(seed),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
