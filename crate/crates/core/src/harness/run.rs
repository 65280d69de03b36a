use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::{parallel_map, query_model, HttpTransport, MockTransport, RateLimiter, Transport};
use super::score::{dataset_report, score_turn, ParserCalls, ScoredTurn};
use super::suite::{hex, sample_frames, BenchmarkSuite, Decoding, DatasetDescriptor, ModelEndpoint};
use crate::arena::{arena_score, leaderboard, ArenaVector, Leaderboard, LeaderboardEntry};
use crate::datamodel::{
    read_corpus, read_jsonl, write_jsonl, Conversation, CorpusHeader, ParseStatus, PredictionRecord,
    Protocol, RecordKind, SampleRecord, TaskVocabularies,
};
use crate::error::{Error, Result};
use crate::kernel::MockModel;
use crate::metrics::MetricReport;
use crate::parser::ParseConfig;
use crate::pipeline::{evaluation_conversation, OptionPool, PromptTemplateSet};
use crate::util::sub_seed;

/// Where responses come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionSource {
    Endpoint { name: String, endpoint: ModelEndpoint },
    /// A directory holding `<dataset>/predictions.jsonl` or
    /// `<dataset>.jsonl` prediction files, e.g. an earlier run directory.
    Canned(PathBuf),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelIdentity {
    pub name: String,
    #[serde(default)]
    pub institute: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub protocol: Protocol,
    /// Overrides the suite seed.
    pub seed: Option<u64>,
    /// Overrides the suite budget.
    pub budget: Option<usize>,
    /// Parent of the run directory; nothing is written when `None`.
    pub out: Option<PathBuf>,
    pub model: Option<ModelIdentity>,
}

impl RunOptions {
    pub fn new(protocol: Protocol) -> Self {
        RunOptions {
            protocol,
            seed: None,
            budget: None,
            out: None,
            model: None,
        }
    }
}

/// Per-dataset bookkeeping in the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetOutcome {
    pub sample_ids: Vec<String>,
    pub conversations: usize,
    pub queries: usize,
    pub parsed: usize,
    pub parse_failed: usize,
    pub refused: usize,
    pub transport_errors: usize,
    pub retries: u32,
    pub parser_calls: ParserCalls,
}

impl DatasetOutcome {
    /// Every query ends in exactly one status.
    pub fn is_conserved(&self) -> bool {
        self.parsed + self.parse_failed + self.refused + self.transport_errors == self.queries
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub suite_hash: String,
    pub model: ModelIdentity,
    pub source: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoding: Option<Decoding>,
    pub datasets: BTreeMap<String, DatasetOutcome>,
    pub retries: u32,
    /// Wall-clock times; left out of replays so they stay byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    pub arena: ArenaVector,
    pub arena_score: f64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub reports: BTreeMap<String, MetricReport>,
    pub leaderboard: Leaderboard,
    pub run_dir: Option<PathBuf>,
}

fn now() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_default()
}

struct DatasetRun {
    outcome: DatasetOutcome,
    report: MetricReport,
    predictions: Vec<PredictionRecord>,
    scored: Vec<ScoredTurn>,
}

struct Shared<'a> {
    suite: &'a BenchmarkSuite,
    opts: &'a RunOptions,
    seed: u64,
    budget: usize,
    templates: PromptTemplateSet,
    vocab: TaskVocabularies,
    parse: ParseConfig,
}

fn load_corpus(descriptor: &DatasetDescriptor) -> Result<Vec<SampleRecord>> {
    let read = read_corpus(&descriptor.corpus)?;
    if let Some(d) = read.diagnostics.first() {
        return Err(Error::Format {
            what: descriptor.corpus.display().to_string(),
            line: d.line,
            message: d.message.clone(),
        });
    }
    Ok(read.records)
}

fn conversations_for(shared: &Shared, descriptor: &DatasetDescriptor) -> Result<(Vec<String>, Vec<Conversation>, HashMap<String, String>)> {
    let records = load_corpus(descriptor)?;
    let eligible: Vec<&SampleRecord> = records
        .iter()
        .filter(|r| descriptor.tasks.iter().any(|t| r.labels.contains_key(t)))
        .collect();
    if eligible.is_empty() {
        return Err(Error::EmptyCorpus(descriptor.id.clone()));
    }
    let ids: Vec<String> = eligible.iter().map(|r| r.sample_id.clone()).collect();
    let sampled = sample_frames(&ids, shared.budget, sub_seed(shared.seed, &descriptor.id))?;
    let by_id: HashMap<&str, &SampleRecord> = eligible.iter().map(|r| (r.sample_id.as_str(), *r)).collect();
    let pool = OptionPool::new(&shared.vocab, &records);
    let mut convs = Vec::new();
    let mut images = HashMap::new();
    for id in &sampled {
        let record = by_id[id.as_str()];
        for task in &descriptor.tasks {
            if record.labels.contains_key(task) {
                let c = evaluation_conversation(record, *task, shared.opts.protocol, &shared.templates, &pool, shared.seed)?;
                images.insert(c.conversation_id.clone(), record.image_ref.clone());
                convs.push(c);
            }
        }
    }
    Ok((sampled, convs, images))
}

fn canned_path(dir: &Path, dataset: &str) -> PathBuf {
    let nested = dir.join(dataset).join("predictions.jsonl");
    if nested.is_file() {
        nested
    } else {
        dir.join(format!("{dataset}.jsonl"))
    }
}

fn load_canned(dir: &Path, dataset: &str, convs: &[Conversation]) -> Result<Vec<Vec<PredictionRecord>>> {
    let path = canned_path(dir, dataset);
    let read = read_jsonl::<PredictionRecord>(&path, RecordKind::Prediction)?;
    let mut by_key: HashMap<(String, usize), PredictionRecord> = read
        .records
        .into_iter()
        .map(|r| ((r.conversation_id.clone(), r.turn_index), r))
        .collect();
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(convs.len());
    for c in convs {
        let mut recs = Vec::new();
        for i in 0..c.turns.len() {
            match by_key.remove(&(c.conversation_id.clone(), i)) {
                Some(mut r) => {
                    if !matches!(r.status, ParseStatus::TransportError | ParseStatus::Refused) {
                        r.status = ParseStatus::ParseFailed;
                    }
                    r.parsed = None;
                    recs.push(r);
                }
                None => {
                    if missing.last() != Some(&c.sample_id) {
                        missing.push(c.sample_id.clone());
                    }
                }
            }
        }
        out.push(recs);
    }
    if !missing.is_empty() {
        return Err(Error::MissingPredictions {
            dataset: dataset.to_string(),
            ids: missing,
        });
    }
    Ok(out)
}

fn run_dataset(shared: &Shared, descriptor: &DatasetDescriptor, source: &PredictionSource) -> Result<DatasetRun> {
    if !descriptor.protocols.contains(&shared.opts.protocol) {
        return Err(Error::Suite(format!(
            "dataset `{}` does not support protocol {}",
            descriptor.id, shared.opts.protocol
        )));
    }
    let (sampled, convs, images) = conversations_for(shared, descriptor)?;
    let (raw, retries): (Vec<Vec<PredictionRecord>>, u32) = match source {
        PredictionSource::Canned(dir) => (load_canned(dir, &descriptor.id, &convs)?, 0),
        PredictionSource::Endpoint { endpoint, .. } => {
            let transport: Box<dyn Transport> = if endpoint.uri.starts_with("mock://") {
                let behavior = MockTransport::behavior_from_uri(&endpoint.uri)?;
                let model = MockModel::new(behavior).with_vocab(shared.vocab.clone());
                Box::new(MockTransport::new(model, &convs))
            } else {
                Box::new(HttpTransport::new(endpoint)?)
            };
            let limiter = RateLimiter::new(endpoint.requests_per_second);
            let root = shared.suite.image_root.as_deref();
            let results = parallel_map(&convs, endpoint.max_in_flight, |c| {
                query_model(endpoint, transport.as_ref(), &limiter, c, &images[&c.conversation_id], root, &shared.parse)
            });
            let retries = results.iter().map(|(_, r)| r).sum();
            (results.into_iter().map(|(recs, _)| recs).collect(), retries)
        }
    };
    let mut calls = ParserCalls::default();
    let mut scored = Vec::new();
    let mut predictions = Vec::new();
    for (c, recs) in convs.iter().zip(&raw) {
        for (turn, rec) in c.turns.iter().zip(recs) {
            let s = score_turn(turn, rec, shared.opts.protocol, &shared.parse, &mut calls);
            predictions.push(s.prediction(&rec.response));
            scored.push(s);
        }
    }
    let report = dataset_report(descriptor, &scored, &shared.parse)?;
    let count = |st: ParseStatus| scored.iter().filter(|s| s.status == st).count();
    let outcome = DatasetOutcome {
        sample_ids: sampled,
        conversations: convs.len(),
        queries: scored.len(),
        parsed: count(ParseStatus::Parsed),
        parse_failed: count(ParseStatus::ParseFailed),
        refused: count(ParseStatus::Refused),
        transport_errors: count(ParseStatus::TransportError),
        retries,
        parser_calls: calls,
    };
    Ok(DatasetRun {
        outcome,
        report,
        predictions,
        scored,
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn write_scored(scored: &[ScoredTurn], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in scored {
        let line = serde_json::to_string(s)?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Samples, queries or loads, parses and scores every dataset of the suite,
/// then assembles the arena vector. With `opts.out` set, writes
/// `<out>/<run_id>/` holding `manifest.json`, `leaderboard.{txt,json}` and
/// per dataset `predictions.jsonl`, `parsed.jsonl`, `report.json`.
pub fn run_eval(suite: &BenchmarkSuite, source: &PredictionSource, opts: &RunOptions) -> Result<RunOutcome> {
    let mut suite = suite.clone();
    suite.validate()?;
    let seed = opts.seed.unwrap_or(suite.seed);
    let budget = opts.budget.unwrap_or(suite.budget);
    suite.seed = seed;
    suite.budget = budget;
    let started_at = matches!(source, PredictionSource::Endpoint { .. }).then(now);

    let vocab = match &suite.vocab {
        Some(p) => TaskVocabularies::builtin().merged(&TaskVocabularies::load(p)?),
        None => TaskVocabularies::builtin(),
    };
    let templates = match &suite.templates {
        Some(p) => PromptTemplateSet::load(p)?,
        None => PromptTemplateSet::builtin(),
    };
    let parse = ParseConfig::default().with_vocab(vocab.clone());
    let shared = Shared {
        suite: &suite,
        opts,
        seed,
        budget,
        templates,
        vocab,
        parse,
    };

    let (source_desc, decoding, default_model) = match source {
        PredictionSource::Endpoint { name, endpoint } => {
            endpoint.validate()?;
            let model = ModelIdentity {
                name: if endpoint.model.is_empty() { name.clone() } else { endpoint.model.clone() },
                institute: endpoint.institute.clone(),
            };
            (format!("endpoint:{name}:{}", endpoint.uri), Some(endpoint.decoding.clone()), model)
        }
        PredictionSource::Canned(dir) => {
            let name = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "predictions".into());
            (format!("predictions:{}", dir.display()), None, ModelIdentity { name, institute: String::new() })
        }
    };
    let model = opts.model.clone().unwrap_or(default_model);

    let mut datasets = BTreeMap::new();
    let mut reports = BTreeMap::new();
    let mut runs = BTreeMap::new();
    for d in &suite.datasets {
        let run = run_dataset(&shared, d, source)?;
        datasets.insert(d.id.clone(), run.outcome.clone());
        reports.insert(d.id.clone(), run.report.clone());
        runs.insert(d.id.clone(), run);
    }
    let vector = ArenaVector::from_reports(&reports)?;
    let score = arena_score(&vector)?;
    let suite_hash = suite.config_hash();
    let run_id = {
        let key = format!("{suite_hash}|{source_desc}|{}|{}|{seed}", model.name, opts.protocol);
        hex(&Sha256::digest(key.as_bytes()))[..16].to_string()
    };
    let manifest = RunManifest {
        run_id: run_id.clone(),
        suite_hash,
        model: model.clone(),
        source: source_desc,
        protocol: opts.protocol,
        seed,
        budget,
        decoding,
        retries: datasets.values().map(|d: &DatasetOutcome| d.retries).sum(),
        datasets,
        started_at,
        finished_at: None,
        arena: vector,
        arena_score: score,
    };
    let mut manifest = manifest;
    if manifest.started_at.is_some() {
        manifest.finished_at = Some(now());
    }
    let board = leaderboard(vec![LeaderboardEntry::new(&model.name, &model.institute, opts.protocol, vector)?])?;

    let run_dir = match &opts.out {
        None => None,
        Some(out) => {
            let dir = out.join(&run_id);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (id, run) in &runs {
                let ddir = dir.join(id);
                std::fs::create_dir_all(&ddir).map_err(|e| Error::io(&ddir, e))?;
                let header = CorpusHeader::new(id.as_str(), manifest.started_at.clone().unwrap_or_else(|| "1970-01-01T00:00:00Z".into()), RecordKind::Prediction);
                write_jsonl(&run.predictions, &header, &ddir.join("predictions.jsonl"))?;
                write_scored(&run.scored, &ddir.join("parsed.jsonl"))?;
                run.report.write(&ddir.join("report.json"))?;
            }
            write_json(&manifest, &dir.join("manifest.json"))?;
            board.write(&dir.join("leaderboard"))?;
            Some(dir)
        }
    };
    Ok(RunOutcome {
        manifest,
        reports,
        leaderboard: board,
        run_dir,
    })
}

/// Leaderboard entry for a run directory, identity from its manifest.
pub fn entry_from_run_dir(dir: &Path) -> Result<LeaderboardEntry> {
    let manifest = RunManifest::read(&dir.join("manifest.json"))?;
    let reports = crate::arena::read_reports(dir)?;
    let vector = ArenaVector::from_reports(&reports)?;
    LeaderboardEntry::new(manifest.model.name, manifest.model.institute, manifest.protocol, vector)
}
