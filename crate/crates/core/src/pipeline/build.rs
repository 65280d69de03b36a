//! End-to-end corpus construction.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::correlate::{builtin_rules, enrich_correlations, load_rules, CorrelationRule};
use super::expand::{expand_conversations, ExpandOptions, ExpansionMode};
use super::explain::{builtin_explanations, generate_explanations, load_explanations, ExplanationTemplate};
use super::lexicon::{refine_labels, Lexicon};
use super::templates::PromptTemplateSet;
use crate::datamodel::{
    read_corpus, write_conversations, write_jsonl, Conversation, CorpusHeader, RecordKind,
    SampleRecord, TaskVocabularies,
};
use crate::error::{Error, Result};

/// Stage names in execution order.
pub const STAGES: [&str; 4] = ["refine", "enrich", "explain", "expand"];

/// Pipeline configuration, read from a TOML file.
///
/// ```toml
/// inputs = ["raw/cholec80.jsonl"]
/// output = "out/corpus.jsonl"
/// seed = 7
/// mode = "mixed"          # single_turn | multi_turn | mixed
/// interleave_k = 8
/// # lexicon_path, rules_path, explanations_path, templates_path, vocab_path:
/// # optional, the shipped tables are used when absent
/// ```
///
/// Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    #[serde(default)]
    pub lexicon_path: Option<PathBuf>,
    #[serde(default)]
    pub rules_path: Option<PathBuf>,
    #[serde(default)]
    pub explanations_path: Option<PathBuf>,
    #[serde(default)]
    pub templates_path: Option<PathBuf>,
    #[serde(default)]
    pub vocab_path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: ExpansionMode,
    #[serde(default = "default_k")]
    pub interleave_k: usize,
    #[serde(default = "default_ratio")]
    pub mixed_ratio: f64,
    #[serde(default)]
    pub mcq_ratio: f64,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    /// When set, each stage's output is written here.
    #[serde(default)]
    pub stage_dir: Option<PathBuf>,
    #[serde(default = "default_dataset_id")]
    pub dataset_id: String,
    /// Written to the corpus header verbatim, keeping output reproducible.
    #[serde(default = "default_created_at")]
    pub created_at: String,
}

fn default_mode() -> ExpansionMode {
    ExpansionMode::Mixed
}
fn default_k() -> usize {
    8
}
fn default_ratio() -> f64 {
    0.5
}
fn default_max_turns() -> usize {
    6
}
fn default_dataset_id() -> String {
    "surgbench-db".into()
}
fn default_created_at() -> String {
    "1970-01-01T00:00:00Z".into()
}

impl PipelineConfig {
    pub fn new(output: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            output: output.into(),
            lexicon_path: None,
            rules_path: None,
            explanations_path: None,
            templates_path: None,
            vocab_path: None,
            seed: 0,
            mode: default_mode(),
            interleave_k: default_k(),
            mixed_ratio: default_ratio(),
            mcq_ratio: 0.0,
            max_turns: default_max_turns(),
            stage_dir: None,
            dataset_id: default_dataset_id(),
            created_at: default_created_at(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.inputs.iter_mut().for_each(fix);
        fix(&mut self.output);
        for p in [
            &mut self.lexicon_path,
            &mut self.rules_path,
            &mut self.explanations_path,
            &mut self.templates_path,
            &mut self.vocab_path,
            &mut self.stage_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    fn expand_options(&self, vocab: TaskVocabularies) -> ExpandOptions {
        ExpandOptions {
            mode: self.mode,
            seed: self.seed,
            interleave_k: self.interleave_k,
            mixed_ratio: self.mixed_ratio,
            mcq_ratio: self.mcq_ratio,
            max_turns: self.max_turns,
            vocab,
        }
    }
}

/// Loaded tables for the four stages.
#[derive(Debug, Clone)]
pub struct Resources {
    pub lexicon: Lexicon,
    pub rules: Vec<CorrelationRule>,
    pub explanations: Vec<ExplanationTemplate>,
    pub templates: PromptTemplateSet,
    pub vocab: TaskVocabularies,
}

impl Resources {
    pub fn builtin() -> Self {
        Resources {
            lexicon: Lexicon::builtin(),
            rules: builtin_rules(),
            explanations: builtin_explanations(),
            templates: PromptTemplateSet::builtin(),
            vocab: TaskVocabularies::builtin(),
        }
    }

    /// Loads the configured tables; load failures name the stage using them.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        let mut r = Resources::builtin();
        if let Some(p) = &cfg.lexicon_path {
            r.lexicon = Lexicon::load(p).map_err(|e| stage_err("refine", e))?;
        }
        if let Some(p) = &cfg.rules_path {
            r.rules = load_rules(p).map_err(|e| stage_err("enrich", e))?;
        }
        if let Some(p) = &cfg.explanations_path {
            r.explanations = load_explanations(p).map_err(|e| stage_err("explain", e))?;
        }
        if let Some(p) = &cfg.templates_path {
            r.templates = PromptTemplateSet::load(p).map_err(|e| stage_err("expand", e))?;
        }
        if let Some(p) = &cfg.vocab_path {
            r.vocab = TaskVocabularies::load(p).map_err(|e| stage_err("expand", e))?;
        }
        Ok(r)
    }
}

fn stage_err(stage: &'static str, source: Error) -> Error {
    Error::Stage {
        stage,
        source: Box::new(source),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: &'static str,
    pub input_records: usize,
    pub output_records: usize,
    /// Stage-specific count: substitutions, statements, explained answers,
    /// conversations.
    pub produced: usize,
    pub details: serde_json::Value,
}

/// Answer-bearing text length of one record after stages 1, 2 and 3.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordLengths {
    pub sample_id: String,
    pub lengths: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildReport {
    pub stages: Vec<StageReport>,
    pub records: usize,
    pub conversations: usize,
    pub turns: usize,
    pub text_lengths: Vec<RecordLengths>,
}

impl BuildReport {
    pub fn conversations_per_record(&self) -> f64 {
        if self.records == 0 {
            0.0
        } else {
            self.conversations as f64 / self.records as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub conversations: Vec<Conversation>,
    pub report: BuildReport,
}

fn label_text_len(r: &SampleRecord) -> usize {
    r.labels.values().map(|l| l.render().chars().count()).sum()
}

/// Runs refine, enrich, explain and expand in order. Records are sorted by
/// sample id first so that output order does not depend on input order.
pub fn build_dataset(
    sources: Vec<SampleRecord>,
    cfg: &PipelineConfig,
    res: &Resources,
) -> Result<BuildOutput> {
    let mut records = sources;
    records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let n = records.len();
    let stage_dir = cfg.stage_dir.as_deref();
    let header = |kind| CorpusHeader::new(cfg.dataset_id.clone(), cfg.created_at.clone(), kind);
    let dump = |stage: &'static str, file: &str, write: &dyn Fn(&Path) -> Result<usize>| -> Result<()> {
        if let Some(dir) = stage_dir {
            write(&dir.join(file)).map_err(|e| stage_err(stage, e))?;
        }
        Ok(())
    };

    let (refined, refine_report) = refine_labels(&records, &res.lexicon);
    dump("refine", "1_refined.jsonl", &|p| write_jsonl(&refined, &header(RecordKind::Sample), p))?;
    let len1: Vec<usize> = refined.iter().map(label_text_len).collect();

    let (enriched, enrich_report) = enrich_correlations(refined, &res.rules);
    dump("enrich", "2_enriched.jsonl", &|p| write_jsonl(&enriched, &header(RecordKind::Sample), p))?;
    let len2: Vec<usize> = enriched
        .iter()
        .map(|e| label_text_len(&e.record) + e.statements.iter().map(|s| s.text.chars().count()).sum::<usize>())
        .collect();

    let (explained, explain_report) = generate_explanations(enriched, &res.explanations);
    dump("explain", "3_explained.jsonl", &|p| write_jsonl(&explained, &header(RecordKind::Sample), p))?;
    let len3: Vec<usize> = explained.iter().map(|e| e.text_len()).collect();

    let (conversations, expand_report) =
        expand_conversations(&explained, &res.templates, &cfg.expand_options(res.vocab.clone()))
            .map_err(|e| stage_err("expand", e))?;
    dump("expand", "4_conversations.jsonl", &|p| {
        write_conversations(&conversations, &header(RecordKind::Conversation), p)
    })?;

    let stages = vec![
        StageReport {
            stage: "refine",
            input_records: n,
            output_records: n,
            produced: refine_report.total_substitutions(),
            details: to_json(&refine_report),
        },
        StageReport {
            stage: "enrich",
            input_records: n,
            output_records: enrich_report.records,
            produced: enrich_report.statements,
            details: to_json(&enrich_report),
        },
        StageReport {
            stage: "explain",
            input_records: n,
            output_records: explain_report.records,
            produced: explain_report.explained,
            details: to_json(&explain_report),
        },
        StageReport {
            stage: "expand",
            input_records: n,
            output_records: expand_report.records,
            produced: expand_report.conversations,
            details: to_json(&expand_report),
        },
    ];
    let text_lengths = explained
        .iter()
        .enumerate()
        .map(|(i, e)| RecordLengths {
            sample_id: e.record.sample_id.clone(),
            lengths: [len1[i], len2[i], len3[i]],
        })
        .collect();
    Ok(BuildOutput {
        report: BuildReport {
            stages,
            records: n,
            conversations: conversations.len(),
            turns: expand_report.turns,
            text_lengths,
        },
        conversations,
    })
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Reads the configured inputs, builds the corpus and writes it plus a
/// `<output>.report.json` next to it.
pub fn run_build(cfg: &PipelineConfig) -> Result<BuildReport> {
    let mut records = Vec::new();
    for input in &cfg.inputs {
        let read = read_corpus(input).map_err(|e| stage_err("load", e))?;
        if let Some(d) = read.diagnostics.first() {
            return Err(stage_err(
                "load",
                Error::Format {
                    what: input.display().to_string(),
                    line: d.line,
                    message: d.message.clone(),
                },
            ));
        }
        records.extend(read.records);
    }
    let res = Resources::from_config(cfg)?;
    let out = build_dataset(records, cfg, &res)?;
    let header = CorpusHeader::new(cfg.dataset_id.clone(), cfg.created_at.clone(), RecordKind::Conversation);
    write_conversations(&out.conversations, &header, &cfg.output)?;
    let report_path = report_path(&cfg.output);
    let json = serde_json::to_string_pretty(&out.report)?;
    std::fs::write(&report_path, json + "\n").map_err(|e| Error::io(&report_path, e))?;
    Ok(out.report)
}

pub fn report_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".report.json");
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::datamodel::{Label, TaskKind};

    fn rec(id: &str, phase: &str) -> SampleRecord {
        SampleRecord {
            sample_id: id.into(),
            image_ref: format!("{id}.png"),
            surgery_type: "cholecystectomy".into(),
            dataset_id: "fx".into(),
            image_extent: None,
            labels: BTreeMap::from([
                (TaskKind::PhaseRecognition, Label::Class(phase.into())),
                (TaskKind::InstrumentRecognition, Label::Class("grasper".into())),
            ]),
        }
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let out = build_dataset(vec![], &PipelineConfig::new("x"), &Resources::builtin()).unwrap();
        assert!(out.conversations.is_empty());
        assert_eq!(out.report.stages.len(), 4);
        assert!(out.report.stages.iter().all(|s| s.input_records == 0 && s.produced == 0));
    }

    #[test]
    fn stages_run_in_order() {
        let out = build_dataset(
            vec![rec("b", "CalotTriangleDissection"), rec("a", "other")],
            &PipelineConfig::new("x"),
            &Resources::builtin(),
        )
        .unwrap();
        let names: Vec<_> = out.report.stages.iter().map(|s| s.stage).collect();
        assert_eq!(names, STAGES);
        assert!(out.report.conversations >= out.report.records);
        assert_eq!(out.report.text_lengths[0].sample_id, "a");
    }

    #[test]
    fn template_failure_names_stage() {
        let mut res = Resources::builtin();
        res.templates = PromptTemplateSet::default();
        let err = build_dataset(vec![rec("a", "x")], &PipelineConfig::new("x"), &res).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "expand", .. }), "{err}");
    }

    #[test]
    fn config_parses_and_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pipeline.toml");
        std::fs::write(&p, "inputs = [\"in.jsonl\"]\noutput = \"out/c.jsonl\"\nseed = 3\nmode = \"multi_turn\"\n").unwrap();
        let cfg = PipelineConfig::load(&p).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.mode, ExpansionMode::MultiTurn);
        assert_eq!(cfg.inputs[0], dir.path().join("in.jsonl"));
        assert_eq!(cfg.interleave_k, 8);
    }
}
