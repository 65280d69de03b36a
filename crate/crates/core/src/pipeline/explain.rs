//! Explanation clauses appended to per-task answers.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::correlate::{EnrichedRecord, Statement};
use crate::datamodel::{SampleRecord, TaskKind};
use crate::error::{Error, Result};
use crate::util::norm_key;

const DEFAULT_EXPLANATIONS: &str = include_str!("../../data/explanations.tsv");

/// Explanation for a task label, or for every label of a task when `label`
/// is `None`. The text may reference other labels of the record by slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationTemplate {
    pub task: TaskKind,
    pub label: Option<String>,
    pub text: String,
}

impl ExplanationTemplate {
    fn resolve(&self, record: &SampleRecord) -> Option<String> {
        let mut out = self.text.replace("{surgery}", &record.surgery_type);
        for task in TaskKind::ALL {
            let slot = format!("{{{}}}", task.slot());
            if out.contains(&slot) {
                out = out.replace(&slot, &record.labels.get(&task)?.render());
            }
        }
        Some(out)
    }
}

/// Explanations file: `task<TAB>label-or-*<TAB>explanation` per line.
pub fn parse_explanations(text: &str, what: &str) -> Result<Vec<ExplanationTemplate>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Format {
            what: what.to_string(),
            line: idx + 1,
            message,
        };
        let cols: Vec<&str> = line.splitn(3, '\t').collect();
        if cols.len() != 3 {
            return Err(bad("expected `task<TAB>label<TAB>explanation`".into()));
        }
        let task: TaskKind = cols[0].parse().map_err(bad)?;
        let text = cols[2].trim();
        if text.is_empty() {
            return Err(bad("empty explanation".into()));
        }
        let label = match cols[1].trim() {
            "*" | "" => None,
            l => Some(l.to_string()),
        };
        out.push(ExplanationTemplate {
            task,
            label,
            text: text.to_string(),
        });
    }
    Ok(out)
}

pub fn load_explanations(path: &Path) -> Result<Vec<ExplanationTemplate>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_explanations(&text, &path.display().to_string())
}

pub fn builtin_explanations() -> Vec<ExplanationTemplate> {
    parse_explanations(DEFAULT_EXPLANATIONS, "builtin explanations")
        .expect("builtin explanations are valid")
}

/// An enriched record with one answer text per labeled task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedRecord {
    pub record: SampleRecord,
    pub statements: Vec<Statement>,
    pub answers: BTreeMap<TaskKind, String>,
}

impl ExplainedRecord {
    /// A record whose answers are the bare label renderings.
    pub fn plain(record: SampleRecord) -> Self {
        let answers = record
            .labels
            .iter()
            .map(|(t, l)| (*t, l.render()))
            .collect();
        ExplainedRecord {
            record,
            statements: Vec::new(),
            answers,
        }
    }

    /// Total characters of answers and statements.
    pub fn text_len(&self) -> usize {
        self.answers.values().map(|a| a.chars().count()).sum::<usize>()
            + self.statements.iter().map(|s| s.text.chars().count()).sum::<usize>()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExplanationReport {
    pub records: usize,
    pub explained: usize,
    pub unchanged: usize,
    /// Answers left without explanation, per task.
    pub missing: BTreeMap<TaskKind, usize>,
}

/// Builds the answer text of every labeled task: the rendered label,
/// extended with `, <explanation>` when a template matches. Exact label
/// templates win over wildcard ones.
pub fn generate_explanations(
    records: Vec<EnrichedRecord>,
    templates: &[ExplanationTemplate],
) -> (Vec<ExplainedRecord>, ExplanationReport) {
    let mut report = ExplanationReport {
        records: records.len(),
        ..Default::default()
    };
    let out = records
        .into_iter()
        .map(|EnrichedRecord { record, statements }| {
            let mut answers = BTreeMap::new();
            for (task, label) in &record.labels {
                let base = label.render();
                let key = norm_key(&base);
                let candidates = templates.iter().filter(|t| t.task == *task);
                let exact = candidates
                    .clone()
                    .find(|t| t.label.as_deref().map(norm_key).as_deref() == Some(key.as_str()));
                let chosen = exact.or_else(|| candidates.clone().find(|t| t.label.is_none()));
                let clause = chosen.and_then(|t| t.resolve(&record));
                let answer = match clause {
                    Some(c) => {
                        report.explained += 1;
                        format!("{base}, {c}")
                    }
                    None => {
                        report.unchanged += 1;
                        *report.missing.entry(*task).or_default() += 1;
                        base
                    }
                };
                answers.insert(*task, answer);
            }
            ExplainedRecord {
                record,
                statements,
                answers,
            }
        })
        .collect();
    (out, report)
}
