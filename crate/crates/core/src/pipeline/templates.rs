//! Question/answer templates used to phrase conversations.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::TaskKind;
use crate::error::{Error, Result};

const DEFAULT_TEMPLATES: &str = include_str!("../../data/templates.tsv");

/// Per-task template count of the shipped set.
pub const TEMPLATE_BOUNDS: (usize, usize) = (100, 200);

pub const ANSWER_SLOT: &str = "{answer}";
pub const SURGERY_SLOT: &str = "{surgery}";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub question: String,
    /// Contains [`ANSWER_SLOT`] exactly once.
    pub answer: String,
}

impl PromptTemplate {
    pub fn question_for(&self, surgery: &str) -> String {
        self.question.replace(SURGERY_SLOT, surgery)
    }

    pub fn answer_for(&self, answer: &str, surgery: &str) -> String {
        self.answer
            .replace(SURGERY_SLOT, surgery)
            .replace(ANSWER_SLOT, answer)
    }
}

/// Templates per task kind. `seed` is folded into the expansion seed, so two
/// sets with identical templates but different seeds phrase differently.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplateSet {
    pub tasks: BTreeMap<TaskKind, Vec<PromptTemplate>>,
    pub seed: u64,
}

impl PromptTemplateSet {
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_TEMPLATES, "builtin templates").expect("builtin templates are valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// `task<TAB>question<TAB>answer` per line, `#` comments.
    pub fn parse(text: &str, what: &str) -> Result<Self> {
        let mut set = PromptTemplateSet::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Format {
                what: what.to_string(),
                line: idx + 1,
                message,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad("expected `task<TAB>question<TAB>answer`".into()));
            }
            let task: TaskKind = cols[0].trim().parse().map_err(bad)?;
            let question = cols[1].trim();
            let answer = cols[2].trim();
            if question.is_empty() {
                return Err(bad("empty question".into()));
            }
            if answer.matches(ANSWER_SLOT).count() != 1 {
                return Err(bad(format!("answer must contain {ANSWER_SLOT} exactly once")));
            }
            set.tasks.entry(task).or_default().push(PromptTemplate {
                question: question.to_string(),
                answer: answer.to_string(),
            });
        }
        Ok(set)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn count(&self, task: TaskKind) -> usize {
        self.tasks.get(&task).map_or(0, Vec::len)
    }

    /// Templates of a task; a task without templates is an error.
    pub fn for_task(&self, task: TaskKind) -> Result<&[PromptTemplate]> {
        match self.tasks.get(&task) {
            Some(t) if !t.is_empty() => Ok(t),
            _ => Err(Error::NoTemplates(task.to_string())),
        }
    }

    /// Checks `min <= count <= max` for every task kind.
    pub fn check_bounds(&self, min: usize, max: usize) -> Result<()> {
        for task in TaskKind::ALL {
            let n = self.count(task);
            if n < min || n > max {
                return Err(Error::Config(format!(
                    "{task} has {n} templates, expected {min}..={max}"
                )));
            }
        }
        Ok(())
    }
}
