use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TaskKind;
use crate::error::{Error, Result};
use crate::util::norm_key;

const DEFAULT_VOCAB: &str = include_str!("../../data/vocab.tsv");

/// Instrument / verb / target vocabularies for triplet recognition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TripletVocab {
    pub instruments: Vec<String>,
    pub verbs: Vec<String>,
    pub targets: Vec<String>,
}

impl TripletVocab {
    pub fn is_empty(&self) -> bool {
        self.instruments.is_empty() && self.verbs.is_empty() && self.targets.is_empty()
    }

    /// Vocabulary members for component 0 (instrument), 1 (verb), 2 (target).
    pub fn component(&self, idx: usize) -> &[String] {
        match idx {
            0 => &self.instruments,
            1 => &self.verbs,
            _ => &self.targets,
        }
    }

    pub fn contains(&self, idx: usize, term: &str) -> bool {
        let key = norm_key(term);
        self.component(idx).iter().any(|m| norm_key(m) == key)
    }
}

/// Per-task label vocabularies plus the triplet component vocabularies.
///
/// File format: one `key<TAB>term` pair per line, `#` comments allowed. Keys
/// are task kinds (`phase_recognition`) or triplet components (`instrument`,
/// `verb`, `target`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskVocabularies {
    pub tasks: BTreeMap<TaskKind, Vec<String>>,
    pub triplet: TripletVocab,
}

impl TaskVocabularies {
    /// The shipped vocabulary tables.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_VOCAB, "builtin vocab").expect("builtin vocabulary is well-formed")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, what: &str) -> Result<Self> {
        let mut out = TaskVocabularies::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (key, term) = line.split_once('\t').ok_or_else(|| Error::Format {
                what: what.to_string(),
                line: idx + 1,
                message: "expected `key<TAB>term`".into(),
            })?;
            let term = term.trim().to_string();
            if term.is_empty() {
                return Err(Error::Format {
                    what: what.to_string(),
                    line: idx + 1,
                    message: "empty term".into(),
                });
            }
            let list = match key.trim() {
                "instrument" => &mut out.triplet.instruments,
                "verb" => &mut out.triplet.verbs,
                "target" => &mut out.triplet.targets,
                other => {
                    let task: TaskKind = other.parse().map_err(|m| Error::Format {
                        what: what.to_string(),
                        line: idx + 1,
                        message: m,
                    })?;
                    out.tasks.entry(task).or_default()
                }
            };
            if !list.iter().any(|m| norm_key(m) == norm_key(&term)) {
                list.push(term);
            }
        }
        Ok(out)
    }

    pub fn for_task(&self, task: TaskKind) -> &[String] {
        self.tasks.get(&task).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Adds `term` to the task vocabulary if not already present.
    pub fn insert(&mut self, task: TaskKind, term: &str) {
        let list = self.tasks.entry(task).or_default();
        if !list.iter().any(|m| norm_key(m) == norm_key(term)) {
            list.push(term.to_string());
        }
    }

    /// Union of two vocabularies, `self` first.
    pub fn merged(mut self, other: &TaskVocabularies) -> Self {
        for (task, terms) in &other.tasks {
            for t in terms {
                self.insert(*task, t);
            }
        }
        for idx in 0..3 {
            for t in other.triplet.component(idx) {
                if !self.triplet.contains(idx, t) {
                    match idx {
                        0 => self.triplet.instruments.push(t.clone()),
                        1 => self.triplet.verbs.push(t.clone()),
                        _ => self.triplet.targets.push(t.clone()),
                    }
                }
            }
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_tables_load() {
        let v = TaskVocabularies::builtin();
        assert_eq!(v.for_task(TaskKind::PhaseRecognition).len(), 7);
        assert_eq!(v.for_task(TaskKind::ActionRecognition).len(), 8);
        assert_eq!(v.for_task(TaskKind::InstrumentLocalizationGrid).len(), 5);
        // public CholecT50 component lists
        assert_eq!(v.triplet.instruments.len(), 6);
        assert_eq!(v.triplet.verbs.len(), 10);
        assert_eq!(v.triplet.targets.len(), 15);
        assert!(v.triplet.contains(2, "Cystic Duct"));
    }

    #[test]
    fn rejects_unknown_key() {
        let err = TaskVocabularies::parse("bogus\tx\n", "t").unwrap_err();
        assert!(err.to_string().contains("t:1"));
    }
}
