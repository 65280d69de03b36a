//! Cross-task correlation statements.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{SampleRecord, TaskKind};
use crate::error::{Error, Result};

const DEFAULT_RULES: &str = include_str!("../../data/rules.tsv");

/// Combines the labels of two correlated tasks into one sentence.
///
/// The template names each task's slot (`{phase}`, `{step}`, ...) exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRule {
    pub first: TaskKind,
    pub second: TaskKind,
    pub template: String,
}

impl CorrelationRule {
    pub fn new(first: TaskKind, second: TaskKind, template: impl Into<String>) -> Result<Self> {
        let rule = CorrelationRule {
            first,
            second,
            template: template.into(),
        };
        rule.check()?;
        Ok(rule)
    }

    fn check(&self) -> Result<()> {
        if self.first == self.second {
            return Err(Error::Config(format!(
                "correlation rule pairs `{}` with itself",
                self.first
            )));
        }
        for task in [self.first, self.second] {
            let slot = format!("{{{}}}", task.slot());
            let n = self.template.matches(&slot).count();
            if n != 1 {
                return Err(Error::Config(format!(
                    "template `{}` must reference {slot} exactly once (found {n})",
                    self.template
                )));
            }
        }
        Ok(())
    }

    pub fn applies_to(&self, record: &SampleRecord) -> bool {
        record.labels.contains_key(&self.first) && record.labels.contains_key(&self.second)
    }

    /// Renders the statement, or `None` when either label is missing.
    pub fn render(&self, record: &SampleRecord) -> Option<String> {
        let a = record.labels.get(&self.first)?;
        let b = record.labels.get(&self.second)?;
        Some(
            self.template
                .replace(&format!("{{{}}}", self.first.slot()), &a.render())
                .replace(&format!("{{{}}}", self.second.slot()), &b.render()),
        )
    }
}

/// Rules file: `first_task<TAB>second_task<TAB>template` per line.
pub fn parse_rules(text: &str, what: &str) -> Result<Vec<CorrelationRule>> {
    let mut rules = Vec::new();
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
            return Err(bad("expected `first<TAB>second<TAB>template`".into()));
        }
        let first: TaskKind = cols[0].parse().map_err(bad)?;
        let second: TaskKind = cols[1].parse().map_err(bad)?;
        rules.push(CorrelationRule::new(first, second, cols[2].trim())?);
    }
    Ok(rules)
}

pub fn load_rules(path: &Path) -> Result<Vec<CorrelationRule>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rules(&text, &path.display().to_string())
}

pub fn builtin_rules() -> Vec<CorrelationRule> {
    parse_rules(DEFAULT_RULES, "builtin rules").expect("builtin rules are valid")
}

/// A combined statement attached by the enrichment stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub first: TaskKind,
    pub second: TaskKind,
    pub text: String,
}

/// A refined record plus its correlation statements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedRecord {
    pub record: SampleRecord,
    pub statements: Vec<Statement>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EnrichmentReport {
    pub records: usize,
    pub statements: usize,
    /// Applications per rule, keyed `first+second`.
    pub per_rule: BTreeMap<String, usize>,
}

/// Attaches one statement per applicable rule. Labels are left untouched.
pub fn enrich_correlations(
    records: Vec<SampleRecord>,
    rules: &[CorrelationRule],
) -> (Vec<EnrichedRecord>, EnrichmentReport) {
    let mut report = EnrichmentReport {
        records: records.len(),
        ..Default::default()
    };
    let enriched = records
        .into_iter()
        .map(|record| {
            let statements: Vec<Statement> = rules
                .iter()
                .filter_map(|rule| {
                    rule.render(&record).map(|text| Statement {
                        first: rule.first,
                        second: rule.second,
                        text,
                    })
                })
                .collect();
            for s in &statements {
                *report
                    .per_rule
                    .entry(format!("{}+{}", s.first.slot(), s.second.slot()))
                    .or_default() += 1;
            }
            report.statements += statements.len();
            EnrichedRecord { record, statements }
        })
        .collect();
    (enriched, report)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::datamodel::Label;

    fn rec(labels: Vec<(TaskKind, &str)>) -> SampleRecord {
        SampleRecord {
            sample_id: "s".into(),
            image_ref: "i.png".into(),
            surgery_type: "prostatectomy".into(),
            dataset_id: "d".into(),
            image_extent: None,
            labels: labels
                .into_iter()
                .map(|(t, l)| (t, Label::Class(l.into())))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn phase_and_step_statement() {
        let r = rec(vec![
            (TaskKind::PhaseRecognition, "developing the Space of Retzius"),
            (TaskKind::StepRecognition, "prevesical dissection"),
        ]);
        let (out, report) = enrich_correlations(vec![r.clone()], &builtin_rules());
        let texts: Vec<_> = out[0].statements.iter().map(|s| s.text.as_str()).collect();
        assert!(texts.contains(
            &"In the current frame, the phase is developing the Space of Retzius and the step is prevesical dissection."
        ));
        assert_eq!(out[0].record, r);
        assert_eq!(report.statements, out[0].statements.len());
    }

    #[test]
    fn instrument_and_action_statement() {
        let r = rec(vec![
            (TaskKind::InstrumentRecognition, "L-shape hook"),
            (TaskKind::ActionRecognition, "dissecting the tissue"),
        ]);
        let (out, _) = enrich_correlations(vec![r], &builtin_rules());
        assert_eq!(out[0].statements.len(), 1);
        assert_eq!(
            out[0].statements[0].text,
            "The instrument is L-shape hook and now it is dissecting the tissue."
        );
    }

    #[test]
    fn single_label_of_pair_gives_nothing() {
        let r = rec(vec![(TaskKind::PhaseRecognition, "Preparation")]);
        let (out, _) = enrich_correlations(vec![r], &builtin_rules());
        assert!(out[0].statements.is_empty());
    }

    #[test]
    fn statements_bounded_by_applicable_rules() {
        let r = rec(vec![
            (TaskKind::PhaseRecognition, "a"),
            (TaskKind::StepRecognition, "b"),
            (TaskKind::InstrumentRecognition, "c"),
            (TaskKind::ActionRecognition, "d"),
        ]);
        let rules = builtin_rules();
        let applicable = rules.iter().filter(|x| x.applies_to(&r)).count();
        let (out, _) = enrich_correlations(vec![r], &rules);
        assert!(out[0].statements.len() <= applicable);
    }

    #[test]
    fn rule_validation() {
        assert!(CorrelationRule::new(TaskKind::PhaseRecognition, TaskKind::PhaseRecognition, "{phase}").is_err());
        assert!(CorrelationRule::new(TaskKind::PhaseRecognition, TaskKind::StepRecognition, "{phase}").is_err());
        assert!(CorrelationRule::new(
            TaskKind::PhaseRecognition,
            TaskKind::StepRecognition,
            "{phase} {step} {phase}"
        )
        .is_err());
    }
}
