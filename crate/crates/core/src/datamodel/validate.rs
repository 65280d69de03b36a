use std::collections::HashSet;

use serde::Serialize;

use super::{BoundingBox, Label, SampleRecord, TripletVocab};
use crate::pipeline::{Lexicon, LexiconHit};

/// One violated invariant, addressed by field path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub path: String,
    pub rule: &'static str,
    pub message: String,
}

/// A value accepted only after lexicon canonicalization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Normalization {
    pub path: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub normalized: Vec<Normalization>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn violation(&mut self, path: String, rule: &'static str, message: impl Into<String>) {
        self.violations.push(Violation {
            path,
            rule,
            message: message.into(),
        });
    }
}

/// Structural validation of a record (no vocabulary checks).
pub fn validate_record(record: &SampleRecord) -> ValidationReport {
    Validator::default().validate(record)
}

/// Validates each record and additionally flags duplicate sample ids.
pub fn validate_corpus<'a, I>(records: I, validator: &Validator) -> Vec<(String, ValidationReport)>
where
    I: IntoIterator<Item = &'a SampleRecord>,
{
    let mut seen = HashSet::new();
    records
        .into_iter()
        .map(|r| {
            let mut report = validator.validate(r);
            if !seen.insert(r.sample_id.clone()) {
                report.violation(
                    "sample_id".into(),
                    "unique sample id",
                    format!("duplicate sample id `{}`", r.sample_id),
                );
            }
            (r.sample_id.clone(), report)
        })
        .collect()
}

/// Record validator with optional triplet vocabulary and lexicon.
#[derive(Debug, Clone, Default)]
pub struct Validator {
    pub triplet_vocab: Option<TripletVocab>,
    pub lexicon: Option<Lexicon>,
}

impl Validator {
    pub fn with_vocab(triplet_vocab: TripletVocab, lexicon: Option<Lexicon>) -> Self {
        Validator {
            triplet_vocab: Some(triplet_vocab),
            lexicon,
        }
    }

    pub fn validate(&self, record: &SampleRecord) -> ValidationReport {
        let mut report = ValidationReport::default();
        if record.sample_id.trim().is_empty() {
            report.violation("sample_id".into(), "non-empty sample id", "sample id is empty");
        }
        if record.surgery_type.trim().is_empty() {
            report.violation(
                "surgery_type".into(),
                "non-empty surgery type",
                "surgery type is empty",
            );
        }
        if record.labels.is_empty() {
            report.violation("labels".into(), "at least one label", "record has no labels");
        }
        for (task, label) in &record.labels {
            let path = format!("labels.{}", task.as_str());
            if label.shape() != task.label_shape() {
                report.violation(
                    path.clone(),
                    "label shape",
                    format!("{task} expects a {:?} label", task.label_shape()),
                );
                continue;
            }
            match label {
                Label::Class(c) if c.trim().is_empty() => {
                    report.violation(path, "non-empty class", "class label is empty");
                }
                Label::Boxes(boxes) => {
                    for (i, b) in boxes.iter().enumerate() {
                        self.check_box(b, record, &format!("{path}[{i}]"), &mut report);
                    }
                }
                Label::Triplet(t) => {
                    let parts = [&t.instrument, &t.verb, &t.target];
                    let names = ["instrument", "verb", "target"];
                    for (idx, (value, name)) in parts.into_iter().zip(names).enumerate() {
                        self.check_component(idx, value, &format!("{path}.{name}"), &mut report);
                    }
                }
                _ => {}
            }
        }
        report
    }

    fn check_box(
        &self,
        b: &BoundingBox,
        record: &SampleRecord,
        path: &str,
        report: &mut ValidationReport,
    ) {
        let coords = [b.x1, b.y1, b.x2, b.y2];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0) {
            report.violation(
                path.to_string(),
                "non-negative coordinates",
                "coordinates must be finite and non-negative",
            );
        }
        if !b.is_ordered() {
            report.violation(
                path.to_string(),
                "box ordering",
                format!("expected x1 < x2 and y1 < y2, got {}", b.coords_text()),
            );
        }
        if let Some(ext) = record.image_extent {
            if b.x2 > ext.width || b.y2 > ext.height {
                report.violation(
                    path.to_string(),
                    "box within extent",
                    format!(
                        "{} exceeds image extent {}x{}",
                        b.coords_text(),
                        ext.width,
                        ext.height
                    ),
                );
            }
        }
    }

    fn check_component(&self, idx: usize, value: &str, path: &str, report: &mut ValidationReport) {
        let Some(vocab) = &self.triplet_vocab else {
            return;
        };
        if vocab.contains(idx, value) {
            return;
        }
        let mapped = self.lexicon.as_ref().and_then(|lex| match lex.lookup(value) {
            LexiconHit::Mapped(to) => Some(to.to_string()),
            _ => None,
        });
        match mapped {
            Some(to) if vocab.contains(idx, &to) => report.normalized.push(Normalization {
                path: path.to_string(),
                from: value.to_string(),
                to,
            }),
            _ => report.violation(
                path.to_string(),
                "vocabulary membership",
                format!("`{value}` is not in the vocabulary"),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::datamodel::{ImageExtent, TaskKind, Triplet};

    fn record(labels: Vec<(TaskKind, Label)>) -> SampleRecord {
        SampleRecord {
            sample_id: "s1".into(),
            image_ref: "frames/s1.png".into(),
            surgery_type: "cholecystectomy".into(),
            dataset_id: "fixture".into(),
            image_extent: Some(ImageExtent {
                width: 640.0,
                height: 480.0,
            }),
            labels: labels.into_iter().collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn inverted_box_is_flagged() {
        let r = record(vec![(
            TaskKind::InstrumentLocalizationBox,
            Label::Boxes(vec![BoundingBox::new(300.0, 10.0, 100.0, 50.0)]),
        )]);
        let report = validate_record(&r);
        assert!(report.has_rule("box ordering"));
        assert_eq!(
            report.violations[0].path,
            "labels.instrument_localization_box[0]"
        );
    }

    #[test]
    fn well_formed_record_is_ok() {
        let r = record(vec![
            (TaskKind::PhaseRecognition, Label::Class("Preparation".into())),
            (
                TaskKind::InstrumentLocalizationBox,
                Label::Boxes(vec![BoundingBox::new(1.0, 2.0, 30.0, 40.0)]),
            ),
        ]);
        assert!(validate_record(&r).is_ok());
    }

    #[test]
    fn extent_and_emptiness() {
        let mut r = record(vec![(
            TaskKind::TissueLocalization,
            Label::Boxes(vec![BoundingBox::new(1.0, 2.0, 700.0, 40.0)]),
        )]);
        r.surgery_type = " ".into();
        let report = validate_record(&r);
        assert!(report.has_rule("box within extent"));
        assert!(report.has_rule("non-empty surgery type"));
        let empty = record(vec![]);
        assert!(validate_record(&empty).has_rule("at least one label"));
    }

    #[test]
    fn shape_mismatch() {
        let r = record(vec![(TaskKind::CvsAssessment, Label::Class("yes".into()))]);
        assert!(validate_record(&r).has_rule("label shape"));
    }

    #[test]
    fn triplet_verb_normalized_through_lexicon() {
        // Lexicon oracle: the fixture maps `retracting` to `retract`, which is
        // in the fixture verb vocabulary; `retracting` itself is not.
        let vocab = TripletVocab {
            instruments: vec!["grasper".into()],
            verbs: vec!["retract".into()],
            targets: vec!["gallbladder".into()],
        };
        let lexicon = Lexicon::parse("map\tretracting\tretract\tinflection\n", "fixture").unwrap();
        let validator = Validator::with_vocab(vocab, Some(lexicon));
        let r = record(vec![(
            TaskKind::TripletRecognition,
            Label::Triplet(Triplet::new("grasper", "retracting", "gallbladder")),
        )]);
        let report = validator.validate(&r);
        assert!(report.is_ok(), "{report:?}");
        assert_eq!(
            report.normalized,
            vec![Normalization {
                path: "labels.triplet_recognition.verb".into(),
                from: "retracting".into(),
                to: "retract".into(),
            }]
        );
        let bad = record(vec![(
            TaskKind::TripletRecognition,
            Label::Triplet(Triplet::new("grasper", "juggle", "gallbladder")),
        )]);
        assert!(validator.validate(&bad).has_rule("vocabulary membership"));
    }

    #[test]
    fn duplicate_ids_flagged() {
        let a = record(vec![(TaskKind::PhaseRecognition, Label::Class("x".into()))]);
        let out = validate_corpus([&a, &a], &Validator::default());
        assert!(out[0].1.is_ok());
        assert!(out[1].1.has_rule("unique sample id"));
    }
}
