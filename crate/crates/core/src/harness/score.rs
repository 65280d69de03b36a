use serde::{Deserialize, Serialize};

use super::suite::DatasetDescriptor;
use crate::datamodel::{
    BoundingBox, GridCell, Label, LabelShape, ParseStatus, PredictionRecord, Protocol, TaskKind, Turn,
};
use crate::error::Result;
use crate::metrics::{classification_report, task_report, text_overlap_corpus, MeteorConfig, MetricReport};
use crate::parser::{match_keyword, parse_choice, parse_label, KeywordVerdict, ParseConfig, Parsed};

/// How often each protocol's scorer ran.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParserCalls {
    pub match_keyword: usize,
    pub parse_choice: usize,
}

/// One scored turn, as written to `parsed.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTurn {
    pub conversation_id: String,
    pub turn_index: usize,
    pub task: TaskKind,
    pub status: ParseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<Label>,
    pub target: Label,
    pub correct: bool,
    /// Text compared against the reference answer by the text metrics.
    pub candidate: String,
    pub reference: String,
}

impl ScoredTurn {
    pub fn prediction(&self, response: &str) -> PredictionRecord {
        PredictionRecord {
            conversation_id: self.conversation_id.clone(),
            turn_index: self.turn_index,
            response: response.to_string(),
            status: self.status,
            parsed: self.parsed.clone(),
        }
    }
}

fn from_parse(p: Parsed<Label>) -> (ParseStatus, Option<Label>) {
    (p.status(), p.into_value())
}

/// Scores one raw response. Open-vocabulary turns are judged by keyword
/// containment; a miss is parsed to recover the wrong answer for the
/// per-class metrics. Box tasks skip the keyword rule and are parsed
/// directly. Multiple-choice turns go through option selection only.
pub fn score_turn(
    turn: &Turn,
    raw: &PredictionRecord,
    protocol: Protocol,
    config: &ParseConfig,
    calls: &mut ParserCalls,
) -> ScoredTurn {
    let mut out = ScoredTurn {
        conversation_id: raw.conversation_id.clone(),
        turn_index: raw.turn_index,
        task: turn.task,
        status: ParseStatus::ParseFailed,
        choice: None,
        parsed: None,
        target: turn.target.clone(),
        correct: false,
        candidate: raw.response.clone(),
        reference: turn.answer.clone(),
    };
    if matches!(raw.status, ParseStatus::TransportError | ParseStatus::Refused) {
        out.status = raw.status;
        if raw.status == ParseStatus::TransportError {
            out.candidate.clear();
        }
        return out;
    }
    let response = raw.response.as_str();
    let (status, parsed) = match protocol {
        Protocol::Ov if turn.task.label_shape() == LabelShape::Boxes => from_parse(parse_label(turn.task, response, config)),
        Protocol::Ov => {
            calls.match_keyword += 1;
            match match_keyword(response, &turn.keywords, config) {
                KeywordVerdict::Correct => (ParseStatus::Parsed, Some(turn.target.clone())),
                KeywordVerdict::Refused => (ParseStatus::Refused, None),
                KeywordVerdict::Incorrect => match parse_label(turn.task, response, config) {
                    Parsed::Value(l) if l != turn.target => (ParseStatus::Parsed, Some(l)),
                    Parsed::Refused => (ParseStatus::Refused, None),
                    _ => (ParseStatus::ParseFailed, None),
                },
            }
        }
        Protocol::Mcq => {
            calls.parse_choice += 1;
            let options = turn.options.as_deref().unwrap_or_default();
            match parse_choice(response, options, config) {
                Parsed::Value(i) => {
                    out.choice = Some(i);
                    out.candidate = options[i].clone();
                    if Some(i) == turn.correct_option() {
                        (ParseStatus::Parsed, Some(turn.target.clone()))
                    } else {
                        let label = parse_label(turn.task, &options[i], config)
                            .into_value()
                            .filter(|l| *l != turn.target)
                            .unwrap_or_else(|| Label::Class(options[i].clone()));
                        (ParseStatus::Parsed, Some(label))
                    }
                }
                Parsed::Refused => (ParseStatus::Refused, None),
                Parsed::ParseFailed => (ParseStatus::ParseFailed, None),
            }
        }
    };
    out.status = status;
    out.correct = parsed.as_ref() == Some(&turn.target);
    out.parsed = parsed;
    out
}

fn unlabeled(boxes: &[BoundingBox]) -> Vec<BoundingBox> {
    boxes
        .iter()
        .map(|b| BoundingBox {
            label: None,
            ..b.clone()
        })
        .collect()
}


/// Metrics for one dataset's scored turns. Detection is class-agnostic and
/// every predicted box has confidence 1.
pub fn dataset_report(
    descriptor: &DatasetDescriptor,
    turns: &[ScoredTurn],
    config: &ParseConfig,
) -> Result<MetricReport> {
    let mut report = if descriptor.tasks.len() > 1 {
        let gt: Vec<String> = turns.iter().map(|t| t.target.render()).collect();
        let pred: Vec<Option<String>> = turns
            .iter()
            .map(|t| t.parsed.as_ref().filter(|p| p.shape() == t.target.shape()).map(Label::render))
            .collect();
        let classes: Vec<String> = descriptor
            .tasks
            .iter()
            .flat_map(|k| match k.label_shape() {
                LabelShape::Grid => GridCell::ALL.iter().map(|g| g.as_str().to_string()).collect(),
                _ => config.vocab.for_task(*k).to_vec(),
            })
            .collect();
        let mut r = classification_report(&gt, &pred, &classes)?;
        let pairs: Vec<(String, String)> = turns
            .iter()
            .map(|t| (t.candidate.clone(), t.reference.clone()))
            .collect();
        if !pairs.is_empty() {
            r.merge(text_overlap_corpus(&pairs, &MeteorConfig::default())?);
        }
        r
    } else {
        let task = descriptor.tasks[0];
        let strip = |l: &Label| match l {
            Label::Boxes(b) => Label::Boxes(unlabeled(b)),
            other => other.clone(),
        };
        let gt: Vec<Label> = turns.iter().map(|t| strip(&t.target)).collect();
        let pred: Vec<Option<Label>> = turns.iter().map(|t| t.parsed.as_ref().map(strip)).collect();
        task_report(task, &gt, &pred, &config.vocab)?
    };
    report.samples = turns.len();
    let count = |s: ParseStatus| turns.iter().filter(|t| t.status == s).count();
    report.parse_failures = count(ParseStatus::ParseFailed);
    report.refusals = count(ParseStatus::Refused);
    report.transport_errors = count(ParseStatus::TransportError);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::CvsVector;

    fn ov_turn(task: TaskKind, target: Label) -> Turn {
        Turn {
            prompt: "q".into(),
            answer: format!("It is {}.", target.render()),
            keywords: target.keywords(),
            task,
            options: None,
            target,
        }
    }

    fn raw(text: &str) -> PredictionRecord {
        PredictionRecord::raw("c", 0, text)
    }

    #[test]
    fn ov_keyword_then_parse() {
        let cfg = ParseConfig::default();
        let mut calls = ParserCalls::default();
        let t = ov_turn(TaskKind::PhaseRecognition, Label::Class("preparation".into()));
        let s = score_turn(&t, &raw("This is preparation."), Protocol::Ov, &cfg, &mut calls);
        assert!(s.correct);
        assert_eq!(s.status, ParseStatus::Parsed);
        let s = score_turn(&t, &raw("clipping and cutting"), Protocol::Ov, &cfg, &mut calls);
        assert!(!s.correct);
        assert_eq!(s.parsed, Some(Label::Class("Clipping and cutting".into())));
        let s = score_turn(&t, &raw("no idea"), Protocol::Ov, &cfg, &mut calls);
        assert_eq!(s.status, ParseStatus::ParseFailed);
        assert_eq!(calls, ParserCalls { match_keyword: 3, parse_choice: 0 });
    }

    #[test]
    fn mcq_uses_choice_only() {
        let cfg = ParseConfig::default();
        let mut calls = ParserCalls::default();
        let mut t = ov_turn(TaskKind::CvsAssessment, Label::Cvs(CvsVector::new(true, true, false)));
        let wrong = CvsVector::new(false, true, false);
        t.options = Some(vec![wrong.to_string(), t.target.render()]);
        t.answer = t.target.render();
        let s = score_turn(&t, &raw("B"), Protocol::Mcq, &cfg, &mut calls);
        assert!(s.correct);
        let s = score_turn(&t, &raw("A"), Protocol::Mcq, &cfg, &mut calls);
        assert_eq!(s.parsed, Some(Label::Cvs(wrong)));
        assert_eq!(calls.match_keyword, 0);
        assert_eq!(calls.parse_choice, 2);
    }

    #[test]
    fn transport_and_refusal_pass_through() {
        let cfg = ParseConfig::default();
        let mut calls = ParserCalls::default();
        let t = ov_turn(TaskKind::PhaseRecognition, Label::Class("preparation".into()));
        let mut r = raw("boom");
        r.status = ParseStatus::TransportError;
        assert_eq!(score_turn(&t, &r, Protocol::Ov, &cfg, &mut calls).status, ParseStatus::TransportError);
        let s = score_turn(&t, &raw("I cannot assist with that. preparation"), Protocol::Ov, &cfg, &mut calls);
        assert_eq!(s.status, ParseStatus::Refused);
        assert!(!s.correct);
    }

    #[test]
    fn box_dataset_is_class_agnostic() {
        let cfg = ParseConfig::default();
        let mut calls = ParserCalls::default();
        let gt = BoundingBox::new(10.0, 10.0, 50.0, 50.0).with_label("grasper");
        let t = ov_turn(TaskKind::InstrumentLocalizationBox, Label::Boxes(vec![gt]));
        let s = score_turn(&t, &raw("scissors [10, 10, 50, 50]"), Protocol::Ov, &cfg, &mut calls);
        assert_eq!(calls.match_keyword, 0);
        let d = DatasetDescriptor::standard("endovis2017", "x").unwrap();
        let r = dataset_report(&d, &[s], &cfg).unwrap();
        assert_eq!(r.get("miou"), Some(100.0));
    }
}
