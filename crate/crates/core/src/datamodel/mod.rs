//! Shared record schemas: the task hierarchy, label union, corpus records,
//! conversations and prediction records.

mod corpus;
mod validate;
mod vocab;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use corpus::{
    read_conversations, read_corpus, read_jsonl, write_conversations, write_corpus, write_jsonl,
    CorpusHeader, CorpusRead, LineDiagnostic, RecordKind, SCHEMA_MAJOR, SCHEMA_VERSION,
};
pub use validate::{
    validate_corpus, validate_record, Normalization, ValidationReport, Validator, Violation,
};
pub use vocab::{TaskVocabularies, TripletVocab};

/// Level of the task hierarchy a task belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Perception,
    Temporal,
    Reasoning,
}

/// The ten annotation tasks. Declaration order is hierarchy order, so the
/// derived `Ord` sorts perception tasks before temporal before reasoning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    InstrumentRecognition,
    InstrumentLocalizationBox,
    InstrumentLocalizationGrid,
    TissueRecognition,
    TissueLocalization,
    PhaseRecognition,
    StepRecognition,
    ActionRecognition,
    TripletRecognition,
    CvsAssessment,
}

/// Which `Label` variant a task carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelShape {
    Class,
    Boxes,
    Grid,
    Triplet,
    Cvs,
}

impl TaskKind {
    pub const ALL: [TaskKind; 10] = [
        TaskKind::InstrumentRecognition,
        TaskKind::InstrumentLocalizationBox,
        TaskKind::InstrumentLocalizationGrid,
        TaskKind::TissueRecognition,
        TaskKind::TissueLocalization,
        TaskKind::PhaseRecognition,
        TaskKind::StepRecognition,
        TaskKind::ActionRecognition,
        TaskKind::TripletRecognition,
        TaskKind::CvsAssessment,
    ];

    pub fn tier(self) -> Tier {
        use TaskKind::*;
        match self {
            InstrumentRecognition
            | InstrumentLocalizationBox
            | InstrumentLocalizationGrid
            | TissueRecognition
            | TissueLocalization => Tier::Perception,
            PhaseRecognition | StepRecognition | ActionRecognition | TripletRecognition => {
                Tier::Temporal
            }
            CvsAssessment => Tier::Reasoning,
        }
    }

    pub fn label_shape(self) -> LabelShape {
        use TaskKind::*;
        match self {
            InstrumentRecognition | TissueRecognition | PhaseRecognition | StepRecognition
            | ActionRecognition => LabelShape::Class,
            InstrumentLocalizationBox | TissueLocalization => LabelShape::Boxes,
            InstrumentLocalizationGrid => LabelShape::Grid,
            TripletRecognition => LabelShape::Triplet,
            CvsAssessment => LabelShape::Cvs,
        }
    }

    /// snake_case identifier used in files and on the command line.
    pub fn as_str(self) -> &'static str {
        use TaskKind::*;
        match self {
            InstrumentRecognition => "instrument_recognition",
            InstrumentLocalizationBox => "instrument_localization_box",
            InstrumentLocalizationGrid => "instrument_localization_grid",
            TissueRecognition => "tissue_recognition",
            TissueLocalization => "tissue_localization",
            PhaseRecognition => "phase_recognition",
            StepRecognition => "step_recognition",
            ActionRecognition => "action_recognition",
            TripletRecognition => "triplet_recognition",
            CvsAssessment => "cvs_assessment",
        }
    }

    /// Short placeholder name used in sentence templates, e.g. `{phase}`.
    pub fn slot(self) -> &'static str {
        use TaskKind::*;
        match self {
            InstrumentRecognition => "instrument",
            InstrumentLocalizationBox => "instrument_box",
            InstrumentLocalizationGrid => "instrument_position",
            TissueRecognition => "tissue",
            TissueLocalization => "tissue_box",
            PhaseRecognition => "phase",
            StepRecognition => "step",
            ActionRecognition => "action",
            TripletRecognition => "triplet",
            CvsAssessment => "cvs",
        }
    }

    pub fn from_slot(slot: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|t| t.slot() == slot)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == key || t.slot() == key)
            .ok_or_else(|| format!("unknown task kind `{s}`"))
    }
}

/// Axis-aligned box in absolute pixels, origin top-left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BoundingBox {
            x1,
            y1,
            x2,
            y2,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn is_ordered(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }

    /// `[x1, y1, x2, y2]`
    pub fn coords_text(&self) -> String {
        format!("[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Instrument-verb-target interaction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub instrument: String,
    pub verb: String,
    pub target: String,
}

impl Triplet {
    pub fn new(
        instrument: impl Into<String>,
        verb: impl Into<String>,
        target: impl Into<String>,
    ) -> Self {
        Triplet {
            instrument: instrument.into(),
            verb: verb.into(),
            target: target.into(),
        }
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}, {}", self.instrument, self.verb, self.target)
    }
}

/// Critical-view-of-safety criteria: cystic plate exposure, lower-third
/// clearance, two-structure identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CvsVector {
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
}

impl CvsVector {
    pub fn new(c1: bool, c2: bool, c3: bool) -> Self {
        CvsVector { c1, c2, c3 }
    }

    /// Overall CVS flag: all three criteria met.
    pub fn achieved(&self) -> bool {
        self.c1 && self.c2 && self.c3
    }

    pub fn as_array(&self) -> [bool; 3] {
        [self.c1, self.c2, self.c3]
    }

    pub fn from_array(v: [bool; 3]) -> Self {
        CvsVector::new(v[0], v[1], v[2])
    }
}

impl fmt::Display for CvsVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let yn = |b: bool| if b { "yes" } else { "no" };
        write!(
            f,
            "Criterion 1: {}. Criterion 2: {}. Criterion 3: {}.",
            yn(self.c1),
            yn(self.c2),
            yn(self.c3)
        )
    }
}

/// Coarse instrument position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridCell {
    Left,
    Right,
    Top,
    Bottom,
    Center,
}

impl GridCell {
    pub const ALL: [GridCell; 5] = [
        GridCell::Left,
        GridCell::Right,
        GridCell::Top,
        GridCell::Bottom,
        GridCell::Center,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GridCell::Left => "left",
            GridCell::Right => "right",
            GridCell::Top => "top",
            GridCell::Bottom => "bottom",
            GridCell::Center => "center",
        }
    }
}

impl FromStr for GridCell {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        let key = if key == "centre" { "center".to_string() } else { key };
        GridCell::ALL
            .into_iter()
            .find(|g| g.as_str() == key)
            .ok_or_else(|| format!("unknown grid position `{s}`"))
    }
}

/// Annotation attached to one task of a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Label {
    Class(String),
    Boxes(Vec<BoundingBox>),
    Grid(GridCell),
    Triplet(Triplet),
    Cvs(CvsVector),
}

impl Label {
    pub fn shape(&self) -> LabelShape {
        match self {
            Label::Class(_) => LabelShape::Class,
            Label::Boxes(_) => LabelShape::Boxes,
            Label::Grid(_) => LabelShape::Grid,
            Label::Triplet(_) => LabelShape::Triplet,
            Label::Cvs(_) => LabelShape::Cvs,
        }
    }

    /// Canonical textual rendering. Parsing this text with the matching
    /// response parser reproduces the label.
    pub fn render(&self) -> String {
        match self {
            Label::Class(c) => c.clone(),
            Label::Boxes(boxes) => boxes
                .iter()
                .map(|b| match &b.label {
                    Some(l) => format!("{l} {}", b.coords_text()),
                    None => b.coords_text(),
                })
                .collect::<Vec<_>>()
                .join("; "),
            Label::Grid(g) => g.as_str().to_string(),
            Label::Triplet(t) => t.to_string(),
            Label::Cvs(c) => c.to_string(),
        }
    }

    /// Ground-truth keywords an open-vocabulary answer must contain.
    pub fn keywords(&self) -> Vec<String> {
        match self {
            Label::Boxes(boxes) => boxes.iter().map(BoundingBox::coords_text).collect(),
            other => vec![other.render()],
        }
    }

    pub fn as_class(&self) -> Option<&str> {
        match self {
            Label::Class(c) => Some(c),
            _ => None,
        }
    }
}

/// Width/height of the referenced image in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageExtent {
    pub width: f64,
    pub height: f64,
}

/// One annotated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub image_ref: String,
    pub surgery_type: String,
    pub dataset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_extent: Option<ImageExtent>,
    pub labels: BTreeMap<TaskKind, Label>,
}

/// Evaluation / prompting protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Ov,
    Mcq,
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ov" | "open" | "open_vocabulary" => Ok(Protocol::Ov),
            "mcq" => Ok(Protocol::Mcq),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Ov => "ov",
            Protocol::Mcq => "mcq",
        })
    }
}

/// One prompt/answer exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub prompt: String,
    pub answer: String,
    pub keywords: Vec<String>,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    /// Structured ground truth, used by the scorer.
    pub target: Label,
}

impl Turn {
    /// Index of the option equal to the answer (normalized), if any.
    pub fn correct_option(&self) -> Option<usize> {
        let answer = crate::util::norm_key(&self.answer);
        self.options
            .as_ref()?
            .iter()
            .position(|o| crate::util::norm_key(o) == answer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    pub sample_id: String,
    pub protocol: Protocol,
    pub turns: Vec<Turn>,
}

impl Conversation {
    /// The single task kind of the conversation, or `None` when it mixes kinds.
    pub fn task_kind(&self) -> Option<TaskKind> {
        let first = self.turns.first()?.task;
        self.turns.iter().all(|t| t.task == first).then_some(first)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Parsed,
    ParseFailed,
    Refused,
    TransportError,
}

/// Raw model response bound to a conversation turn, plus the parsed answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub conversation_id: String,
    pub turn_index: usize,
    pub response: String,
    pub status: ParseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<Label>,
}

impl PredictionRecord {
    pub fn raw(conversation_id: impl Into<String>, turn_index: usize, response: impl Into<String>) -> Self {
        PredictionRecord {
            conversation_id: conversation_id.into(),
            turn_index,
            response: response.into(),
            status: ParseStatus::ParseFailed,
            parsed: None,
        }
    }

    /// `Parsed` implies a parsed answer.
    pub fn is_consistent(&self) -> bool {
        self.status != ParseStatus::Parsed || self.parsed.is_some()
    }
}
