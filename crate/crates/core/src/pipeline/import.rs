//! Adapters from public annotation formats to sample records.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::datamodel::{CvsVector, Label, SampleRecord, TaskKind, TaskVocabularies};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImportFormat {
    /// Per-video phase file (`Frame<TAB>Phase`), optional tool-presence file.
    Cholec80,
    /// Metadata CSV with `vid`, `frame`, `C1`, `C2`, `C3` columns.
    Endoscapes,
    /// Per-video `action_discrete.txt` (`frame,action_id`).
    SarRarp,
}

impl std::str::FromStr for ImportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "cholec80" => Ok(ImportFormat::Cholec80),
            "endoscapes" | "endoscapes2023" | "endoscape2023_cvs" => Ok(ImportFormat::Endoscapes),
            "sar_rarp" | "sar_rarp50" => Ok(ImportFormat::SarRarp),
            other => Err(format!("unknown import format `{other}`")),
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Format {
        what: path.display().to_string(),
        line,
        message: e.to_string(),
    }
}

fn record(sample_id: String, image_ref: String, surgery: &str, dataset: &str) -> SampleRecord {
    SampleRecord {
        sample_id,
        image_ref,
        surgery_type: surgery.to_string(),
        dataset_id: dataset.to_string(),
        image_extent: None,
        labels: BTreeMap::new(),
    }
}

/// `SpecimenBag` -> `specimen bag`.
fn split_camel(name: &str) -> String {
    let mut out = String::new();
    for (i, c) in name.chars().enumerate() {
        if c.is_uppercase() && i > 0 {
            out.push(' ');
        }
        out.extend(c.to_lowercase());
    }
    out
}

/// Cholec80 phase annotations, keeping every `stride`-th frame. Frames with
/// exactly one tool present in the tool file also get an instrument label.
/// Phase names are kept raw; the refine stage canonicalizes them.
pub fn import_cholec80(
    phase_path: &Path,
    tool_path: Option<&Path>,
    video: &str,
    stride: usize,
) -> Result<Vec<SampleRecord>> {
    let stride = stride.max(1);
    let mut tools: BTreeMap<u64, String> = BTreeMap::new();
    if let Some(tp) = tool_path {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .from_path(tp)
            .map_err(|e| csv_err(tp, e))?;
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_err(tp, e))?
            .iter()
            .skip(1)
            .map(split_camel)
            .collect();
        for row in rdr.records() {
            let row = row.map_err(|e| csv_err(tp, e))?;
            let frame: u64 = row[0].trim().parse().map_err(|_| Error::Format {
                what: tp.display().to_string(),
                line: row.position().map_or(0, |p| p.line() as usize),
                message: format!("bad frame index `{}`", &row[0]),
            })?;
            let present: Vec<&String> = row
                .iter()
                .skip(1)
                .zip(&names)
                .filter(|(v, _)| v.trim() == "1")
                .map(|(_, n)| n)
                .collect();
            if let [only] = present.as_slice() {
                tools.insert(frame, (*only).clone());
            }
        }
    }
    #[derive(Deserialize)]
    struct Row {
        #[serde(rename = "Frame")]
        frame: u64,
        #[serde(rename = "Phase")]
        phase: String,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_path(phase_path)
        .map_err(|e| csv_err(phase_path, e))?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| csv_err(phase_path, e))?;
        if row.frame % stride as u64 != 0 {
            continue;
        }
        let mut r = record(
            format!("{video}_{:06}", row.frame),
            format!("{video}/{:06}.png", row.frame),
            "cholecystectomy",
            "cholec80",
        );
        r.labels
            .insert(TaskKind::PhaseRecognition, Label::Class(row.phase.trim().to_string()));
        if let Some(tool) = tools.get(&row.frame) {
            r.labels
                .insert(TaskKind::InstrumentRecognition, Label::Class(tool.clone()));
        }
        out.push(r);
    }
    Ok(out)
}

/// Endoscapes2023 CVS metadata. Criterion values are annotator averages;
/// a criterion counts as achieved at 0.5 or above.
pub fn import_endoscapes(path: &Path) -> Result<Vec<SampleRecord>> {
    #[derive(Deserialize)]
    struct Row {
        vid: String,
        frame: u64,
        #[serde(rename = "C1")]
        c1: f64,
        #[serde(rename = "C2")]
        c2: f64,
        #[serde(rename = "C3")]
        c3: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let mut r = record(
            format!("{}_{}", row.vid, row.frame),
            format!("{}_{}.jpg", row.vid, row.frame),
            "cholecystectomy",
            "endoscape2023_cvs",
        );
        r.labels.insert(
            TaskKind::CvsAssessment,
            Label::Cvs(CvsVector::new(row.c1 >= 0.5, row.c2 >= 0.5, row.c3 >= 0.5)),
        );
        out.push(r);
    }
    Ok(out)
}

/// SAR-RARP50 discrete action labels. Action ids index the shipped action
/// vocabulary (0 is the background class).
pub fn import_sar_rarp(path: &Path, video: &str, stride: usize) -> Result<Vec<SampleRecord>> {
    let stride = stride.max(1);
    let vocab = TaskVocabularies::builtin();
    let actions = vocab.for_task(TaskKind::ActionRecognition);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<(u64, usize)>() {
        let (frame, action) = row.map_err(|e| csv_err(path, e))?;
        if frame % stride as u64 != 0 {
            continue;
        }
        let name = actions.get(action).ok_or_else(|| Error::Format {
            what: path.display().to_string(),
            line: 0,
            message: format!("action id {action} at frame {frame} is not in the action vocabulary"),
        })?;
        let mut r = record(
            format!("{video}_{frame:06}"),
            format!("{video}/{frame:06}.png"),
            "radical prostatectomy",
            "sar_rarp",
        );
        r.labels
            .insert(TaskKind::ActionRecognition, Label::Class(name.clone()));
        out.push(r);
    }
    Ok(out)
}
