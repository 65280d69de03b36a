//! JSON Lines corpus files.
//!
//! The first line is a metadata record; every following line is one record.
//! Blank lines are ignored. Malformed record lines are reported with their
//! 1-based line number and skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Conversation, SampleRecord};
use crate::error::{Error, Result};

pub const SCHEMA_MAJOR: u32 = 1;
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Sample,
    Conversation,
    Prediction,
}

impl RecordKind {
    fn as_str(self) -> &'static str {
        match self {
            RecordKind::Sample => "sample",
            RecordKind::Conversation => "conversation",
            RecordKind::Prediction => "prediction",
        }
    }
}

/// First line of every corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub schema_version: String,
    pub dataset_id: String,
    pub created_at: String,
    #[serde(default = "default_kind")]
    pub record_kind: RecordKind,
}

fn default_kind() -> RecordKind {
    RecordKind::Sample
}

impl CorpusHeader {
    pub fn new(dataset_id: impl Into<String>, created_at: impl Into<String>, kind: RecordKind) -> Self {
        CorpusHeader {
            schema_version: SCHEMA_VERSION.to_string(),
            dataset_id: dataset_id.into(),
            created_at: created_at.into(),
            record_kind: kind,
        }
    }

    fn check_version(&self) -> Result<()> {
        let major = self
            .schema_version
            .split('.')
            .next()
            .and_then(|m| m.trim().parse::<u32>().ok());
        match major {
            Some(SCHEMA_MAJOR) => Ok(()),
            _ => Err(Error::SchemaVersion {
                found: self.schema_version.clone(),
                supported: SCHEMA_MAJOR,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub message: String,
}

/// Records read from a corpus file plus per-line diagnostics.
#[derive(Debug, Clone)]
pub struct CorpusRead<T> {
    pub header: Option<CorpusHeader>,
    pub records: Vec<T>,
    pub diagnostics: Vec<LineDiagnostic>,
}

pub fn read_corpus(path: &Path) -> Result<CorpusRead<SampleRecord>> {
    read_jsonl(path, RecordKind::Sample)
}

pub fn read_conversations(path: &Path) -> Result<CorpusRead<Conversation>> {
    read_jsonl(path, RecordKind::Conversation)
}

/// Reads a header-prefixed JSON Lines file. A zero-length file yields an
/// empty corpus without a header.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, expected: RecordKind) -> Result<CorpusRead<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut header: Option<CorpusHeader> = None;
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let h: CorpusHeader = serde_json::from_str(&line).map_err(|e| Error::Format {
                what: path.display().to_string(),
                line: lineno,
                message: format!("bad metadata line: {e}"),
            })?;
            h.check_version()?;
            if h.record_kind != expected {
                return Err(Error::RecordKind {
                    path: path.to_path_buf(),
                    found: h.record_kind.as_str().into(),
                    expected: expected.as_str().into(),
                });
            }
            header = Some(h);
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(r) => records.push(r),
            Err(e) => diagnostics.push(LineDiagnostic {
                line: lineno,
                message: e.to_string(),
            }),
        }
    }
    Ok(CorpusRead {
        header,
        records,
        diagnostics,
    })
}

pub fn write_corpus(records: &[SampleRecord], header: &CorpusHeader, path: &Path) -> Result<usize> {
    write_jsonl(records, header, path)
}

pub fn write_conversations(
    records: &[Conversation],
    header: &CorpusHeader,
    path: &Path,
) -> Result<usize> {
    write_jsonl(records, header, path)
}

/// Writes the header line followed by one JSON object per record.
pub fn write_jsonl<T: Serialize>(records: &[T], header: &CorpusHeader, path: &Path) -> Result<usize> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n").map_err(io)?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(records.len())
}
