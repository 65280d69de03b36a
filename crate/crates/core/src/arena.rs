//! Arena score: the sum of six per-dataset primary metrics, and the
//! leaderboard built from it.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datamodel::Protocol;
use crate::error::{Error, Result};
use crate::metrics::{keys, MetricReport};
use crate::util::compensated_sum;

/// Dataset id and the report key of its primary metric, in vector order.
pub const ARENA_FIELDS: [(&str, &str); 6] = [
    ("cholec80", keys::ACCURACY),
    ("sar_rarp", keys::ACCURACY),
    ("cholect50", keys::TRIPLET_ACCURACY),
    ("endovis2017", keys::MIOU),
    ("endovis2018_vqa", keys::ACCURACY),
    ("endoscape2023_cvs", keys::AVERAGE_ACCURACY),
];

/// Upper bound of the arena score.
pub const ARENA_MAX: f64 = 600.0;

/// The six primary metrics, each on the 0-100 scale.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArenaVector {
    pub cholec80: f64,
    pub sar_rarp: f64,
    pub cholect50: f64,
    pub endovis2017: f64,
    pub endovis2018_vqa: f64,
    pub endoscape2023_cvs: f64,
}

impl ArenaVector {
    /// Values in [`ARENA_FIELDS`] order.
    pub fn new(values: [f64; 6]) -> Result<Self> {
        let [a, b, c, d, e, f] = values;
        let v = ArenaVector {
            cholec80: a,
            sar_rarp: b,
            cholect50: c,
            endovis2017: d,
            endovis2018_vqa: e,
            endoscape2023_cvs: f,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.cholec80,
            self.sar_rarp,
            self.cholect50,
            self.endovis2017,
            self.endovis2018_vqa,
            self.endoscape2023_cvs,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for ((dataset, _), value) in ARENA_FIELDS.iter().zip(self.as_array()) {
            if !value.is_finite() || !(0.0..=100.0).contains(&value) {
                return Err(Error::OutOfRange {
                    field: (*dataset).to_string(),
                    value,
                });
            }
        }
        Ok(())
    }

    /// Picks each dataset's primary metric out of its report.
    pub fn from_reports(reports: &BTreeMap<String, MetricReport>) -> Result<Self> {
        let mut values = [0.0; 6];
        for (slot, (dataset, key)) in values.iter_mut().zip(ARENA_FIELDS) {
            let report = reports
                .get(dataset)
                .ok_or_else(|| Error::Suite(format!("no report for dataset `{dataset}`")))?;
            *slot = report.get(key).ok_or_else(|| {
                Error::Suite(format!("report for `{dataset}` lacks metric `{key}`"))
            })?;
        }
        Self::new(values)
    }
}

/// Sum of the six components, in [0, 600].
pub fn arena_score(v: &ArenaVector) -> Result<f64> {
    v.validate()?;
    Ok(compensated_sum(v.as_array()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub model: String,
    #[serde(default)]
    pub institute: String,
    pub protocol: Protocol,
    pub vector: ArenaVector,
    pub score: f64,
}

impl LeaderboardEntry {
    pub fn new(
        model: impl Into<String>,
        institute: impl Into<String>,
        protocol: Protocol,
        vector: ArenaVector,
    ) -> Result<Self> {
        let score = arena_score(&vector)?;
        Ok(LeaderboardEntry {
            model: model.into(),
            institute: institute.into(),
            protocol,
            vector,
            score,
        })
    }
}

/// Entries sorted by descending score, ties by model name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub entries: Vec<LeaderboardEntry>,
}

fn rank_order(a: &LeaderboardEntry, b: &LeaderboardEntry) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.model.cmp(&b.model))
        .then_with(|| a.protocol.cmp(&b.protocol))
}

pub fn leaderboard(mut entries: Vec<LeaderboardEntry>) -> Result<Leaderboard> {
    if entries.is_empty() {
        return Err(Error::Suite("leaderboard needs at least one entry".into()));
    }
    entries.sort_by(rank_order);
    Ok(Leaderboard { entries })
}

const SHORT_NAMES: [&str; 6] = ["Cholec80", "SAR-RARP", "CholecT50", "EV2017", "EV18-VQA", "CVS"];

impl Leaderboard {
    /// Fixed-width table, two decimals.
    pub fn render_text(&self) -> String {
        let model_w = self
            .entries
            .iter()
            .map(|e| e.model.chars().count())
            .chain([5])
            .max()
            .unwrap_or(5);
        let inst_w = self
            .entries
            .iter()
            .map(|e| e.institute.chars().count())
            .chain([9])
            .max()
            .unwrap_or(9);
        let mut out = String::new();
        let _ = write!(out, "{:>4}  {:<model_w$}  {:<inst_w$}  {:<5}", "Rank", "Model", "Institute", "Eval");
        for name in SHORT_NAMES {
            let _ = write!(out, "  {name:>9}");
        }
        let _ = writeln!(out, "  {:>8}", "Arena");
        let width = out.trim_end().chars().count();
        let _ = writeln!(out, "{}", "-".repeat(width));
        for (rank, e) in self.entries.iter().enumerate() {
            let _ = write!(
                out,
                "{:>4}  {:<model_w$}  {:<inst_w$}  {:<5}",
                rank + 1,
                e.model,
                e.institute,
                e.protocol.to_string().to_uppercase()
            );
            for v in e.vector.as_array() {
                let _ = write!(out, "  {v:>9.2}");
            }
            let _ = writeln!(out, "  {:>8.2}", e.score);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Writes `<stem>.txt` and `<stem>.json`. A trailing `.txt` or `.json`
    /// on `out` is dropped first.
    pub fn write(&self, out: &Path) -> Result<(PathBuf, PathBuf)> {
        let stem = match out.extension().and_then(|e| e.to_str()) {
            Some("txt" | "json") => out.with_extension(""),
            _ => out.to_path_buf(),
        };
        if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let txt = stem.with_extension("txt");
        let json = stem.with_extension("json");
        std::fs::write(&txt, self.render_text()).map_err(|e| Error::io(&txt, e))?;
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        Ok((txt, json))
    }
}

/// Reads the arena datasets' reports from `dir`, accepting either
/// `<dir>/<dataset>/report.json` or `<dir>/<dataset>.json`.
pub fn read_reports(dir: &Path) -> Result<BTreeMap<String, MetricReport>> {
    let mut out = BTreeMap::new();
    for (dataset, _) in ARENA_FIELDS {
        let nested = dir.join(dataset).join("report.json");
        let flat = dir.join(format!("{dataset}.json"));
        let path = if nested.is_file() { nested } else { flat };
        if path.is_file() {
            out.insert(dataset.to_string(), MetricReport::read(&path)?);
        }
    }
    Ok(out)
}
