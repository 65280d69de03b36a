//! Evaluation metrics. Every reported value is on the 0-100 scale.

mod classification;
mod cvs;
mod detection;
mod task;
mod text;
mod triplet;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::BoundingBox;
use crate::error::{Error, Result};

pub use classification::{classification_report, ConfusionCounts};
pub use cvs::{average_accuracy, cvs_metrics};
pub use detection::{detection_map, DetectionSet, ImageDetections, ScoredBox};
pub use text::{text_overlap, text_overlap_corpus, tokenize, MeteorConfig};
pub use task::task_report;
pub use triplet::{average_precision, triplet_metrics};

/// Fixed metric key names used in report files.
pub mod keys {
    pub const ACCURACY: &str = "accuracy";
    pub const RECALL: &str = "recall";
    pub const PRECISION: &str = "precision";
    pub const JACCARD: &str = "jaccard";
    pub const MIOU: &str = "miou";
    pub const MAP50: &str = "map50";
    pub const MAP75: &str = "map75";
    pub const COCO_AP: &str = "coco_ap";
    pub const BLEU4: &str = "bleu4";
    pub const METEOR: &str = "meteor";
    pub const ROUGE1: &str = "rouge1";
    pub const INSTRUMENT_ACCURACY: &str = "instrument_accuracy";
    pub const VERB_ACCURACY: &str = "verb_accuracy";
    pub const TARGET_ACCURACY: &str = "target_accuracy";
    pub const TRIPLET_ACCURACY: &str = "triplet_accuracy";
    pub const INSTRUMENT_MAP: &str = "instrument_map";
    pub const VERB_MAP: &str = "verb_map";
    pub const TARGET_MAP: &str = "target_map";
    pub const TRIPLET_MAP: &str = "triplet_map";
    pub const C1_ACCURACY: &str = "c1_accuracy";
    pub const C2_ACCURACY: &str = "c2_accuracy";
    pub const C3_ACCURACY: &str = "c3_accuracy";
    pub const AVERAGE_ACCURACY: &str = "average_accuracy";
    pub const C1_BALANCED_ACCURACY: &str = "c1_balanced_accuracy";
    pub const C2_BALANCED_ACCURACY: &str = "c2_balanced_accuracy";
    pub const C3_BALANCED_ACCURACY: &str = "c3_balanced_accuracy";
    pub const AVERAGE_BALANCED_ACCURACY: &str = "average_balanced_accuracy";
    pub const CVS_ACCURACY: &str = "cvs_accuracy";
}

/// Named metric values plus sample and failure counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, f64>,
    pub samples: usize,
    #[serde(default)]
    pub parse_failures: usize,
    #[serde(default)]
    pub refusals: usize,
    #[serde(default)]
    pub transport_errors: usize,
    /// Notes on degenerate cases, e.g. a balanced accuracy that fell back to
    /// plain accuracy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl MetricReport {
    pub fn new(samples: usize) -> Self {
        MetricReport {
            samples,
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    pub fn in_range(&self) -> bool {
        self.metrics
            .values()
            .all(|v| v.is_finite() && (0.0..=100.0).contains(v))
    }

    pub fn merge(&mut self, other: MetricReport) {
        self.metrics.extend(other.metrics);
        self.flags.extend(other.flags);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let json = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub(crate) fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::LengthMismatch { left, right })
    }
}

pub(crate) fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Intersection over union with area `(x2 - x1) * (y2 - y1)`. Symmetric;
/// zero for disjoint or degenerate boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}
