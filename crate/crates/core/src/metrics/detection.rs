use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{iou, keys, MetricReport};
use crate::datamodel::BoundingBox;
use crate::error::{Error, Result};
use crate::util::{mean, norm_key};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// Ground truth and predictions of one image. The box label is the class;
/// unlabeled boxes share one anonymous class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageDetections {
    pub gt: Vec<BoundingBox>,
    pub pred: Vec<ScoredBox>,
    /// The response for this image could not be parsed; it counts as one
    /// prediction with zero overlap in mIoU.
    #[serde(default)]
    pub failed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub images: Vec<ImageDetections>,
}

fn class_of(b: &BoundingBox) -> String {
    b.label.as_deref().map(norm_key).unwrap_or_default()
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Average precision of one class at one IoU threshold, 101-point
/// interpolated. `None` when the class has no ground truth.
fn class_ap(data: &DetectionSet, class: &str, threshold: f64) -> Option<f64> {
    let npos: usize = data
        .images
        .iter()
        .map(|im| im.gt.iter().filter(|g| class_of(g) == class).count())
        .sum();
    if npos == 0 {
        return None;
    }
    // (confidence, image, prediction) in descending confidence, stable.
    let mut preds: Vec<(f64, usize, usize)> = Vec::new();
    for (i, im) in data.images.iter().enumerate() {
        for (j, p) in im.pred.iter().enumerate() {
            if class_of(&p.bbox) == class {
                preds.push((p.confidence, i, j));
            }
        }
    }
    preds.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut matched: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut tp = 0usize;
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(preds.len());
    for (k, (_, i, j)) in preds.iter().enumerate() {
        let im = &data.images[*i];
        let pb = &im.pred[*j].bbox;
        let best = im
            .gt
            .iter()
            .enumerate()
            .filter(|(g, gb)| class_of(gb) == class && !matched.contains(&(*i, *g)))
            .map(|(g, gb)| (g, iou(pb, gb)))
            .filter(|(_, v)| *v >= threshold)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some((g, _)) = best {
            matched.insert((*i, g));
            tp += 1;
        }
        curve.push((tp as f64 / npos as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope, right to left
    for k in (0..curve.len().saturating_sub(1)).rev() {
        curve[k].1 = curve[k].1.max(curve[k + 1].1);
    }
    let points = (0..=100).map(|r| {
        let r = r as f64 / 100.0;
        curve
            .iter()
            .find(|(rec, _)| *rec >= r - 1e-12)
            .map_or(0.0, |(_, p)| *p)
    });
    Some(mean(points))
}

fn map_at(data: &DetectionSet, classes: &BTreeSet<String>, threshold: f64) -> f64 {
    mean(classes.iter().filter_map(|c| class_ap(data, c, threshold)))
}

/// mIoU, mAP@50, mAP@75 and COCO AP (mean over 0.50:0.05:0.95).
///
/// Matching is greedy by descending confidence; each ground-truth box is
/// matched at most once and a match needs IoU at or above the threshold.
/// mAP averages over classes with ground truth. mIoU averages, over all
/// predictions, the best IoU with a same-class ground-truth box.
pub fn detection_map(data: &DetectionSet) -> Result<MetricReport> {
    for im in &data.images {
        for p in &im.pred {
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(Error::OutOfRange {
                    field: "confidence".into(),
                    value: p.confidence,
                });
            }
        }
    }
    let classes: BTreeSet<String> = data
        .images
        .iter()
        .flat_map(|im| im.gt.iter().map(class_of))
        .collect();

    let mut ious = Vec::new();
    for im in &data.images {
        if im.failed {
            ious.push(0.0);
        }
        for p in &im.pred {
            let c = class_of(&p.bbox);
            let best = im
                .gt
                .iter()
                .filter(|g| class_of(g) == c)
                .map(|g| iou(&p.bbox, g))
                .fold(0.0, f64::max);
            ious.push(best);
        }
    }

    let per_threshold: BTreeMap<usize, f64> = coco_thresholds()
        .iter()
        .enumerate()
        .map(|(i, t)| (i, map_at(data, &classes, *t)))
        .collect();
    let mut report = MetricReport::new(data.images.len());
    report.parse_failures = data.images.iter().filter(|im| im.failed).count();
    report.set(keys::MIOU, 100.0 * mean(ious));
    report.set(keys::MAP50, 100.0 * per_threshold[&0]);
    report.set(keys::MAP75, 100.0 * per_threshold[&5]);
    report.set(keys::COCO_AP, 100.0 * mean(per_threshold.values().copied()));
    Ok(report)
}
