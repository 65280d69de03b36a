use std::collections::BTreeMap;

use serde::Serialize;

use super::{check_lengths, keys, ratio, MetricReport};
use crate::error::Result;
use crate::util::{mean, norm_key};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Per-class true positives, false positives and false negatives.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConfusionCounts {
    pub per_class: BTreeMap<String, Counts>,
}

impl ConfusionCounts {
    /// `None` predictions are a reserved null class: a false negative for
    /// the true class and no false positive anywhere.
    pub fn tally(gt: &[String], pred: &[Option<String>]) -> Self {
        let mut per_class: BTreeMap<String, Counts> = BTreeMap::new();
        for (g, p) in gt.iter().zip(pred) {
            let g = norm_key(g);
            match p.as_deref().map(norm_key) {
                Some(p) if p == g => per_class.entry(g).or_default().tp += 1,
                Some(p) => {
                    per_class.entry(g).or_default().fn_ += 1;
                    per_class.entry(p).or_default().fp += 1;
                }
                None => per_class.entry(g).or_default().fn_ += 1,
            }
        }
        ConfusionCounts { per_class }
    }
}

/// Accuracy plus recall, precision and Jaccard macro-averaged over the
/// classes present in `gt`. Classes outside `class_set` that appear only as
/// predictions are counted but never averaged.
pub fn classification_report(
    gt: &[String],
    pred: &[Option<String>],
    class_set: &[String],
) -> Result<MetricReport> {
    check_lengths(gt.len(), pred.len())?;
    let counts = ConfusionCounts::tally(gt, pred);
    let present: std::collections::BTreeSet<String> = gt.iter().map(|g| norm_key(g)).collect();
    let mut report = MetricReport::new(gt.len());
    report.parse_failures = pred.iter().filter(|p| p.is_none()).count();
    let known: std::collections::BTreeSet<String> = class_set.iter().map(|c| norm_key(c)).collect();
    if !known.is_empty() {
        let outside = present.iter().filter(|c| !known.contains(*c)).count();
        if outside > 0 {
            report
                .flags
                .push(format!("{outside} ground-truth classes outside the class set"));
        }
    }
    let correct = counts.per_class.values().map(|c| c.tp).sum::<usize>();
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    let mut jaccard = Vec::new();
    for class in &present {
        let c = counts.per_class.get(class).copied().unwrap_or_default();
        recall.push(ratio(c.tp, c.tp + c.fn_));
        precision.push(ratio(c.tp, c.tp + c.fp));
        jaccard.push(ratio(c.tp, c.tp + c.fp + c.fn_));
    }
    report.set(keys::ACCURACY, 100.0 * ratio(correct, gt.len()));
    report.set(keys::RECALL, 100.0 * mean(recall));
    report.set(keys::PRECISION, 100.0 * mean(precision));
    report.set(keys::JACCARD, 100.0 * mean(jaccard));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn p(v: &[Option<&str>]) -> Vec<Option<String>> {
        v.iter().map(|x| x.map(str::to_string)).collect()
    }

    #[test]
    fn hand_enumerated_confusion() {
        // A: tp 1, fn 1, fp 0. B: tp 2, fn 0, fp 1.
        // recall (0.5 + 1) / 2, precision (1 + 2/3) / 2, jaccard (0.5 + 2/3) / 2
        let r = classification_report(
            &s(&["A", "A", "B", "B"]),
            &p(&[Some("A"), Some("B"), Some("B"), Some("B")]),
            &s(&["A", "B"]),
        )
        .unwrap();
        assert!((r.get("accuracy").unwrap() - 75.0).abs() < 1e-9);
        assert!((r.get("recall").unwrap() - 75.0).abs() < 1e-9);
        assert!((r.get("precision").unwrap() - 83.333_333_333).abs() < 1e-6);
        assert!((r.get("jaccard").unwrap() - 58.333_333_333).abs() < 1e-6);
    }

    #[test]
    fn perfect_and_failed() {
        let gt = s(&["x", "y", "x"]);
        let r = classification_report(&gt, &p(&[Some("x"), Some("y"), Some("x")]), &gt).unwrap();
        for k in ["accuracy", "recall", "precision", "jaccard"] {
            assert_eq!(r.get(k), Some(100.0));
        }
        let r = classification_report(&s(&["A"]), &[None], &s(&["A"])).unwrap();
        for k in ["accuracy", "recall", "precision", "jaccard"] {
            assert_eq!(r.get(k), Some(0.0));
        }
        assert_eq!(r.parse_failures, 1);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            classification_report(&s(&["A"]), &[], &[]),
            Err(Error::LengthMismatch { left: 1, right: 0 })
        ));
    }
}
