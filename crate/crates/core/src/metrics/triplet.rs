use std::collections::BTreeSet;

use super::{check_lengths, keys, ratio, MetricReport};
use crate::datamodel::Triplet;
use crate::error::Result;
use crate::util::{compensated_sum, mean, norm_key};

/// Average precision of a scored retrieval, summed over distinct score
/// thresholds: `sum (R_k - R_{k-1}) * P_k`. Tied scores enter the ranking
/// together, so the result does not depend on input order. Zero when there
/// are no relevant items.
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> f64 {
    let npos = relevant.iter().filter(|r| **r).count();
    if npos == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let mut ap_terms = Vec::new();
    let (mut tp, mut seen, mut prev_recall) = (0usize, 0usize, 0.0);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            tp += usize::from(relevant[order[k]]);
            seen += 1;
            k += 1;
        }
        let recall = tp as f64 / npos as f64;
        let precision = tp as f64 / seen as f64;
        ap_terms.push((recall - prev_recall) * precision);
        prev_recall = recall;
    }
    compensated_sum(ap_terms)
}

/// Mean AP over the classes present in `gt`, each class ranked by a binary
/// score (1 for frames predicting it).
fn class_map(gt: &[String], pred: &[Option<String>]) -> f64 {
    let classes: BTreeSet<&String> = gt.iter().collect();
    mean(classes.into_iter().map(|c| {
        let scores: Vec<f64> = pred
            .iter()
            .map(|p| if p.as_ref() == Some(c) { 1.0 } else { 0.0 })
            .collect();
        let relevant: Vec<bool> = gt.iter().map(|g| g == c).collect();
        average_precision(&scores, &relevant)
    }))
}

/// Component and triplet accuracies and mAPs. `None` predictions are wrong
/// on every component.
pub fn triplet_metrics(gt: &[Triplet], pred: &[Option<Triplet>]) -> Result<MetricReport> {
    check_lengths(gt.len(), pred.len())?;
    let n = gt.len();
    let component = |t: &Triplet, idx: usize| {
        norm_key(match idx {
            0 => &t.instrument,
            1 => &t.verb,
            _ => &t.target,
        })
    };
    let full = |t: &Triplet| (0..3).map(|i| component(t, i)).collect::<Vec<_>>().join("|");
    let mut report = MetricReport::new(n);
    report.parse_failures = pred.iter().filter(|p| p.is_none()).count();
    let acc_keys = [keys::INSTRUMENT_ACCURACY, keys::VERB_ACCURACY, keys::TARGET_ACCURACY];
    let map_keys = [keys::INSTRUMENT_MAP, keys::VERB_MAP, keys::TARGET_MAP];
    for idx in 0..3 {
        let g: Vec<String> = gt.iter().map(|t| component(t, idx)).collect();
        let p: Vec<Option<String>> = pred.iter().map(|t| t.as_ref().map(|t| component(t, idx))).collect();
        let hits = g.iter().zip(&p).filter(|(g, p)| p.as_ref() == Some(*g)).count();
        report.set(acc_keys[idx], 100.0 * ratio(hits, n));
        report.set(map_keys[idx], 100.0 * class_map(&g, &p));
    }
    let g: Vec<String> = gt.iter().map(full).collect();
    let p: Vec<Option<String>> = pred.iter().map(|t| t.as_ref().map(full)).collect();
    let hits = g.iter().zip(&p).filter(|(g, p)| p.as_ref() == Some(*g)).count();
    report.set(keys::TRIPLET_ACCURACY, 100.0 * ratio(hits, n));
    report.set(keys::TRIPLET_MAP, 100.0 * class_map(&g, &p));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(i: &str, v: &str, x: &str) -> Triplet {
        Triplet::new(i, v, x)
    }

    #[test]
    fn perfect_predictions() {
        let gt = vec![t("grasper", "retract", "gallbladder"), t("hook", "dissect", "liver")];
        let pred: Vec<_> = gt.iter().cloned().map(Some).collect();
        let r = triplet_metrics(&gt, &pred).unwrap();
        for (k, v) in &r.metrics {
            assert!((v - 100.0).abs() < 1e-9, "{k}");
        }
    }

    #[test]
    fn one_component_error() {
        let r = triplet_metrics(
            &[t("grasper", "retract", "gallbladder")],
            &[Some(t("grasper", "grasp", "gallbladder"))],
        )
        .unwrap();
        assert_eq!(r.get("instrument_accuracy"), Some(100.0));
        assert_eq!(r.get("verb_accuracy"), Some(0.0));
        assert_eq!(r.get("target_accuracy"), Some(100.0));
        assert_eq!(r.get("triplet_accuracy"), Some(0.0));
    }

    #[test]
    fn ap_is_order_free_under_ties() {
        let s = [1.0, 0.0, 1.0, 0.0];
        let r = [true, true, false, false];
        // threshold 1: P = 1/2, R = 1/2; threshold 0: P = 2/4, R = 1
        assert!((average_precision(&s, &r) - 0.5).abs() < 1e-12);
        let s2 = [1.0, 1.0, 0.0, 0.0];
        let r2 = [false, true, true, false];
        assert!((average_precision(&s2, &r2) - 0.5).abs() < 1e-12);
    }
}
