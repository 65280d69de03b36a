use super::{check_lengths, keys, ratio, MetricReport};
use crate::datamodel::CvsVector;
use crate::error::Result;
use crate::util::mean;

/// Mean of the three per-criterion accuracies.
pub fn average_accuracy(criteria: [f64; 3]) -> f64 {
    mean(criteria)
}

/// Per-criterion and average accuracy, per-criterion and average balanced
/// accuracy, and accuracy of the all-three conjunction. `None` predictions
/// are wrong on every criterion. A criterion whose ground truth has a single
/// class reports plain accuracy as its balanced accuracy and is flagged.
pub fn cvs_metrics(gt: &[CvsVector], pred: &[Option<CvsVector>]) -> Result<MetricReport> {
    check_lengths(gt.len(), pred.len())?;
    let n = gt.len();
    let mut report = MetricReport::new(n);
    report.parse_failures = pred.iter().filter(|p| p.is_none()).count();
    let acc_keys = [keys::C1_ACCURACY, keys::C2_ACCURACY, keys::C3_ACCURACY];
    let bal_keys = [
        keys::C1_BALANCED_ACCURACY,
        keys::C2_BALANCED_ACCURACY,
        keys::C3_BALANCED_ACCURACY,
    ];
    let mut accs = [0.0; 3];
    let mut bals = [0.0; 3];
    for c in 0..3 {
        let (mut tp, mut tn, mut pos, mut neg) = (0usize, 0usize, 0usize, 0usize);
        for (g, p) in gt.iter().zip(pred) {
            let truth = g.as_array()[c];
            let guess = p.map(|p| p.as_array()[c]).unwrap_or(!truth);
            if truth {
                pos += 1;
                tp += usize::from(guess);
            } else {
                neg += 1;
                tn += usize::from(!guess);
            }
        }
        accs[c] = 100.0 * ratio(tp + tn, n);
        bals[c] = if pos == 0 || neg == 0 {
            report.flags.push(format!(
                "criterion {}: single ground-truth class, balanced accuracy is plain accuracy",
                c + 1
            ));
            accs[c]
        } else {
            100.0 * (ratio(tp, pos) + ratio(tn, neg)) / 2.0
        };
        report.set(acc_keys[c], accs[c]);
        report.set(bal_keys[c], bals[c]);
    }
    report.set(keys::AVERAGE_ACCURACY, average_accuracy(accs));
    report.set(keys::AVERAGE_BALANCED_ACCURACY, mean(bals));
    let overall = gt
        .iter()
        .zip(pred)
        .filter(|(g, p)| p.is_some_and(|p| p.achieved() == g.achieved()))
        .count();
    report.set(keys::CVS_ACCURACY, 100.0 * ratio(overall, n));
    Ok(report)
}
