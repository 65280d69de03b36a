use ndarray::Array2;

use crate::error::{Error, Result};
use crate::util::compensated_sum;

const SIMPLEX_TOL: f64 = 1e-9;

/// One example: `L x V` next-token distributions and `L` target ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LossExample {
    pub probs: Array2<f64>,
    pub targets: Vec<usize>,
}

fn check_targets(targets: &[usize], rows: usize, vocab: usize) -> Result<()> {
    if targets.len() != rows {
        return Err(Error::Shape(format!("{} targets for {rows} positions", targets.len())));
    }
    if let Some(t) = targets.iter().find(|t| **t >= vocab) {
        return Err(Error::Distribution(format!("target {t} outside vocabulary of {vocab}")));
    }
    Ok(())
}

/// `-sum_examples sum_positions ln p(target)`, summed rather than averaged.
/// Rows must be probability vectors within 1e-9.
pub fn multitask_loss(batch: &[LossExample]) -> Result<f64> {
    let mut terms = Vec::new();
    for ex in batch {
        let (rows, vocab) = ex.probs.dim();
        check_targets(&ex.targets, rows, vocab)?;
        for (i, row) in ex.probs.outer_iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Distribution(format!("row {i} has a negative or non-finite entry")));
            }
            let total = compensated_sum(row.iter().copied());
            if (total - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::Distribution(format!("row {i} sums to {total}")));
            }
            terms.push(-row[ex.targets[i]].ln());
        }
    }
    Ok(compensated_sum(terms))
}

/// Row-wise softmax, max-shifted.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.outer_iter_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|s| (s - m).exp());
        let z: f64 = row.sum();
        row.mapv_inplace(|e| e / z);
    }
    out
}

/// Loss of softmax(scores) against `targets`, and its gradient with
/// respect to the scores, `softmax - onehot`.
pub fn score_loss(scores: &Array2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (rows, vocab) = scores.dim();
    check_targets(targets, rows, vocab)?;
    let mut grad = softmax_rows(scores);
    let mut terms = Vec::with_capacity(rows);
    for (i, row) in scores.outer_iter().enumerate() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
        terms.push(lse - row[targets[i]]);
        grad[(i, targets[i])] -= 1.0;
    }
    Ok((compensated_sum(terms), grad))
}
