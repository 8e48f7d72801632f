use alloc::vec::Vec;

use crate::geometry::IGNORE_LABEL;
use crate::{Error, Matrix, Result};

/// Numerically stable softmax of one logit row.
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax cross-entropy averaged over points whose label is not
/// [`IGNORE_LABEL`], with its gradient with respect to the logits.
pub fn cross_entropy(logits: &Matrix, labels: &[i32], num_classes: usize) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: logits.rows(),
            found: labels.len(),
        });
    }
    if logits.cols() != num_classes {
        return Err(Error::DimensionMismatch {
            what: "logit columns",
            expected: num_classes,
            found: logits.cols(),
        });
    }
    if let Some(&bad) = labels
        .iter()
        .find(|&&l| l != IGNORE_LABEL && (l < 0 || l as usize >= num_classes))
    {
        return Err(Error::invalid(alloc::format!("label {bad} outside 0..{num_classes}")));
    }
    let labeled = labels.iter().filter(|&&l| l != IGNORE_LABEL).count();
    let mut grad = Matrix::zeros(logits.rows(), num_classes);
    if labeled == 0 {
        return Ok((0.0, grad));
    }
    let inv = 1.0 / labeled as f64;
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label == IGNORE_LABEL {
            continue;
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|&z| libm::exp(z - max)).sum();
        let log_z = max + libm::log(total);
        loss += log_z - row[label as usize];
        for (c, g) in grad.row_mut(i).iter_mut().enumerate() {
            let p = libm::exp(row[c] - log_z);
            *g = (p - if c == label as usize { 1.0 } else { 0.0 }) * inv;
        }
    }
    Ok((loss * inv, grad))
}
