//! Support-recovery and prediction-error metrics.

use serde::{Deserialize, Serialize};

use crate::error::{BssError, Result};
use crate::linalg::Matrix;
use crate::subset::Subset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub msep: Option<f64>,
    /// Absent when the true support is empty.
    pub sensitivity: Option<f64>,
    /// Absent when the true support is full.
    pub specificity: Option<f64>,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

pub fn confusion(s_hat: &Subset, s_true: &Subset) -> Result<Confusion> {
    if s_hat.len() != s_true.len() {
        return Err(BssError::dimension(format!(
            "subsets have lengths {} and {}",
            s_hat.len(),
            s_true.len()
        )));
    }
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        r#fn: 0,
    };
    for (&h, &t) in s_hat.bits().iter().zip(s_true.bits()) {
        match (h, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.r#fn += 1,
        }
    }
    Ok(c)
}

/// Mean over all entries of `(y_hat - y_test)^2`.
pub fn msep(y_hat: &Matrix, y_test: &Matrix) -> Result<f64> {
    if y_hat.shape() != y_test.shape() {
        return Err(BssError::dimension(format!(
            "predictions are {:?} but the test responses are {:?}",
            y_hat.shape(),
            y_test.shape()
        )));
    }
    if y_hat.is_empty() {
        return Err(BssError::dimension("empty prediction matrix"));
    }
    Ok((y_hat - y_test).norm_squared() / y_hat.len() as f64)
}

pub fn metrics(
    s_hat: &Subset,
    s_true: &Subset,
    predictions: Option<(&Matrix, &Matrix)>,
) -> Result<MetricsReport> {
    let c = confusion(s_hat, s_true)?;
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    let denom = 2 * c.tp + c.fp + c.r#fn;
    Ok(MetricsReport {
        msep: predictions.map(|(h, t)| msep(h, t)).transpose()?,
        sensitivity: ratio(c.tp, c.r#fn),
        specificity: ratio(c.tn, c.fp),
        // both supports empty: perfect agreement
        f1: if denom == 0 {
            1.0
        } else {
            2.0 * c.tp as f64 / denom as f64
        },
    })
}

/// Share of the truly zero coordinates that are also zero in the estimate.
pub fn correct_zero_rate(s_hat: &Subset, s_true: &Subset) -> Result<Option<f64>> {
    Ok(metrics(s_hat, s_true, None)?.specificity)
}
