//! Confusion matrix and the classification metrics reported by the pipeline:
//! precision, recall and F1 for the positive (readmitted) class.
//!
//! Zero-denominator rates are reported as *undefined* (`None`) rather than
//! coerced to 0; silent zeros would corrupt downstream disparity ratios.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("length mismatch: {truth} true labels vs {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("empty input")]
    Empty,
}

/// Counts of true/false positives/negatives. Positive class = label 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Predicted positives, tp + fp.
    pub fn predicted_positive(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn add(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }
}

/// Precision/recall/F1 for the positive class; `None` marks an undefined
/// rate (zero denominator), which is distinct from 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Tally the confusion matrix of binary predictions against binary truth.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix, MetricError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricError::LengthMismatch {
            truth: y_true.len(),
            pred: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t != 0, p != 0) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Precision = tp/(tp+fp), recall = tp/(tp+fn), F1 = harmonic mean.
pub fn scores(cm: &ConfusionMatrix) -> ClassificationScores {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ClassificationScores {
        precision,
        recall,
        f1,
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}
