//! Naive Bayes over mixed features: Gaussian likelihoods for numeric
//! columns (closed-form sample statistics, variance floored) and smoothed
//! multinomial likelihoods per categorical column, with a reserved unknown
//! category so unseen test tokens never produce zero probabilities.

use super::{FeatureColumn, ModelParams, ModelSpec, TrainError, TrainingDiagnostics};
use serde::{Deserialize, Serialize};

/// Variance floor preventing division by zero for constant features.
pub const VARIANCE_FLOOR: f64 = 1e-9;
const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NbFeature {
    Gaussian {
        name: String,
        /// per-class (0, 1) means
        mean: [f64; 2],
        /// per-class population variances, floored
        var: [f64; 2],
    },
    Categorical {
        name: String,
        /// training categories, sorted; the implicit last outcome is the
        /// unknown bucket
        categories: Vec<String>,
        /// per-class log probabilities over categories.len() + 1 outcomes
        log_prob: [Vec<f64>; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    pub alpha: f64,
    pub class_log_prior: [f64; 2],
    pub features: Vec<NbFeature>,
}

pub(crate) fn fit(
    spec: &ModelSpec,
    columns: &[FeatureColumn],
    labels: &[u8],
) -> Result<(ModelParams, Vec<String>, TrainingDiagnostics), TrainError> {
    let alpha = spec.get_f64("alpha", DEFAULT_ALPHA)?;
    if alpha <= 0.0 {
        return Err(TrainError::InvalidHyper {
            name: "alpha".into(),
            detail: "must be > 0".into(),
        });
    }
    let n = labels.len();
    let n1 = labels.iter().filter(|&&l| l == 1).count();
    let n0 = n - n1;
    let class_n = [n0 as f64, n1 as f64];
    let class_log_prior = [
        (class_n[0] / n as f64).ln(),
        (class_n[1] / n as f64).ln(),
    ];

    let mut features = Vec::with_capacity(columns.len());
    let mut names = Vec::with_capacity(columns.len());
    for col in columns {
        names.push(col.name().to_string());
        match col {
            FeatureColumn::Numeric { name, values } => {
                let mut mean = [0.0; 2];
                let mut var = [0.0; 2];
                for c in 0..2 {
                    let xs: Vec<f64> = values
                        .iter()
                        .zip(labels)
                        .filter(|(_, &l)| usize::from(l) == c)
                        .map(|(v, _)| *v)
                        .collect();
                    let m = xs.iter().sum::<f64>() / class_n[c];
                    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / class_n[c];
                    mean[c] = m;
                    var[c] = v.max(VARIANCE_FLOOR);
                }
                features.push(NbFeature::Gaussian {
                    name: name.clone(),
                    mean,
                    var,
                });
            }
            FeatureColumn::Categorical { name, values } => {
                let mut categories: Vec<String> = values.to_vec();
                categories.sort_unstable();
                categories.dedup();
                let k = categories.len() + 1; // + unknown bucket
                let mut counts = [vec![0u64; k], vec![0u64; k]];
                for (v, &l) in values.iter().zip(labels) {
                    let idx = categories.binary_search(v).expect("category present");
                    counts[usize::from(l)][idx] += 1;
                }
                let log_prob = [0, 1].map(|c| {
                    counts[c]
                        .iter()
                        .map(|&cnt| {
                            ((cnt as f64 + alpha) / (class_n[c] + alpha * k as f64)).ln()
                        })
                        .collect()
                });
                features.push(NbFeature::Categorical {
                    name: name.clone(),
                    categories,
                    log_prob,
                });
            }
        }
    }
    Ok((
        ModelParams::NaiveBayes(NbParams {
            alpha,
            class_log_prior,
            features,
        }),
        names,
        TrainingDiagnostics {
            converged: true,
            iterations: 1,
            final_grad_norm: None,
        },
    ))
}

pub(crate) fn predict_proba(
    params: &NbParams,
    columns: &[FeatureColumn],
) -> Result<Vec<f64>, TrainError> {
    if columns.len() != params.features.len() {
        return Err(TrainError::DimensionMismatch(format!(
            "model has {} features, input has {} columns",
            params.features.len(),
            columns.len()
        )));
    }
    let n = match columns.first() {
        Some(FeatureColumn::Numeric { values, .. }) => values.len(),
        Some(FeatureColumn::Categorical { values, .. }) => values.len(),
        None => 0,
    };
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut probs = Vec::with_capacity(n);
    for i in 0..n {
        let mut score = params.class_log_prior;
        for (feature, col) in params.features.iter().zip(columns) {
            match (feature, col) {
                (NbFeature::Gaussian { name, mean, var }, FeatureColumn::Numeric { values, .. }) => {
                    let _ = name;
                    let x = values[i];
                    for c in 0..2 {
                        score[c] +=
                            -0.5 * (ln_2pi + var[c].ln() + (x - mean[c]) * (x - mean[c]) / var[c]);
                    }
                }
                (
                    NbFeature::Categorical {
                        categories,
                        log_prob,
                        ..
                    },
                    FeatureColumn::Categorical { values, .. },
                ) => {
                    let idx = categories
                        .binary_search(&values[i])
                        .unwrap_or(categories.len()); // unknown bucket
                    for c in 0..2 {
                        score[c] += log_prob[c][idx];
                    }
                }
                (f, c) => {
                    return Err(TrainError::DimensionMismatch(format!(
                        "feature {:?} kind does not match input column {:?}",
                        f_name(f),
                        c.name()
                    )))
                }
            }
        }
        // p(1 | x) via the stable two-class log-sum-exp
        probs.push(super::sigmoid(score[1] - score[0]));
    }
    Ok(probs)
}

fn f_name(f: &NbFeature) -> &str {
    match f {
        NbFeature::Gaussian { name, .. } => name,
        NbFeature::Categorical { name, .. } => name,
    }
}
