//! L2-regularized logistic regression fitted by full-batch gradient descent
//! with Armijo backtracking, run to a gradient-norm tolerance. The intercept
//! is unpenalized.

use super::linalg::{dot, norm2, Matrix};
use super::{
    sigmoid, to_matrix, FeatureColumn, ModelParams, ModelSpec, TrainError, TrainingDiagnostics,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

pub(crate) const DEFAULT_LAMBDA: f64 = 1e-4;
const DEFAULT_MAX_ITERS: usize = 500;
const DEFAULT_TOL: f64 = 1e-6;

pub(crate) fn fit(
    spec: &ModelSpec,
    columns: &[FeatureColumn],
    labels: &[u8],
) -> Result<(ModelParams, Vec<String>, TrainingDiagnostics), TrainError> {
    let (x, names) = to_matrix(columns)?;
    let lambda = spec.get_f64("lambda", DEFAULT_LAMBDA)?;
    if lambda < 0.0 {
        return Err(TrainError::InvalidHyper {
            name: "lambda".into(),
            detail: "must be >= 0".into(),
        });
    }
    let max_iters = spec.get_usize("max_iters", DEFAULT_MAX_ITERS)?;
    let tol = spec.get_f64("tol", DEFAULT_TOL)?;
    let (params, diag, _trace) = fit_gd(&x, labels, lambda, max_iters, tol);
    Ok((ModelParams::Logistic(params), names, diag))
}

/// Mean penalized negative log-likelihood and its gradient at (weights,
/// intercept). Gradient layout: [d weights..., intercept].
pub(crate) fn objective(
    x: &Matrix,
    y: &[u8],
    weights: &[f64],
    intercept: f64,
    lambda: f64,
) -> (f64, Vec<f64>) {
    let n = x.n_rows;
    let d = x.n_cols;
    let mut grad = vec![0.0; d + 1];
    let mut loss = 0.0;
    for i in 0..n {
        let eta = dot(x.row(i), weights) + intercept;
        let yi = f64::from(y[i]);
        // ln(1 + e^eta) - y*eta, computed stably
        loss += if eta > 0.0 {
            (1.0 - yi) * eta + (-eta).exp().ln_1p()
        } else {
            -yi * eta + eta.exp().ln_1p()
        };
        let resid = sigmoid(eta) - yi;
        for (j, xij) in x.row(i).iter().enumerate() {
            grad[j] += resid * xij;
        }
        grad[d] += resid;
    }
    let n_f = n as f64;
    loss /= n_f;
    for g in grad.iter_mut() {
        *g /= n_f;
    }
    for j in 0..d {
        loss += 0.5 * lambda * weights[j] * weights[j];
        grad[j] += lambda * weights[j];
    }
    (loss, grad)
}

/// Gradient descent with backtracking; returns the loss trace for the
/// monotonicity check.
pub(crate) fn fit_gd(
    x: &Matrix,
    y: &[u8],
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> (LogisticParams, TrainingDiagnostics, Vec<f64>) {
    let d = x.n_cols;
    let mut weights = vec![0.0; d];
    let mut intercept = 0.0;
    let mut trace = Vec::new();
    let (mut loss, mut grad) = objective(x, y, &weights, intercept, lambda);
    trace.push(loss);
    let mut converged = false;
    let mut iters = 0;
    let mut grad_norm = norm2(&grad);
    let mut step = 1.0f64;
    for it in 0..max_iters {
        iters = it + 1;
        if grad_norm <= tol {
            converged = true;
            iters = it;
            break;
        }
        // Armijo backtracking from the last accepted step (allowed to grow)
        step = (step * 2.0).min(1e6);
        let g2 = grad_norm * grad_norm;
        let mut accepted = false;
        for _ in 0..60 {
            let cand_w: Vec<f64> = weights
                .iter()
                .zip(&grad)
                .map(|(w, g)| w - step * g)
                .collect();
            let cand_b = intercept - step * grad[d];
            let (cand_loss, cand_grad) = objective(x, y, &cand_w, cand_b, lambda);
            if cand_loss <= loss - 1e-4 * step * g2 {
                weights = cand_w;
                intercept = cand_b;
                loss = cand_loss;
                grad = cand_grad;
                grad_norm = norm2(&grad);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        trace.push(loss);
        if !accepted {
            // step underflow: gradient no longer improves the loss
            converged = grad_norm <= tol * 10.0;
            break;
        }
    }
    if grad_norm <= tol {
        converged = true;
    }
    (
        LogisticParams { weights, intercept },
        TrainingDiagnostics {
            converged,
            iterations: iters,
            final_grad_norm: Some(grad_norm),
        },
        trace,
    )
}

pub(crate) fn predict_proba(
    params: &LogisticParams,
    columns: &[FeatureColumn],
) -> Result<Vec<f64>, TrainError> {
    let (x, _) = to_matrix(columns)?;
    if x.n_cols != params.weights.len() {
        return Err(TrainError::DimensionMismatch(format!(
            "model has {} weights, input has {} columns",
            params.weights.len(),
            x.n_cols
        )));
    }
    Ok((0..x.n_rows)
        .map(|i| sigmoid(dot(x.row(i), &params.weights) + params.intercept))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testutil::{blobs, numeric_dataset};
    use crate::learners::{extract_features, extract_labels, train, ModelFamily, HyperValue};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn huge_lambda_collapses_weights_but_not_intercept() {
        let ds = blobs(200, 3, 3.0, 1);
        let spec = ModelSpec::new(ModelFamily::Logistic).with("lambda", HyperValue::Float(1e9));
        let model = train(&spec, &ds, 0).unwrap();
        let ModelParams::Logistic(p) = &model.params else {
            panic!()
        };
        assert!(norm2(&p.weights) < 1e-3, "weight norm {}", norm2(&p.weights));
    }

    #[test]
    fn zero_model_predicts_half() {
        let params = LogisticParams {
            weights: vec![0.0, 0.0],
            intercept: 0.0,
        };
        let ds = numeric_dataset(&[vec![1.0, -3.0], vec![2.0, 5.0]], &[1, 0]);
        let cols = extract_features(&ds).unwrap();
        let probs = predict_proba(&params, &cols).unwrap();
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn separable_data_is_fit_accurately() {
        let ds = blobs(400, 4, 4.0, 7);
        let spec = ModelSpec::new(ModelFamily::Logistic).with("lambda", HyperValue::Float(1e-4));
        let model = train(&spec, &ds, 0).unwrap();
        let probs = crate::learners::predict_proba(&model, &ds).unwrap();
        let labels = ds.label_values().unwrap();
        let acc = probs
            .iter()
            .zip(&labels)
            .filter(|(p, &y)| (**p >= 0.5) == (y == 1))
            .count() as f64
            / labels.len() as f64;
        assert!(acc > 0.97, "accuracy {acc}");
    }

    #[test]
    fn loss_trace_is_non_increasing() {
        let ds = blobs(120, 3, 2.0, 3);
        let cols = extract_features(&ds).unwrap();
        let labels = extract_labels(&ds).unwrap();
        let (x, _) = to_matrix(&cols).unwrap();
        let (_, _, trace) = fit_gd(&x, &labels, 0.01, 300, 1e-8);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let ds = blobs(20, 3, 1.5, 5);
        let cols = extract_features(&ds).unwrap();
        let labels = extract_labels(&ds).unwrap();
        let (x, _) = to_matrix(&cols).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: f64 = rng.gen_range(-1.0..1.0);
            let (_, grad) = objective(&x, &labels, &w, b, 0.1);
            let mut numeric = vec![0.0; 4];
            let h = 1e-6;
            for j in 0..4 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                let (mut bp, mut bm) = (b, b);
                if j < 3 {
                    wp[j] += h;
                    wm[j] -= h;
                } else {
                    bp += h;
                    bm -= h;
                }
                let (lp, _) = objective(&x, &labels, &wp, bp, 0.1);
                let (lm, _) = objective(&x, &labels, &wm, bm, 0.1);
                numeric[j] = (lp - lm) / (2.0 * h);
            }
            let diff: f64 = grad
                .iter()
                .zip(&numeric)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let rel = diff / norm2(&grad).max(norm2(&numeric));
            assert!(rel < 1e-5, "relative gradient error {rel}");
        }
    }

    #[test]
    fn predictions_are_deterministic() {
        let ds = blobs(100, 3, 2.0, 11);
        let spec = ModelSpec::new(ModelFamily::Logistic);
        let m1 = train(&spec, &ds, 9).unwrap();
        let m2 = train(&spec, &ds, 9).unwrap();
        assert_eq!(m1, m2);
        let p1 = crate::learners::predict_proba(&m1, &ds).unwrap();
        let p2 = crate::learners::predict_proba(&m1, &ds).unwrap();
        assert_eq!(p1, p2);
    }
}
