//! Binomial GLM fitted by penalized iteratively reweighted least squares
//! (Fisher scoring with step halving). Links: logit, probit, cloglog.
//!
//! The L2 penalty matches the logistic trainer's objective — minimizing
//! NLL/n + (lambda/2)·||w||² with an unpenalized intercept — so a logit-link
//! GLM and the logistic trainer converge to the same optimum.

use super::linalg::{cholesky_solve, dot, norm2, Matrix};
use super::{
    to_matrix, FeatureColumn, ModelParams, ModelSpec, TrainError, TrainingDiagnostics,
};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

const MU_EPS: f64 = 1e-10;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logit,
    Probit,
    Cloglog,
}

impl FromStr for Link {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logit" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            "cloglog" => Ok(Link::Cloglog),
            other => Err(format!("unknown link {other:?}")),
        }
    }
}

impl Link {
    /// Inverse link: mean μ(η), clamped away from {0, 1}.
    pub(crate) fn mean(&self, eta: f64) -> f64 {
        let mu = match self {
            Link::Logit => super::sigmoid(eta),
            Link::Probit => 0.5 * (1.0 + statrs::function::erf::erf(eta / SQRT_2)),
            Link::Cloglog => 1.0 - (-eta.exp()).exp(),
        };
        mu.clamp(MU_EPS, 1.0 - MU_EPS)
    }

    /// dμ/dη at η.
    pub(crate) fn dmu_deta(&self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let m = super::sigmoid(eta);
                (m * (1.0 - m)).max(1e-300)
            }
            Link::Probit => {
                ((-0.5 * eta * eta).exp() / (2.0 * std::f64::consts::PI).sqrt()).max(1e-300)
            }
            Link::Cloglog => (eta - eta.exp()).exp().max(1e-300),
        }
    }

    /// Numerically stable (ln μ, ln(1−μ), d ln μ/dη, d ln(1−μ)/dη): the
    /// loss and its gradient must come from the same expressions or
    /// finite-difference checks break where μ saturates.
    fn loglik_terms(&self, eta: f64) -> (f64, f64, f64, f64) {
        match self {
            Link::Logit => {
                let softplus = |x: f64| {
                    if x > 0.0 {
                        x + (-x).exp().ln_1p()
                    } else {
                        x.exp().ln_1p()
                    }
                };
                (
                    -softplus(-eta),
                    -softplus(eta),
                    super::sigmoid(-eta),
                    -super::sigmoid(eta),
                )
            }
            Link::Probit => {
                let e = eta.clamp(-30.0, 30.0);
                let phi = (-0.5 * e * e).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let cdf_lo = (0.5 * statrs::function::erf::erfc(-e / SQRT_2)).max(1e-300);
                let cdf_hi = (0.5 * statrs::function::erf::erfc(e / SQRT_2)).max(1e-300);
                (cdf_lo.ln(), cdf_hi.ln(), phi / cdf_lo, -phi / cdf_hi)
            }
            Link::Cloglog => {
                let e = eta.clamp(-30.0, 30.0);
                let t = e.exp();
                let mu = (-(-t).exp_m1()).max(1e-300); // 1 - exp(-t)
                ((mu).ln(), -t, (e - t).exp() / mu, -t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmParams {
    pub link: Link,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

const DEFAULT_LAMBDA: f64 = 0.0;
const DEFAULT_MAX_ITERS: usize = 100;
const DEFAULT_TOL: f64 = 1e-10;

pub(crate) fn fit(
    spec: &ModelSpec,
    columns: &[FeatureColumn],
    labels: &[u8],
) -> Result<(ModelParams, Vec<String>, TrainingDiagnostics), TrainError> {
    let (x, names) = to_matrix(columns)?;
    let link: Link = spec
        .get_str("link", "logit")?
        .parse()
        .map_err(|detail| TrainError::InvalidHyper {
            name: "link".into(),
            detail,
        })?;
    let lambda = spec.get_f64("lambda", DEFAULT_LAMBDA)?;
    if lambda < 0.0 {
        return Err(TrainError::InvalidHyper {
            name: "lambda".into(),
            detail: "must be >= 0".into(),
        });
    }
    let max_iters = spec.get_usize("max_iters", DEFAULT_MAX_ITERS)?;
    let tol = spec.get_f64("tol", DEFAULT_TOL)?;
    let (params, diag) = fit_irls(&x, labels, link, lambda, max_iters, tol);
    Ok((ModelParams::Glm(params), names, diag))
}

/// Mean penalized NLL and gradient at beta = [weights..., intercept];
/// shared by the fitter's line check and the gradient tests.
pub(crate) fn objective(
    x: &Matrix,
    y: &[u8],
    beta: &[f64],
    link: Link,
    lambda: f64,
) -> (f64, Vec<f64>) {
    let n = x.n_rows;
    let d = x.n_cols;
    debug_assert_eq!(beta.len(), d + 1);
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for i in 0..n {
        let eta = dot(x.row(i), &beta[..d]) + beta[d];
        let (ln_mu, ln_1m, dln_mu, dln_1m) = link.loglik_terms(eta);
        let yi = f64::from(y[i]);
        loss -= yi * ln_mu + (1.0 - yi) * ln_1m;
        let s = -(yi * dln_mu + (1.0 - yi) * dln_1m);
        for (j, xij) in x.row(i).iter().enumerate() {
            grad[j] += s * xij;
        }
        grad[d] += s;
    }
    let n_f = n as f64;
    loss /= n_f;
    for g in grad.iter_mut() {
        *g /= n_f;
    }
    for j in 0..d {
        loss += 0.5 * lambda * beta[j] * beta[j];
        grad[j] += lambda * beta[j];
    }
    (loss, grad)
}

fn fit_irls(
    x: &Matrix,
    y: &[u8],
    link: Link,
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> (GlmParams, TrainingDiagnostics) {
    let n = x.n_rows;
    let d = x.n_cols;
    let mut beta = vec![0.0; d + 1];
    let (mut loss, mut grad) = objective(x, y, &beta, link, lambda);
    let mut converged = false;
    let mut iters = 0;

    for it in 0..max_iters {
        iters = it + 1;
        // Fisher information of the mean objective: (1/n) Xa' W Xa + lambda D
        let mut info = Matrix::zeros(d + 1, d + 1);
        for i in 0..n {
            let eta = dot(x.row(i), &beta[..d]) + beta[d];
            let mu = link.mean(eta);
            let dmu = link.dmu_deta(eta);
            let w = (dmu * dmu / (mu * (1.0 - mu))).max(1e-12) / n as f64;
            let row = x.row(i);
            for a in 0..=d {
                let xa = if a < d { row[a] } else { 1.0 };
                for b in a..=d {
                    let xb = if b < d { row[b] } else { 1.0 };
                    let v = info.get(a, b) + w * xa * xb;
                    info.set(a, b, v);
                }
            }
        }
        for a in 0..=d {
            for b in 0..a {
                let v = info.get(b, a);
                info.set(a, b, v);
            }
        }
        for j in 0..d {
            info.set(j, j, info.get(j, j) + lambda);
        }
        let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
        let Some(delta) = cholesky_solve(&info, &neg_grad) else {
            break;
        };
        // step halving on the penalized objective
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = beta
                .iter()
                .zip(&delta)
                .map(|(b, dl)| b + step * dl)
                .collect();
            let (cand_loss, cand_grad) = objective(x, y, &cand, link, lambda);
            if cand_loss.is_finite() && cand_loss <= loss + 1e-12 {
                let max_change = delta.iter().fold(0.0f64, |m, v| m.max((step * v).abs()));
                let rel_improve = (loss - cand_loss).abs() / (loss.abs() + 1.0);
                beta = cand;
                loss = cand_loss;
                grad = cand_grad;
                accepted = true;
                if rel_improve < tol || max_change < 1e-12 {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || converged {
            converged = converged || !accepted && norm2(&grad) < 1e-6;
            break;
        }
    }
    let grad_norm = norm2(&grad);
    (
        GlmParams {
            link,
            weights: beta[..d].to_vec(),
            intercept: beta[d],
        },
        TrainingDiagnostics {
            converged,
            iterations: iters,
            final_grad_norm: Some(grad_norm),
        },
    )
}

pub(crate) fn predict_proba(
    params: &GlmParams,
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
        .map(|i| {
            params
                .link
                .mean(dot(x.row(i), &params.weights) + params.intercept)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testutil::blobs;
    use crate::learners::{
        extract_features, extract_labels, predict_proba as model_predict, train, HyperValue,
        ModelFamily,
    };
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logit_glm_matches_logistic_trainer() {
        let ds = blobs(300, 4, 2.5, 13);
        let lambda = 0.01;
        let glm_spec = ModelSpec::new(ModelFamily::Glm)
            .with("link", HyperValue::Text("logit".into()))
            .with("lambda", HyperValue::Float(lambda));
        let lr_spec = ModelSpec::new(ModelFamily::Logistic)
            .with("lambda", HyperValue::Float(lambda))
            .with("tol", HyperValue::Float(1e-10))
            .with("max_iters", HyperValue::Int(5000));
        let glm = train(&glm_spec, &ds, 0).unwrap();
        let lr = train(&lr_spec, &ds, 0).unwrap();
        let pg = model_predict(&glm, &ds).unwrap();
        let pl = model_predict(&lr, &ds).unwrap();
        let max_diff = pg
            .iter()
            .zip(&pl)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-4, "max probability gap {max_diff}");
    }

    #[test]
    fn all_links_fit_separable_data() {
        let ds = blobs(300, 3, 3.0, 21);
        let labels = ds.label_values().unwrap();
        for link in ["logit", "probit", "cloglog"] {
            let spec = ModelSpec::new(ModelFamily::Glm)
                .with("link", HyperValue::Text(link.into()))
                .with("lambda", HyperValue::Float(1e-3));
            let model = train(&spec, &ds, 0).unwrap();
            let probs = model_predict(&model, &ds).unwrap();
            assert!(probs.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)));
            let acc = probs
                .iter()
                .zip(&labels)
                .filter(|(p, &y)| (**p >= 0.5) == (y == 1))
                .count() as f64
                / labels.len() as f64;
            assert!(acc > 0.95, "{link}: accuracy {acc}");
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences_for_every_link() {
        let ds = blobs(20, 3, 1.5, 2);
        let cols = extract_features(&ds).unwrap();
        let labels = extract_labels(&ds).unwrap();
        let (x, _) = to_matrix(&cols).unwrap();
        for link in [Link::Logit, Link::Probit, Link::Cloglog] {
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            for _ in 0..10 {
                let beta: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.8..0.8)).collect();
                let (_, grad) = objective(&x, &labels, &beta, link, 0.05);
                let h = 1e-6;
                let mut numeric = vec![0.0; 4];
                for j in 0..4 {
                    let mut bp = beta.clone();
                    let mut bm = beta.clone();
                    bp[j] += h;
                    bm[j] -= h;
                    let (lp, _) = objective(&x, &labels, &bp, link, 0.05);
                    let (lm, _) = objective(&x, &labels, &bm, link, 0.05);
                    numeric[j] = (lp - lm) / (2.0 * h);
                }
                let diff: f64 = grad
                    .iter()
                    .zip(&numeric)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let rel = diff / norm2(&grad).max(norm2(&numeric));
                assert!(rel < 1e-5, "{link:?}: relative gradient error {rel}");
            }
        }
    }

    #[test]
    fn unknown_link_is_rejected() {
        let ds = blobs(50, 2, 2.0, 3);
        let spec =
            ModelSpec::new(ModelFamily::Glm).with("link", HyperValue::Text("identity".into()));
        assert!(matches!(
            train(&spec, &ds, 0),
            Err(TrainError::InvalidHyper { .. })
        ));
    }

    #[test]
    fn link_functions_are_sane() {
        assert!((Link::Logit.mean(0.0) - 0.5).abs() < 1e-12);
        assert!((Link::Probit.mean(0.0) - 0.5).abs() < 1e-12);
        // cloglog is asymmetric: mean(0) = 1 - 1/e
        assert!((Link::Cloglog.mean(0.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        for link in [Link::Logit, Link::Probit, Link::Cloglog] {
            assert!(link.mean(-40.0) >= 0.0 && link.mean(-40.0) < 1e-6);
            assert!(link.mean(40.0) > 1.0 - 1e-6 && link.mean(40.0) <= 1.0);
        }
    }
}
