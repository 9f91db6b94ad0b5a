//! Hyperparameter grid search over 5-fold cross-validation, selecting the
//! candidate with the best mean validation F1 (ties go to the lower grid
//! index). Candidate×fold training runs in parallel; every run seeds its
//! own generator from (seed, candidate index, fold index) so results are
//! identical to a sequential sweep.

use super::{derive_seed, train, HyperValue, ModelFamily, ModelSpec, TrainError};
use crate::evalmetrics::{confusion, scores};
use crate::tabular::Dataset;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const N_FOLDS: usize = 5;

/// An ordered hyperparameter grid. Candidates enumerate the cartesian
/// product with the last dimension varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: Vec<(String, Vec<HyperValue>)>,
}

impl GridSpec {
    pub fn candidates(&self, family: ModelFamily) -> Result<Vec<ModelSpec>, TrainError> {
        if self.dims.is_empty() || self.dims.iter().any(|(_, vs)| vs.is_empty()) {
            return Err(TrainError::EmptyGrid);
        }
        let mut out = vec![ModelSpec::new(family)];
        for (name, values) in &self.dims {
            let mut next = Vec::with_capacity(out.len() * values.len());
            for spec in &out {
                for v in values {
                    next.push(spec.clone().with(name, v.clone()));
                }
            }
            out = next;
        }
        for spec in &out {
            spec.validate()?;
        }
        Ok(out)
    }
}

/// Parse a grid from a JSON object of `{"name": [values...]}`; scalar
/// values are treated as single-element dimensions. Key order is the grid
/// order.
pub fn parse_grid_json(text: &str) -> Result<GridSpec, TrainError> {
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
    let mut dims = Vec::with_capacity(map.len());
    for (name, value) in map {
        let raw = match value {
            serde_json::Value::Array(items) => items,
            other => vec![other],
        };
        let mut values = Vec::with_capacity(raw.len());
        for item in raw {
            values.push(serde_json::from_value(item)?);
        }
        dims.push((name, values));
    }
    Ok(GridSpec { dims })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCandidate {
    pub spec: ModelSpec,
    /// validation F1 per fold; an undefined F1 scores 0
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
    pub std_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub family: ModelFamily,
    pub candidates: Vec<CvCandidate>,
    pub best_index: usize,
    pub seed: u64,
}

impl CvResult {
    pub fn best(&self) -> &CvCandidate {
        &self.candidates[self.best_index]
    }
}

/// Assign each row to one of five folds; fold f is the validation set of
/// split f and part of the training set of the other four.
pub(crate) fn make_folds(n: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / N_FOLDS;
    let extra = n % N_FOLDS;
    let mut folds = Vec::with_capacity(N_FOLDS);
    let mut pos = 0;
    for f in 0..N_FOLDS {
        let len = base + usize::from(f < extra);
        folds.push(idx[pos..pos + len].to_vec());
        pos += len;
    }
    folds
}

fn folds_trainable(folds: &[Vec<usize>], labels: &[u8]) -> bool {
    for f in 0..folds.len() {
        let mut pos = 0usize;
        let mut neg = 0usize;
        for (g, fold) in folds.iter().enumerate() {
            if g == f {
                continue;
            }
            for &i in fold {
                if labels[i] == 1 {
                    pos += 1;
                } else {
                    neg += 1;
                }
            }
        }
        if pos == 0 || neg == 0 {
            return false;
        }
    }
    true
}

/// Evaluate every grid point with 5-fold cross-validation (each fold an
/// 80/20 train/validation split of the provided training data).
pub fn grid_search_cv(
    family: ModelFamily,
    grid: &GridSpec,
    data: &Dataset,
    seed: u64,
) -> Result<CvResult, TrainError> {
    let n = data.n_rows();
    if n < 10 {
        return Err(TrainError::TooFewRows { rows: n, min: 10 });
    }
    let candidates = grid.candidates(family)?;
    let labels = data.label_values()?;

    let mut folds = make_folds(n, seed);
    if !folds_trainable(&folds, &labels) {
        folds = make_folds(n, seed.wrapping_add(1));
        if !folds_trainable(&folds, &labels) {
            return Err(TrainError::SingleClassFold);
        }
    }

    // precompute per-fold train/validation datasets once
    let splits: Vec<(Dataset, Dataset, Vec<u8>)> = (0..N_FOLDS)
        .map(|f| {
            let val_idx = &folds[f];
            let mut train_idx: Vec<usize> = Vec::with_capacity(n - val_idx.len());
            for (g, fold) in folds.iter().enumerate() {
                if g != f {
                    train_idx.extend_from_slice(fold);
                }
            }
            train_idx.sort_unstable();
            let val_labels = val_idx.iter().map(|&i| labels[i]).collect();
            (
                data.select_rows(&train_idx),
                data.select_rows(val_idx),
                val_labels,
            )
        })
        .collect();

    let tasks: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..N_FOLDS).map(move |f| (c, f)))
        .collect();
    let results: Result<Vec<f64>, TrainError> = tasks
        .par_iter()
        .map(|&(c, f)| {
            let (train_ds, val_ds, val_labels) = &splits[f];
            let model = train(&candidates[c], train_ds, derive_seed(seed, c as u64, f as u64))?;
            let preds = super::predict(&model, val_ds, 0.5)?;
            let cm = confusion(val_labels, &preds).map_err(|e| {
                TrainError::InvalidInput(format!("fold scoring failed: {e}"))
            })?;
            Ok(scores(&cm).f1.unwrap_or(0.0))
        })
        .collect();
    let flat = results?;

    let mut out = Vec::with_capacity(candidates.len());
    for (c, spec) in candidates.into_iter().enumerate() {
        let fold_scores: Vec<f64> = (0..N_FOLDS).map(|f| flat[c * N_FOLDS + f]).collect();
        let mean = fold_scores.iter().sum::<f64>() / N_FOLDS as f64;
        let var = fold_scores
            .iter()
            .map(|s| (s - mean) * (s - mean))
            .sum::<f64>()
            / N_FOLDS as f64;
        out.push(CvCandidate {
            spec,
            fold_scores,
            mean_score: mean,
            std_score: var.sqrt(),
        });
    }
    let mut best_index = 0;
    for (i, cand) in out.iter().enumerate() {
        if cand.mean_score > out[best_index].mean_score {
            best_index = i;
        }
    }
    Ok(CvResult {
        family,
        candidates: out,
        best_index,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testutil::blobs;

    #[test]
    fn folds_partition_rows() {
        let folds = make_folds(103, 17);
        assert_eq!(folds.len(), 5);
        let mut seen = vec![0u8; 103];
        for fold in &folds {
            for &i in fold {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 103);
        assert!(sizes.iter().all(|&s| s == 20 || s == 21));
    }

    #[test]
    fn single_candidate_is_best_with_five_scores() {
        let ds = blobs(80, 3, 3.0, 2);
        let grid = GridSpec {
            dims: vec![("lambda".into(), vec![HyperValue::Float(1e-3)])],
        };
        let result = grid_search_cv(ModelFamily::Logistic, &grid, &ds, 11).unwrap();
        assert_eq!(result.candidates.len(), 1);
        assert_eq!(result.best_index, 0);
        assert_eq!(result.best().fold_scores.len(), 5);
    }

    #[test]
    fn collapsing_lambda_is_not_selected() {
        let ds = blobs(200, 3, 4.0, 5);
        let grid = GridSpec {
            dims: vec![(
                "lambda".into(),
                vec![HyperValue::Float(1e-4), HyperValue::Float(1e9)],
            )],
        };
        let result = grid_search_cv(ModelFamily::Logistic, &grid, &ds, 3).unwrap();
        assert_eq!(result.best_index, 0);
        assert!(result.candidates[0].mean_score > result.candidates[1].mean_score);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let ds = blobs(40, 2, 2.0, 1);
        let grid = GridSpec { dims: vec![] };
        assert!(matches!(
            grid_search_cv(ModelFamily::Logistic, &grid, &ds, 0),
            Err(TrainError::EmptyGrid)
        ));
    }

    #[test]
    fn repeated_runs_are_identical() {
        let ds = blobs(120, 3, 2.0, 6);
        let grid = GridSpec {
            dims: vec![(
                "lambda".into(),
                vec![HyperValue::Float(1e-4), HyperValue::Float(0.1)],
            )],
        };
        let a = grid_search_cv(ModelFamily::Logistic, &grid, &ds, 9).unwrap();
        let b = grid_search_cv(ModelFamily::Logistic, &grid, &ds, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_json_preserves_declaration_order() {
        let grid = parse_grid_json(
            r#"{"hidden_width": [8, 16], "activation": ["relu", "tanh"], "lambda": 0.001}"#,
        )
        .unwrap();
        let names: Vec<&str> = grid.dims.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["hidden_width", "activation", "lambda"]);
        let cands = grid.candidates(ModelFamily::Mlp).unwrap();
        assert_eq!(cands.len(), 4);
        // last dimension varies fastest: first two candidates share width 8
        assert_eq!(
            cands[0].hyperparameters["hidden_width"],
            HyperValue::Int(8)
        );
        assert_eq!(
            cands[1].hyperparameters["hidden_width"],
            HyperValue::Int(8)
        );
        assert_eq!(
            cands[0].hyperparameters["activation"],
            HyperValue::Text("relu".into())
        );
        assert_eq!(
            cands[1].hyperparameters["activation"],
            HyperValue::Text("tanh".into())
        );
    }
}
