//! Deterministic train/test splitting, optionally stratified on the label.

use super::{Dataset, TabularError};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify_on_label: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            seed: 0,
            stratify_on_label: true,
        }
    }
}

/// Partition rows into disjoint, exhaustive (train, test) sets. Row order
/// within each side follows the original dataset. Deterministic given the
/// seed.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), TabularError> {
    let n = dataset.n_rows();
    if n < 10 {
        return Err(TabularError::TooFewRows { rows: n, min: 10 });
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(TabularError::SchemaInvalid(format!(
            "train_fraction must be in (0,1), got {}",
            spec.train_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train_idx: Vec<usize> = Vec::new();

    if spec.stratify_on_label {
        let labels = dataset.label_values()?;
        for class in [0u8, 1u8] {
            let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
            idx.shuffle(&mut rng);
            let take = take_count(idx.len(), spec.train_fraction);
            train_idx.extend(idx.into_iter().take(take));
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let take = take_count(n, spec.train_fraction);
        train_idx.extend(idx.into_iter().take(take));
    }

    train_idx.sort_unstable();
    let mut in_train = vec![false; n];
    for &i in &train_idx {
        in_train[i] = true;
    }
    let test_idx: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    Ok((
        dataset.select_rows(&train_idx),
        dataset.select_rows(&test_idx),
    ))
}

fn take_count(n: usize, fraction: f64) -> usize {
    let raw = (n as f64 * fraction).round() as usize;
    raw.clamp(usize::from(n > 0), n.saturating_sub(1).max(1))
}
