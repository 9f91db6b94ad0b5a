//! Preprocessing: numeric standardization (population variance), median
//! imputation, and categorical encoding with a reserved unknown bucket.
//!
//! Statistics are fitted on the training data and replayed onto test data,
//! so the transform is exactly reproducible from a [`PreprocessStats`].
//! Categoricals are one-hot expanded by default; [`CategoricalEncoding::Keep`]
//! retains tokens for learners that model categories directly.

use super::{ColumnKind, ColumnRole, Dataset, FeatureSpec, Schema, TabularError, Value};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Reserved one-hot bucket and replacement token for categories that were
/// not seen at fit time (or were missing).
pub const UNKNOWN_CATEGORY: &str = "__other__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalEncoding {
    OneHot,
    Keep,
}

/// Fitted state for one source column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedColumn {
    Numeric {
        name: String,
        mean: f64,
        /// population standard deviation (divide by n); 0 marks a constant
        /// column, which transforms to all zeros
        std: f64,
        median: f64,
    },
    Categorical {
        name: String,
        /// lexicographically sorted distinct training categories
        categories: Vec<String>,
    },
    Boolean {
        name: String,
        majority: bool,
    },
}

impl FittedColumn {
    pub fn name(&self) -> &str {
        match self {
            FittedColumn::Numeric { name, .. } => name,
            FittedColumn::Categorical { name, .. } => name,
            FittedColumn::Boolean { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub encoding: CategoricalEncoding,
    pub columns: Vec<FittedColumn>,
}

impl PreprocessStats {
    /// Fit statistics on a dataset over its model-input columns
    /// (features and sensitive attributes).
    pub fn fit(dataset: &Dataset, encoding: CategoricalEncoding) -> Self {
        let schema = dataset.schema();
        let mut columns = Vec::new();
        for ci in schema.model_input_indices() {
            let col = &schema.columns[ci];
            match col.kind {
                ColumnKind::Numeric => {
                    let vals: Vec<f64> = dataset
                        .rows()
                        .iter()
                        .filter_map(|r| r[ci].as_num())
                        .collect();
                    let (mean, std, median) = numeric_stats(&vals);
                    columns.push(FittedColumn::Numeric {
                        name: col.name.clone(),
                        mean,
                        std,
                        median,
                    });
                }
                ColumnKind::Categorical => {
                    let cats: BTreeSet<String> = dataset
                        .rows()
                        .iter()
                        .filter_map(|r| match &r[ci] {
                            Value::Cat(s) => Some(s.clone()),
                            _ => None,
                        })
                        .collect();
                    columns.push(FittedColumn::Categorical {
                        name: col.name.clone(),
                        categories: cats.into_iter().collect(),
                    });
                }
                ColumnKind::Boolean => {
                    let trues = dataset
                        .rows()
                        .iter()
                        .filter(|r| r[ci].as_bool() == Some(true))
                        .count();
                    let falses = dataset
                        .rows()
                        .iter()
                        .filter(|r| r[ci].as_bool() == Some(false))
                        .count();
                    columns.push(FittedColumn::Boolean {
                        name: col.name.clone(),
                        majority: trues >= falses,
                    });
                }
            }
        }
        Self { encoding, columns }
    }

    /// Apply the fitted transform. Every model-input column of `dataset`
    /// must have fitted statistics; the label column (if present) passes
    /// through unchanged.
    pub fn transform(&self, dataset: &Dataset) -> Result<Dataset, TabularError> {
        let schema = dataset.schema();
        // check coverage both ways
        for ci in schema.model_input_indices() {
            let name = &schema.columns[ci].name;
            if !self.columns.iter().any(|c| c.name() == name) {
                return Err(TabularError::NoStatsForColumn(name.clone()));
            }
        }
        let mut out_columns = Vec::new();
        let mut sources: Vec<(usize, &FittedColumn)> = Vec::new();
        for fitted in &self.columns {
            let ci = schema
                .column_index(fitted.name())
                .ok_or_else(|| TabularError::MissingColumn(fitted.name().to_string()))?;
            sources.push((ci, fitted));
            match fitted {
                FittedColumn::Numeric { name, .. } | FittedColumn::Boolean { name, .. } => {
                    out_columns.push(FeatureSpec::new(
                        name.clone(),
                        ColumnKind::Numeric,
                        ColumnRole::Feature,
                    ));
                }
                FittedColumn::Categorical { name, categories } => match self.encoding {
                    CategoricalEncoding::OneHot => {
                        for c in categories {
                            out_columns.push(FeatureSpec::new(
                                format!("{name}={c}"),
                                ColumnKind::Numeric,
                                ColumnRole::Feature,
                            ));
                        }
                        out_columns.push(FeatureSpec::new(
                            format!("{name}={UNKNOWN_CATEGORY}"),
                            ColumnKind::Numeric,
                            ColumnRole::Feature,
                        ));
                    }
                    CategoricalEncoding::Keep => {
                        out_columns.push(FeatureSpec::new(
                            name.clone(),
                            ColumnKind::Categorical,
                            ColumnRole::Feature,
                        ));
                    }
                },
            }
        }
        let label_ci = schema
            .columns
            .iter()
            .position(|c| c.role == ColumnRole::Label);
        if let Some(ci) = label_ci {
            out_columns.push(schema.columns[ci].clone());
        } else {
            // Dataset invariants require a label column; transformed data
            // keeps the same contract.
            return Err(TabularError::SchemaInvalid(
                "dataset has no label column".to_string(),
            ));
        }
        let out_schema = Schema::new(out_columns)?;

        let mut rows = Vec::with_capacity(dataset.n_rows());
        for row in dataset.rows() {
            let mut out = Vec::with_capacity(out_schema.columns.len());
            for (ci, fitted) in &sources {
                match fitted {
                    FittedColumn::Numeric {
                        mean, std, median, ..
                    } => {
                        let raw = row[*ci].as_num().unwrap_or(*median);
                        let v = if *std == 0.0 { 0.0 } else { (raw - mean) / std };
                        out.push(Value::Num(v));
                    }
                    FittedColumn::Boolean { majority, .. } => {
                        let b = row[*ci].as_bool().unwrap_or(*majority);
                        out.push(Value::Num(if b { 1.0 } else { 0.0 }));
                    }
                    FittedColumn::Categorical { categories, .. } => {
                        let token = match &row[*ci] {
                            Value::Cat(s) if categories.binary_search(s).is_ok() => s.as_str(),
                            _ => UNKNOWN_CATEGORY,
                        };
                        match self.encoding {
                            CategoricalEncoding::OneHot => {
                                for c in categories {
                                    out.push(Value::Num(if c == token { 1.0 } else { 0.0 }));
                                }
                                out.push(Value::Num(if token == UNKNOWN_CATEGORY {
                                    1.0
                                } else {
                                    0.0
                                }));
                            }
                            CategoricalEncoding::Keep => {
                                out.push(Value::Cat(token.to_string()));
                            }
                        }
                    }
                }
            }
            out.push(row[label_ci.unwrap()].clone());
            rows.push(out);
        }
        Dataset::new(out_schema, rows)
    }
}

/// Fit-or-replay entry point: with `fit_statistics` the transform is
/// replayed (test path); without, statistics are fitted on this dataset
/// (train path) with one-hot encoding.
pub fn preprocess(
    dataset: &Dataset,
    fit_statistics: Option<&PreprocessStats>,
) -> Result<(Dataset, PreprocessStats), TabularError> {
    if dataset.n_rows() == 0 {
        return Err(TabularError::EmptyFile);
    }
    let stats = match fit_statistics {
        Some(s) => s.clone(),
        None => PreprocessStats::fit(dataset, CategoricalEncoding::OneHot),
    };
    let transformed = stats.transform(dataset)?;
    Ok((transformed, stats))
}

fn numeric_stats(vals: &[f64]) -> (f64, f64, f64) {
    if vals.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let mut sorted = vals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    (mean, std, median)
}
