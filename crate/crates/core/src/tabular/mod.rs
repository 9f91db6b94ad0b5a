//! Schema-typed tabular data: CSV ingestion, admission records and label
//! derivation, preprocessing, and train/test splitting.

mod admissions;
mod csvio;
mod preprocess;
mod split;

pub use admissions::{
    apply_cohort_filter, derive_readmission_label, load_admissions, AdmissionRecord,
};
pub use csvio::{load_dataset, load_schema, save_schema, write_dataset_csv};
pub use preprocess::{
    preprocess, CategoricalEncoding, FittedColumn, PreprocessStats, UNKNOWN_CATEGORY,
};
pub use split::{split, SplitSpec};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("column {0:?} declared in schema but missing from input")]
    MissingColumn(String),
    #[error("type mismatch at row {row}, column {column:?}: {detail}")]
    TypeMismatch {
        row: usize,
        column: String,
        detail: String,
    },
    #[error("input file is empty")]
    EmptyFile,
    #[error("invalid schema: {0}")]
    SchemaInvalid(String),
    #[error("admission {0:?} discharged before admission")]
    NegativeStay(String),
    #[error("too few rows: {rows} (minimum {min})")]
    TooFewRows { rows: usize, min: usize },
    #[error("no fitted statistics for column {0:?}")]
    NoStatsForColumn(String),
    #[error("row {row} has no usable label value")]
    MissingLabel { row: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Boolean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Feature,
    Sensitive,
    Label,
    Identifier,
    Timestamp,
}

/// One column of the dataset schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub role: ColumnRole,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, role: ColumnRole) -> Self {
        Self {
            name: name.into(),
            kind,
            role,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<FeatureSpec>,
}

impl Schema {
    /// Build a schema, enforcing the structural invariants: unique names,
    /// exactly one boolean label column, categorical sensitive columns.
    pub fn new(columns: Vec<FeatureSpec>) -> Result<Self, TabularError> {
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.clone()) {
                return Err(TabularError::SchemaInvalid(format!(
                    "duplicate column name {:?}",
                    c.name
                )));
            }
            if c.role == ColumnRole::Sensitive && c.kind != ColumnKind::Categorical {
                return Err(TabularError::SchemaInvalid(format!(
                    "sensitive column {:?} must be categorical",
                    c.name
                )));
            }
        }
        let labels: Vec<_> = columns
            .iter()
            .filter(|c| c.role == ColumnRole::Label)
            .collect();
        if labels.len() != 1 {
            return Err(TabularError::SchemaInvalid(format!(
                "expected exactly one label column, found {}",
                labels.len()
            )));
        }
        if labels[0].kind != ColumnKind::Boolean {
            return Err(TabularError::SchemaInvalid(format!(
                "label column {:?} must be boolean",
                labels[0].name
            )));
        }
        Ok(Self { columns })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn label_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c.role == ColumnRole::Label)
            .expect("schema invariant: one label column")
    }

    /// Columns that feed the model: features plus sensitive attributes.
    pub fn model_input_indices(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.role, ColumnRole::Feature | ColumnRole::Sensitive))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sensitive_columns(&self) -> Vec<&FeatureSpec> {
        self.columns
            .iter()
            .filter(|c| c.role == ColumnRole::Sensitive)
            .collect()
    }
}

/// A single cell value. `Missing` marks empty or (in lenient mode)
/// unparseable cells; preprocessing imputes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Num(f64),
    Cat(String),
    Bool(bool),
    Missing,
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

/// Rows plus the schema that types them. Every row has one value per
/// schema column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<Value>>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Vec<Value>>) -> Result<Self, TabularError> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.columns.len() {
                return Err(TabularError::SchemaInvalid(format!(
                    "row {} has {} values, schema has {} columns",
                    i + 1,
                    row.len(),
                    schema.columns.len()
                )));
            }
        }
        Ok(Self { schema, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn value(&self, row: usize, col: usize) -> &Value {
        &self.rows[row][col]
    }

    /// Binary labels as 0/1, failing on missing or non-boolean cells.
    pub fn label_values(&self) -> Result<Vec<u8>, TabularError> {
        let li = self.schema.label_index();
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row[li]
                    .as_bool()
                    .map(|b| b as u8)
                    .ok_or(TabularError::MissingLabel { row: i + 1 })
            })
            .collect()
    }

    /// Per-row group tokens for one sensitive attribute. Missing cells map
    /// to the reserved token `"__missing__"`.
    pub fn group_tokens(&self, attribute: &str) -> Result<Vec<String>, TabularError> {
        let ci = self
            .schema
            .column_index(attribute)
            .ok_or_else(|| TabularError::MissingColumn(attribute.to_string()))?;
        Ok(self
            .rows
            .iter()
            .map(|row| match &row[ci] {
                Value::Cat(s) => s.clone(),
                Value::Bool(b) => b.to_string(),
                Value::Num(v) => format!("{v}"),
                Value::Missing => "__missing__".to_string(),
            })
            .collect())
    }

    /// New dataset holding the given row indices (cloned), in the order given.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}
