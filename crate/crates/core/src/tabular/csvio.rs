//! CSV and schema-file ingestion.
//!
//! Input CSV: UTF-8, header row, comma separated, quoted fields allowed.
//! The header must cover every schema column (order is irrelevant; extra
//! file columns are ignored). Schema files are JSON arrays of
//! `{name, kind, role}` objects.

use super::{ColumnKind, ColumnRole, Dataset, FeatureSpec, Schema, TabularError, Value};
use std::fs;
use std::path::Path;

/// Load a typed dataset. In strict mode an unparseable non-empty cell is a
/// `TypeMismatch` (rows are 1-based, counting data rows); in lenient mode it
/// becomes `Missing` and is left to preprocessing. Label cells are always
/// strict.
pub fn load_dataset(
    csv_path: &Path,
    schema: &Schema,
    strict: bool,
) -> Result<Dataset, TabularError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv_path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(TabularError::EmptyFile);
    }
    // map each schema column to its position in the file
    let mut positions = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        match headers.iter().position(|h| h == col.name) {
            Some(p) => positions.push(p),
            None => return Err(TabularError::MissingColumn(col.name.clone())),
        }
    }
    let label_idx = schema.label_index();

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let mut row = Vec::with_capacity(schema.columns.len());
        for (ci, col) in schema.columns.iter().enumerate() {
            let raw = record.get(positions[ci]).unwrap_or("").trim();
            let cell_strict = strict || ci == label_idx;
            row.push(parse_cell(raw, col, row_no, cell_strict)?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(TabularError::EmptyFile);
    }
    Dataset::new(schema.clone(), rows)
}

fn parse_cell(
    raw: &str,
    col: &FeatureSpec,
    row: usize,
    strict: bool,
) -> Result<Value, TabularError> {
    if raw.is_empty() {
        if col.role == ColumnRole::Label {
            return Err(TabularError::MissingLabel { row });
        }
        return Ok(Value::Missing);
    }
    let mismatch = |detail: String| TabularError::TypeMismatch {
        row,
        column: col.name.clone(),
        detail,
    };
    match col.kind {
        ColumnKind::Numeric => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Value::Num(v)),
            _ if strict => Err(mismatch(format!("{raw:?} is not a finite number"))),
            _ => Ok(Value::Missing),
        },
        ColumnKind::Categorical => Ok(Value::Cat(raw.to_string())),
        ColumnKind::Boolean => match parse_bool(raw) {
            Some(b) => Ok(Value::Bool(b)),
            None if strict => Err(mismatch(format!("{raw:?} is not a boolean"))),
            None => Ok(Value::Missing),
        },
    }
}

pub(crate) fn parse_bool(raw: &str) -> Option<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "t" => Some(true),
        "false" | "0" | "no" | "f" => Some(false),
        _ => None,
    }
}

pub fn load_schema(path: &Path) -> Result<Schema, TabularError> {
    let text = fs::read_to_string(path)?;
    let columns: Vec<FeatureSpec> = serde_json::from_str(&text)?;
    Schema::new(columns)
}

pub fn save_schema(schema: &Schema, path: &Path) -> Result<(), TabularError> {
    let text = serde_json::to_string_pretty(&schema.columns)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Write a dataset back out as CSV in schema column order.
pub fn write_dataset_csv(dataset: &Dataset, path: &Path) -> Result<(), TabularError> {
    let mut w = csv::Writer::from_path(path)?;
    let names: Vec<&str> = dataset
        .schema()
        .columns
        .iter()
        .map(|c| c.name.as_str())
        .collect();
    w.write_record(&names)?;
    for row in dataset.rows() {
        let cells: Vec<String> = row
            .iter()
            .map(|v| match v {
                Value::Num(x) => format!("{x}"),
                Value::Cat(s) => s.clone(),
                Value::Bool(b) => b.to_string(),
                Value::Missing => String::new(),
            })
            .collect();
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}
