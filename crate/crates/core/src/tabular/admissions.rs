//! Raw per-stay admission records: cohort filtering and 30-day readmission
//! label derivation.

use super::{csvio::parse_bool, TabularError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// One hospital stay. Times are real-valued days on a shared axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    pub patient_id: String,
    pub admission_id: String,
    pub admit_time: f64,
    pub discharge_time: f64,
    pub age_at_admission: f64,
    pub died_in_hospital: bool,
    pub unit_transfer: bool,
    pub is_icu_stay: bool,
}

/// Read admission records from CSV with columns
/// `patient_id, admission_id, admit_time, discharge_time, age,
/// died_in_hospital, unit_transfer, is_icu_stay`.
pub fn load_admissions(path: &Path) -> Result<Vec<AdmissionRecord>, TabularError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = |name: &str| -> Result<usize, TabularError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TabularError::MissingColumn(name.to_string()))
    };
    let (pi, ai, at, dt, ag, di, ut, icu) = (
        idx("patient_id")?,
        idx("admission_id")?,
        idx("admit_time")?,
        idx("discharge_time")?,
        idx("age")?,
        idx("died_in_hospital")?,
        idx("unit_transfer")?,
        idx("is_icu_stay")?,
    );
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let num = |pos: usize, col: &str| -> Result<f64, TabularError> {
            record
                .get(pos)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| TabularError::TypeMismatch {
                    row,
                    column: col.to_string(),
                    detail: "expected a finite number".to_string(),
                })
        };
        let flag = |pos: usize, col: &str| -> Result<bool, TabularError> {
            record
                .get(pos)
                .and_then(|s| parse_bool(s.trim()))
                .ok_or_else(|| TabularError::TypeMismatch {
                    row,
                    column: col.to_string(),
                    detail: "expected a boolean".to_string(),
                })
        };
        out.push(AdmissionRecord {
            patient_id: record.get(pi).unwrap_or("").trim().to_string(),
            admission_id: record.get(ai).unwrap_or("").trim().to_string(),
            admit_time: num(at, "admit_time")?,
            discharge_time: num(dt, "discharge_time")?,
            age_at_admission: num(ag, "age")?,
            died_in_hospital: flag(di, "died_in_hospital")?,
            unit_transfer: flag(ut, "unit_transfer")?,
            is_icu_stay: flag(icu, "is_icu_stay")?,
        });
    }
    if out.is_empty() {
        return Err(TabularError::EmptyFile);
    }
    Ok(out)
}

/// Label each admission: true iff the same patient has a later admission
/// starting within `window_days` after this stay's discharge (exclusive of
/// gap 0, inclusive at exactly `window_days`).
pub fn derive_readmission_label(
    records: &[AdmissionRecord],
    window_days: f64,
) -> Result<BTreeMap<String, bool>, TabularError> {
    for r in records {
        if r.discharge_time < r.admit_time {
            return Err(TabularError::NegativeStay(r.admission_id.clone()));
        }
    }
    let mut by_patient: BTreeMap<&str, Vec<&AdmissionRecord>> = BTreeMap::new();
    for r in records {
        by_patient.entry(&r.patient_id).or_default().push(r);
    }
    let mut labels = BTreeMap::new();
    for stays in by_patient.values() {
        for a in stays {
            let readmitted = stays.iter().any(|b| {
                let gap = b.admit_time - a.discharge_time;
                gap > 0.0 && gap <= window_days
            });
            labels.insert(a.admission_id.clone(), readmitted);
        }
    }
    Ok(labels)
}

/// Keep adult ICU stays of patients discharged alive without unit transfer,
/// then reduce to each patient's first remaining stay (the index
/// hospitalization). Idempotent.
pub fn apply_cohort_filter(records: &[AdmissionRecord]) -> Vec<AdmissionRecord> {
    let mut kept: Vec<&AdmissionRecord> = records
        .iter()
        .filter(|r| {
            r.age_at_admission > 18.0 && r.is_icu_stay && !r.died_in_hospital && !r.unit_transfer
        })
        .collect();
    // earliest stay per patient; ties broken by admission id for determinism
    kept.sort_by(|a, b| {
        a.patient_id
            .cmp(&b.patient_id)
            .then(a.admit_time.total_cmp(&b.admit_time))
            .then(a.admission_id.cmp(&b.admission_id))
    });
    let mut out: Vec<AdmissionRecord> = Vec::new();
    let mut last_patient: Option<&str> = None;
    for r in kept {
        if last_patient != Some(r.patient_id.as_str()) {
            out.push(r.clone());
            last_patient = Some(&r.patient_id);
        }
    }
    out
}
