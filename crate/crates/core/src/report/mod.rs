//! End-to-end pipeline orchestration and report assembly: ingest →
//! split (70/30) → preprocess (fit on train, replay on test) → optional
//! grid-search CV → final training → test evaluation → fairness audit,
//! with every artifact (model, predictions, report) written to the output
//! directory. Fully deterministic given the configured seeds.

mod render;

pub use render::{render, RenderFormat, RenderError};

use crate::cohortgen::{self, CohortConfig};
use crate::evalmetrics::{confusion, scores, ClassificationScores, ConfusionMatrix};
use crate::fairaudit::{run_audit, AuditConfig, AuditSummary, ReferenceRule, Verdict};
use crate::learners::{
    self, grid_search_cv, threshold_labels, CvResult, GridSpec, ModelFamily, ModelSpec,
    TrainedModel,
};
use crate::tabular::{
    load_dataset, load_schema, save_schema, split, write_dataset_csv, CategoricalEncoding,
    Dataset, PreprocessStats, SplitSpec,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A pipeline failure annotated with the stage that raised it.
#[derive(Debug, Error)]
#[error("stage {stage}: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

fn stage<E: std::error::Error + Send + Sync + 'static>(
    name: &'static str,
) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError {
        stage: name,
        source: Box::new(e),
    }
}

/// Where the pipeline's cohort comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Files {
        cohort_csv: PathBuf,
        schema_json: PathBuf,
    },
    Synth {
        synth_config: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSection {
    /// attributes to audit; default: every sensitive column in the schema
    #[serde(default)]
    pub attributes: Option<Vec<String>>,
    /// fixed reference groups; attributes not listed fall back to the
    /// largest group
    #[serde(default)]
    pub references: Option<BTreeMap<String, String>>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_min_group_size")]
    pub min_group_size: u64,
    #[serde(default)]
    pub one_sided_error_rates: bool,
}

fn default_tau() -> f64 {
    0.8
}
fn default_min_group_size() -> u64 {
    10
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            attributes: None,
            references: None,
            tau: default_tau(),
            min_group_size: default_min_group_size(),
            one_sided_error_rates: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub data: DataSource,
    pub family: ModelFamily,
    /// hyperparameter grid (JSON object, key order = grid order); absent
    /// means "train the family defaults without a search"
    #[serde(default)]
    pub grid: Option<serde_json::Map<String, serde_json::Value>>,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// lenient CSV parsing (unparseable cells become missing)
    #[serde(default)]
    pub lenient: bool,
}

fn default_threshold() -> f64 {
    0.5
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub dataset_hash: String,
    pub model: Option<String>,
    pub seed: u64,
    /// unix seconds; suppressed (null) under --no-timestamp for
    /// byte-identical reruns
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub confusion: ConfusionMatrix,
    pub scores: ClassificationScores,
}

/// The complete audit report: metadata, test-set classification scores,
/// and the per-attribute fairness audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub classification: Option<ClassificationSummary>,
    pub audit: AuditSummary,
}

impl AuditReport {
    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// CI-gate exit code: 0 pass, 2 at least one fail, 3 indeterminate-only.
    pub fn exit_code(&self) -> i32 {
        match self.audit.overall {
            Verdict::Pass => 0,
            Verdict::Fail => 2,
            Verdict::Indeterminate => 3,
        }
    }
}

pub fn compose_report(
    audit: AuditSummary,
    classification: Option<ClassificationSummary>,
    dataset_hash: String,
    model: Option<String>,
    seed: u64,
    with_timestamp: bool,
) -> AuditReport {
    AuditReport {
        schema_version: REPORT_SCHEMA_VERSION,
        metadata: ReportMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            dataset_hash,
            model,
            seed,
            timestamp: if with_timestamp {
                Some(
                    std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map(|d| d.as_secs())
                        .unwrap_or(0),
                )
            } else {
                None
            },
        },
        classification,
        audit,
    }
}

pub fn sha256_hex_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Everything a pipeline run produces.
#[derive(Debug)]
pub struct PipelineRun {
    pub report: AuditReport,
    pub model: TrainedModel,
    pub cv: Option<CvResult>,
    pub out_dir: PathBuf,
}

/// File names written into the output directory.
pub mod artifacts {
    pub const COHORT_CSV: &str = "cohort.csv";
    pub const SCHEMA_JSON: &str = "schema.json";
    pub const MANIFEST_JSON: &str = "manifest.json";
    pub const TEST_CSV: &str = "test.csv";
    pub const MODEL_JSON: &str = "model.json";
    pub const CV_JSON: &str = "cv.json";
    pub const PREDICTIONS_CSV: &str = "predictions.csv";
    pub const REPORT_JSON: &str = "report.json";
}

pub fn write_predictions(
    path: &Path,
    probabilities: &[f64],
    labels: &[u8],
) -> Result<(), std::io::Error> {
    let mut out = String::from("row_id,probability,predicted_label\n");
    for (i, (p, l)) in probabilities.iter().zip(labels).enumerate() {
        out.push_str(&format!("{i},{p},{l}\n"));
    }
    fs::write(path, out)
}

pub fn read_predictions(path: &Path) -> Result<(Vec<f64>, Vec<u8>), PipelineError> {
    let on = stage("read-predictions");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(on)?;
    let mut probs = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(stage("read-predictions"))?;
        let p: f64 = record
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PipelineError {
                stage: "read-predictions",
                source: format!("bad probability in {record:?}").into(),
            })?;
        let l: u8 = record
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PipelineError {
                stage: "read-predictions",
                source: format!("bad label in {record:?}").into(),
            })?;
        probs.push(p);
        labels.push(l);
    }
    Ok((probs, labels))
}

/// Build the audit config for a dataset: explicit attribute list or every
/// sensitive schema column; explicit references or largest-group.
pub fn audit_config_for(section: &AuditSection, data: &Dataset) -> AuditConfig {
    let attributes = section.attributes.clone().unwrap_or_else(|| {
        data.schema()
            .sensitive_columns()
            .iter()
            .map(|c| c.name.clone())
            .collect()
    });
    AuditConfig {
        sensitive_attributes: attributes,
        reference_rule: match &section.references {
            Some(map) => ReferenceRule::Fixed(map.clone()),
            None => ReferenceRule::LargestGroup,
        },
        tau: section.tau,
        min_group_size: section.min_group_size,
        one_sided_error_rates: section.one_sided_error_rates,
    }
}

pub fn sensitive_tokens(
    data: &Dataset,
    attributes: &[String],
) -> Result<BTreeMap<String, Vec<String>>, crate::tabular::TabularError> {
    let mut out = BTreeMap::new();
    for attr in attributes {
        out.insert(attr.clone(), data.group_tokens(attr)?);
    }
    Ok(out)
}

/// Run the full pipeline into `out_dir`. `with_timestamp = false` makes
/// reruns byte-identical.
pub fn run_pipeline(
    config: &PipelineConfig,
    out_dir: &Path,
    with_timestamp: bool,
) -> Result<PipelineRun, PipelineError> {
    fs::create_dir_all(out_dir).map_err(stage("setup"))?;

    // ingest
    let (raw, dataset_hash) = match &config.data {
        DataSource::Files {
            cohort_csv,
            schema_json,
        } => {
            let schema = load_schema(schema_json).map_err(stage("ingest"))?;
            let data =
                load_dataset(cohort_csv, &schema, !config.lenient).map_err(stage("ingest"))?;
            let hash = sha256_hex_file(cohort_csv).map_err(stage("ingest"))?;
            (data, hash)
        }
        DataSource::Synth { synth_config } => {
            let text = fs::read_to_string(synth_config).map_err(stage("synth"))?;
            let cohort_config: CohortConfig =
                serde_json::from_str(&text).map_err(stage("synth"))?;
            let (data, manifest) =
                cohortgen::generate_cohort(&cohort_config).map_err(stage("synth"))?;
            let csv_path = out_dir.join(artifacts::COHORT_CSV);
            write_dataset_csv(&data, &csv_path).map_err(stage("synth"))?;
            save_schema(data.schema(), &out_dir.join(artifacts::SCHEMA_JSON))
                .map_err(stage("synth"))?;
            fs::write(
                out_dir.join(artifacts::MANIFEST_JSON),
                serde_json::to_string_pretty(&manifest).map_err(stage("synth"))? + "\n",
            )
            .map_err(stage("synth"))?;
            let hash = sha256_hex_file(&csv_path).map_err(stage("synth"))?;
            (data, hash)
        }
    };

    // split on raw rows, then fit preprocessing on the train side only
    let split_spec = config.split.unwrap_or(SplitSpec {
        train_fraction: 0.7,
        seed: config.seed,
        stratify_on_label: true,
    });
    let (train_raw, test_raw) = split(&raw, &split_spec).map_err(stage("split"))?;
    write_dataset_csv(&test_raw, &out_dir.join(artifacts::TEST_CSV)).map_err(stage("split"))?;

    let encoding = match config.family {
        ModelFamily::NaiveBayes => CategoricalEncoding::Keep,
        _ => CategoricalEncoding::OneHot,
    };
    let stats = PreprocessStats::fit(&train_raw, encoding);
    let train_t = stats.transform(&train_raw).map_err(stage("preprocess"))?;
    let test_t = stats.transform(&test_raw).map_err(stage("preprocess"))?;

    // model selection + final fit
    let (spec, cv) = match &config.grid {
        Some(grid_map) => {
            let grid_text =
                serde_json::to_string(grid_map).map_err(stage("grid-search"))?;
            let grid: GridSpec =
                learners::parse_grid_json(&grid_text).map_err(stage("grid-search"))?;
            let cv = grid_search_cv(config.family, &grid, &train_t, config.seed)
                .map_err(stage("grid-search"))?;
            fs::write(
                out_dir.join(artifacts::CV_JSON),
                serde_json::to_string_pretty(&cv).map_err(stage("grid-search"))? + "\n",
            )
            .map_err(stage("grid-search"))?;
            (cv.best().spec.clone(), Some(cv))
        }
        None => (ModelSpec::new(config.family), None),
    };
    let mut model = learners::train(&spec, &train_t, config.seed).map_err(stage("train"))?;
    model.preprocess = Some(stats);
    let model_json = model.to_json().map_err(stage("train"))?;
    fs::write(out_dir.join(artifacts::MODEL_JSON), model_json + "\n").map_err(stage("train"))?;

    // test-set evaluation
    let probs = learners::predict_proba(&model, &test_t).map_err(stage("evaluate"))?;
    let preds = threshold_labels(&probs, config.threshold);
    write_predictions(&out_dir.join(artifacts::PREDICTIONS_CSV), &probs, &preds)
        .map_err(stage("evaluate"))?;
    let y_true = test_raw.label_values().map_err(stage("evaluate"))?;
    let cm = confusion(&y_true, &preds).map_err(stage("evaluate"))?;
    let classification = ClassificationSummary {
        confusion: cm,
        scores: scores(&cm),
    };

    // fairness audit on the raw test rows
    let audit_cfg = audit_config_for(&config.audit, &test_raw);
    let tokens =
        sensitive_tokens(&test_raw, &audit_cfg.sensitive_attributes).map_err(stage("audit"))?;
    let audit = run_audit(&y_true, &preds, &tokens, &audit_cfg).map_err(stage("audit"))?;

    let report = compose_report(
        audit,
        Some(classification),
        dataset_hash,
        Some(artifacts::MODEL_JSON.to_string()),
        config.seed,
        with_timestamp,
    );
    fs::write(
        out_dir.join(artifacts::REPORT_JSON),
        report.to_json().map_err(stage("report"))? + "\n",
    )
    .map_err(stage("report"))?;

    Ok(PipelineRun {
        report,
        model,
        cv,
        out_dir: out_dir.to_path_buf(),
    })
}
