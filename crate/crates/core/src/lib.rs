//! Train ICU readmission classifiers on tabular cohorts and audit their
//! predictions for group fairness.
//!
//! The crate is organised around the pipeline stages:
//!
//! * [`tabular`] — schema-typed datasets, CSV ingestion, cohort filtering,
//!   readmission label derivation, preprocessing and train/test splitting.
//! * [`cohortgen`] — synthetic cohort generation with controllable group
//!   marginals and injectable outcome/error-rate bias, plus a ground-truth
//!   manifest of the rates each group should exhibit.
//! * [`learners`] — Naive Bayes, logistic regression, binomial GLMs
//!   (logit/probit/cloglog) and a small MLP, with grid search over 5-fold
//!   cross-validation.
//! * [`evalmetrics`] — confusion matrices and precision/recall/F1.
//! * [`fairaudit`] — per-group rates (PPR/PPGR/FPR/FNR), disparity ratios
//!   against a reference group and pass/fail parity verdicts under the
//!   80%–125% rule.
//! * [`report`] — end-to-end pipeline orchestration and report rendering.

pub mod cohortgen;
pub mod evalmetrics;
pub mod fairaudit;
pub mod learners;
pub mod report;
pub mod tabular;

pub use cohortgen::{BiasInjection, CohortConfig, GroundTruthManifest, GroupDistribution};
pub use evalmetrics::{ClassificationScores, ConfusionMatrix};
pub use fairaudit::{
    AuditConfig, AuditSummary, DisparityMetric, DisparityRecord, GroupRates, GroupSlice,
    ReferenceRule, Verdict,
};
pub use learners::{CvResult, ModelFamily, ModelSpec, TrainedModel};
pub use report::{AuditReport, PipelineConfig, RenderFormat};
pub use tabular::{
    AdmissionRecord, ColumnKind, ColumnRole, Dataset, FeatureSpec, PreprocessStats, Schema,
    SplitSpec, Value,
};
