//! Report rendering: canonical JSON, one CSV row per disparity record, or
//! a human-readable table mirroring the audit layout
//! (`Group (size ratio)  PPR  PPGR  FPR  FNR`).

use super::AuditReport;
use crate::fairaudit::{DisparityMetric, Verdict};
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("unknown format {0:?} (expected json, csv or text)")]
    UnknownFormat(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Json,
    Csv,
    Text,
}

impl FromStr for RenderFormat {
    type Err = RenderError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(RenderFormat::Json),
            "csv" => Ok(RenderFormat::Csv),
            "text" => Ok(RenderFormat::Text),
            other => Err(RenderError::UnknownFormat(other.to_string())),
        }
    }
}

pub fn render(report: &AuditReport, format: RenderFormat) -> Result<String, RenderError> {
    match format {
        RenderFormat::Json => report
            .to_json()
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| RenderError::Serialize(e.to_string())),
        RenderFormat::Csv => Ok(render_csv(report)),
        RenderFormat::Text => Ok(render_text(report)),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn render_csv(report: &AuditReport) -> String {
    let mut out = String::from(
        "attribute,group,reference_group,metric,group_rate,reference_rate,ratio,verdict,suppressed\n",
    );
    for attr in &report.audit.attributes {
        for r in &attr.disparities {
            let verdict = match r.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "fail",
                Verdict::Indeterminate => "indeterminate",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.attribute,
                r.group,
                r.reference_group,
                r.metric.code(),
                opt(r.group_rate),
                opt(r.reference_rate),
                opt(r.ratio),
                verdict,
                r.suppressed
            );
        }
    }
    out
}

fn fmt_rate(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}"),
        None => "--".to_string(),
    }
}

fn verdict_mark(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Indeterminate => "IND",
    }
}

fn render_text(report: &AuditReport) -> String {
    let mut out = String::new();
    let meta = &report.metadata;
    let _ = writeln!(out, "fairness audit report (v{})", report.schema_version);
    let _ = writeln!(
        out,
        "tool {} | seed {} | dataset sha256 {}",
        meta.tool_version, meta.seed, meta.dataset_hash
    );
    if let Some(model) = &meta.model {
        let _ = writeln!(out, "model: {model}");
    }
    if let Some(ts) = meta.timestamp {
        let _ = writeln!(out, "timestamp: {ts}");
    }
    out.push('\n');

    match &report.classification {
        Some(c) => {
            let _ = writeln!(
                out,
                "classification (positive class): precision {}  recall {}  f1 {}",
                fmt_rate(c.scores.precision),
                fmt_rate(c.scores.recall),
                fmt_rate(c.scores.f1)
            );
            let _ = writeln!(
                out,
                "confusion: tp {} fp {} fn {} tn {}",
                c.confusion.tp, c.confusion.fp, c.confusion.fn_, c.confusion.tn
            );
        }
        None => {
            let _ = writeln!(out, "classification scores: not computed");
        }
    }
    out.push('\n');

    if report.audit.attributes.is_empty() {
        let _ = writeln!(out, "no attributes audited");
    }
    for attr in &report.audit.attributes {
        let _ = writeln!(
            out,
            "== {} (reference: {}) ==",
            attr.attribute, attr.reference
        );
        let _ = writeln!(
            out,
            "{:<28} {:>6} {:>6} {:>6} {:>6}",
            "Group (size ratio)", "PPR", "PPGR", "FPR", "FNR"
        );
        for g in &attr.groups {
            let name = format!(
                "{} ({:.2}){}",
                g.group,
                g.size_ratio,
                if g.suppressed { " [suppressed]" } else { "" }
            );
            let _ = writeln!(
                out,
                "{:<28} {:>6} {:>6} {:>6} {:>6}",
                name,
                fmt_rate(g.rates.ppr),
                fmt_rate(g.rates.ppgr),
                fmt_rate(g.rates.fpr),
                fmt_rate(g.rates.fnr)
            );
        }
        for metric in DisparityMetric::ALL {
            let recs: Vec<_> = attr
                .disparities
                .iter()
                .filter(|r| r.metric == metric && r.group != attr.reference)
                .collect();
            let parts: Vec<String> = recs
                .iter()
                .map(|r| {
                    let ratio = r
                        .ratio
                        .map(|x| format!("{x:.2}X"))
                        .unwrap_or_else(|| "--".to_string());
                    format!("{} {} [{}]", r.group, ratio, verdict_mark(r.verdict))
                })
                .collect();
            let _ = writeln!(out, "  {:<5} {}", metric.code(), parts.join("  "));
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "overall verdict: {}",
        match report.audit.overall {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Indeterminate => "INDETERMINATE",
        }
    );
    out
}
