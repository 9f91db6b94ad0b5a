//! Synthetic clinical cohort generation with controllable group marginals
//! and injectable bias, plus a ground-truth manifest of the audit rates
//! each group is expected to exhibit.
//!
//! Per row: one group draw per attribute (independent across attributes), a
//! label `y ~ Bernoulli(base_positive_rate)`, a latent feature class `z`
//! obtained by flipping `y` (`noise_flip_rate_positive` applies to y=1 rows,
//! `noise_flip_rate_negative` to y=0 rows), and class-conditional Gaussian
//! features centred at ±signal/2 given `z`. A classifier that recovers `z`
//! therefore exhibits, against the dataset labels, per-group
//! FPR = `noise_flip_rate_negative` and FNR = `noise_flip_rate_positive`
//! exactly — which is what makes the manifest's expected rates exact and the
//! error rates independently steerable.

use crate::tabular::{ColumnKind, ColumnRole, Dataset, FeatureSpec, Schema, Value};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("invalid cohort config: {0}")]
    ConfigInvalid(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
}

/// Group shares of one sensitive attribute; shares must sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDistribution {
    pub attribute: String,
    pub groups: BTreeMap<String, f64>,
}

/// Overrides the outcome/noise parameters for one (attribute, group).
/// Rows matching several injections (via different attributes) take the
/// first one in config order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasInjection {
    pub attribute: String,
    pub group: String,
    pub base_positive_rate: f64,
    pub feature_signal_strength: f64,
    pub noise_flip_rate_positive: f64,
    pub noise_flip_rate_negative: f64,
}

fn default_positive_rate() -> f64 {
    0.5
}
fn default_signal() -> f64 {
    4.0
}
fn default_numeric_features() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub n_rows: usize,
    pub seed: u64,
    pub distributions: Vec<GroupDistribution>,
    #[serde(default)]
    pub injections: Vec<BiasInjection>,
    #[serde(default)]
    pub balance_labels: bool,
    #[serde(default = "default_numeric_features")]
    pub numeric_features: usize,
    #[serde(default = "default_positive_rate")]
    pub default_positive_rate: f64,
    #[serde(default = "default_signal")]
    pub default_signal_strength: f64,
    #[serde(default)]
    pub default_flip_rate_positive: f64,
    #[serde(default)]
    pub default_flip_rate_negative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfiguredRates {
    pub positive_rate: f64,
    pub flip_rate_positive: f64,
    pub flip_rate_negative: f64,
    pub signal_strength: f64,
}

/// Exact expected audit rates implied by the config (after label balancing,
/// when enabled). `fpr`/`fnr` are undefined when a group has no negative/
/// positive mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedRates {
    pub share: f64,
    pub positive_rate: f64,
    pub ppgr: f64,
    pub ppr: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupExpectation {
    pub configured: ConfiguredRates,
    pub expected: ExpectedRates,
}

/// Ground truth for audit verification: the configured parameters and the
/// exact expected rates per (attribute, group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub n_rows: usize,
    pub balance_labels: bool,
    pub attributes: BTreeMap<String, BTreeMap<String, GroupExpectation>>,
}

/// Exact configured/expected rates for one attribute (no estimation).
pub fn manifest_rates<'a>(
    manifest: &'a GroundTruthManifest,
    attribute: &str,
) -> Result<&'a BTreeMap<String, GroupExpectation>, CohortError> {
    manifest
        .attributes
        .get(attribute)
        .ok_or_else(|| CohortError::UnknownAttribute(attribute.to_string()))
}

struct RowParams {
    positive_rate: f64,
    signal: f64,
    flip_pos: f64,
    flip_neg: f64,
}

impl CohortConfig {
    fn validate(&self) -> Result<(), CohortError> {
        let bad = |msg: String| Err(CohortError::ConfigInvalid(msg));
        if self.n_rows == 0 {
            return bad("n_rows must be >= 1".into());
        }
        if self.distributions.is_empty() {
            return bad("at least one group distribution is required".into());
        }
        let mut cells: usize = 1;
        for d in &self.distributions {
            if d.groups.is_empty() {
                return bad(format!("attribute {:?} has no groups", d.attribute));
            }
            let sum: f64 = d.groups.values().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!(
                    "shares of {:?} sum to {sum}, expected 1",
                    d.attribute
                ));
            }
            if d.groups.values().any(|&s| s <= 0.0) {
                return bad(format!("attribute {:?} has a non-positive share", d.attribute));
            }
            cells = cells.saturating_mul(d.groups.len());
        }
        if cells > 1_000_000 {
            return bad(format!("joint group space too large ({cells} cells)"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for inj in &self.injections {
            let dist = self
                .distributions
                .iter()
                .find(|d| d.attribute == inj.attribute)
                .ok_or_else(|| {
                    CohortError::ConfigInvalid(format!(
                        "injection references unknown attribute {:?}",
                        inj.attribute
                    ))
                })?;
            if !dist.groups.contains_key(&inj.group) {
                return bad(format!(
                    "injection references unknown group {:?} of {:?}",
                    inj.group, inj.attribute
                ));
            }
            if !seen.insert((inj.attribute.clone(), inj.group.clone())) {
                return bad(format!(
                    "duplicate injection for ({:?}, {:?})",
                    inj.attribute, inj.group
                ));
            }
            for (name, v) in [
                ("base_positive_rate", inj.base_positive_rate),
                ("noise_flip_rate_positive", inj.noise_flip_rate_positive),
                ("noise_flip_rate_negative", inj.noise_flip_rate_negative),
            ] {
                if !(0.0..=1.0).contains(&v) {
                    return bad(format!("{name} must be in [0,1], got {v}"));
                }
            }
            if inj.feature_signal_strength < 0.0 {
                return bad("feature_signal_strength must be >= 0".into());
            }
        }
        Ok(())
    }

    fn params_for(&self, assignment: &[&str]) -> RowParams {
        for inj in &self.injections {
            let ai = self
                .distributions
                .iter()
                .position(|d| d.attribute == inj.attribute)
                .expect("validated");
            if assignment[ai] == inj.group {
                return RowParams {
                    positive_rate: inj.base_positive_rate,
                    signal: inj.feature_signal_strength,
                    flip_pos: inj.noise_flip_rate_positive,
                    flip_neg: inj.noise_flip_rate_negative,
                };
            }
        }
        RowParams {
            positive_rate: self.default_positive_rate,
            signal: self.default_signal_strength,
            flip_pos: self.default_flip_rate_positive,
            flip_neg: self.default_flip_rate_negative,
        }
    }

    fn schema(&self) -> Schema {
        let mut columns = Vec::new();
        for d in &self.distributions {
            columns.push(FeatureSpec::new(
                d.attribute.clone(),
                ColumnKind::Categorical,
                ColumnRole::Sensitive,
            ));
        }
        for j in 0..self.numeric_features {
            columns.push(FeatureSpec::new(
                format!("f{j}"),
                ColumnKind::Numeric,
                ColumnRole::Feature,
            ));
        }
        columns.push(FeatureSpec::new(
            "label",
            ColumnKind::Boolean,
            ColumnRole::Label,
        ));
        Schema::new(columns).expect("generated schema is valid")
    }
}

/// Generate a cohort. Deterministic given the config (row order included).
pub fn generate_cohort(
    config: &CohortConfig,
) -> Result<(Dataset, GroundTruthManifest), CohortError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let schema = config.schema();
    let n_attrs = config.distributions.len();

    let mut rows: Vec<Vec<Value>> = Vec::with_capacity(config.n_rows);
    let mut labels: Vec<bool> = Vec::with_capacity(config.n_rows);
    for _ in 0..config.n_rows {
        let mut assignment: Vec<&str> = Vec::with_capacity(n_attrs);
        for d in &config.distributions {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = None;
            for (g, share) in &d.groups {
                acc += share;
                if u < acc {
                    chosen = Some(g.as_str());
                    break;
                }
            }
            assignment.push(chosen.unwrap_or_else(|| {
                d.groups.keys().next_back().map(|g| g.as_str()).unwrap()
            }));
        }
        let p = config.params_for(&assignment);
        let y = rng.gen::<f64>() < p.positive_rate;
        let flip = rng.gen::<f64>() < if y { p.flip_pos } else { p.flip_neg };
        let z = y != flip;
        let mu = if z { p.signal / 2.0 } else { -p.signal / 2.0 };

        let mut row: Vec<Value> = assignment
            .iter()
            .map(|g| Value::Cat(g.to_string()))
            .collect();
        for _ in 0..config.numeric_features {
            let x: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
            row.push(Value::Num(mu + x));
        }
        row.push(Value::Bool(y));
        labels.push(y);
        rows.push(row);
    }

    if config.balance_labels {
        rows = rebalance(rows, &labels, config.n_rows, &mut rng);
    }

    let dataset = Dataset::new(schema, rows).expect("generated rows match schema");
    let manifest = build_manifest(config)?;
    Ok((dataset, manifest))
}

/// Resample to a 50/50 label split at constant row count: the majority
/// class is downsampled, the minority upsampled with replacement, then the
/// rows are reshuffled.
fn rebalance(
    rows: Vec<Vec<Value>>,
    labels: &[bool],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Value>> {
    let target_pos = n / 2;
    let target_neg = n - target_pos;
    let mut pos_idx: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let mut neg_idx: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
    pos_idx.shuffle(rng);
    neg_idx.shuffle(rng);
    let mut take = |idx: &mut Vec<usize>, target: usize| -> Vec<usize> {
        if idx.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<usize> = idx.iter().take(target).cloned().collect();
        while out.len() < target {
            out.push(idx[rng.gen_range(0..idx.len())]);
        }
        out
    };
    let mut chosen = take(&mut pos_idx, target_pos);
    chosen.extend(take(&mut neg_idx, target_neg));
    chosen.shuffle(rng);
    chosen.into_iter().map(|i| rows[i].clone()).collect()
}

fn build_manifest(config: &CohortConfig) -> Result<GroundTruthManifest, CohortError> {
    // enumerate the joint group space exactly
    let dists = &config.distributions;
    let mut cells: Vec<(Vec<&str>, f64)> = vec![(Vec::new(), 1.0)];
    for d in dists {
        let mut next = Vec::with_capacity(cells.len() * d.groups.len());
        for (assignment, p) in &cells {
            for (g, share) in &d.groups {
                let mut a = assignment.clone();
                a.push(g.as_str());
                next.push((a, p * share));
            }
        }
        cells = next;
    }

    struct CellLaw {
        p: f64,
        b: f64,
        qp: f64,
        qn: f64,
    }
    let laws: Vec<(Vec<&str>, CellLaw)> = cells
        .into_iter()
        .map(|(a, p)| {
            let rp = config.params_for(&a);
            (
                a,
                CellLaw {
                    p,
                    b: rp.positive_rate,
                    qp: rp.flip_pos,
                    qn: rp.flip_neg,
                },
            )
        })
        .collect();

    let p1: f64 = laws.iter().map(|(_, c)| c.p * c.b).sum();
    let p0 = 1.0 - p1;
    let (w1, w0) = if config.balance_labels {
        if p1 <= 0.0 || p0 <= 0.0 {
            return Err(CohortError::ConfigInvalid(
                "balance_labels requires both label classes to have positive probability".into(),
            ));
        }
        (0.5 / p1, 0.5 / p0)
    } else {
        (1.0, 1.0)
    };

    let mut attributes = BTreeMap::new();
    for (ai, d) in dists.iter().enumerate() {
        let mut groups: BTreeMap<String, GroupExpectation> = BTreeMap::new();
        // first pass: per-group masses and pp masses for the PPR denominator
        let mut pp_masses: BTreeMap<&str, f64> = BTreeMap::new();
        let mut masses: BTreeMap<&str, f64> = BTreeMap::new();
        let mut pos_mass: BTreeMap<&str, f64> = BTreeMap::new();
        let mut neg_raw: BTreeMap<&str, f64> = BTreeMap::new();
        let mut pos_raw: BTreeMap<&str, f64> = BTreeMap::new();
        let mut fp_raw: BTreeMap<&str, f64> = BTreeMap::new();
        let mut fn_raw: BTreeMap<&str, f64> = BTreeMap::new();
        for (assignment, c) in &laws {
            let g = assignment[ai];
            *masses.entry(g).or_default() += c.p * (c.b * w1 + (1.0 - c.b) * w0);
            *pos_mass.entry(g).or_default() += c.p * c.b * w1;
            *pp_masses.entry(g).or_default() +=
                c.p * (c.b * (1.0 - c.qp) * w1 + (1.0 - c.b) * c.qn * w0);
            *pos_raw.entry(g).or_default() += c.p * c.b;
            *neg_raw.entry(g).or_default() += c.p * (1.0 - c.b);
            *fp_raw.entry(g).or_default() += c.p * (1.0 - c.b) * c.qn;
            *fn_raw.entry(g).or_default() += c.p * c.b * c.qp;
        }
        let total_pp: f64 = pp_masses.values().sum();
        for (g, share) in &d.groups {
            let mass = masses[g.as_str()];
            let ppgr = pp_masses[g.as_str()] / mass;
            let fpr = if neg_raw[g.as_str()] > 0.0 {
                Some(fp_raw[g.as_str()] / neg_raw[g.as_str()])
            } else {
                None
            };
            let fnr = if pos_raw[g.as_str()] > 0.0 {
                Some(fn_raw[g.as_str()] / pos_raw[g.as_str()])
            } else {
                None
            };
            // configured parameters for this group: its own injection, or
            // the defaults
            let configured = config
                .injections
                .iter()
                .find(|i| i.attribute == d.attribute && &i.group == g)
                .map(|i| ConfiguredRates {
                    positive_rate: i.base_positive_rate,
                    flip_rate_positive: i.noise_flip_rate_positive,
                    flip_rate_negative: i.noise_flip_rate_negative,
                    signal_strength: i.feature_signal_strength,
                })
                .unwrap_or(ConfiguredRates {
                    positive_rate: config.default_positive_rate,
                    flip_rate_positive: config.default_flip_rate_positive,
                    flip_rate_negative: config.default_flip_rate_negative,
                    signal_strength: config.default_signal_strength,
                });
            groups.insert(
                g.clone(),
                GroupExpectation {
                    configured,
                    expected: ExpectedRates {
                        share: mass,
                        positive_rate: pos_mass[g.as_str()] / mass,
                        ppgr,
                        ppr: pp_masses[g.as_str()] / total_pp,
                        fpr,
                        fnr,
                    },
                },
            );
            let _ = share;
        }
        attributes.insert(d.attribute.clone(), groups);
    }

    Ok(GroundTruthManifest {
        schema_version: 1,
        seed: config.seed,
        n_rows: config.n_rows,
        balance_labels: config.balance_labels,
        attributes,
    })
}
