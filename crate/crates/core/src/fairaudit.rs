//! Group fairness audit: per-group rates (PPR, PPGR, FPR, FNR), disparity
//! ratios against a reference group, and pass/fail parity verdicts (EP, PP,
//! FPRP, FNRP) under the 80%–125% rule.
//!
//! PPR is a group's share of all predicted positives across an attribute
//! (the PPRs of an attribute sum to 1); PPGR is the within-group predicted
//! positive rate (tp+fp)/size. A rate with a zero denominator is
//! *undefined*, and any ratio involving an undefined rate — or a reference
//! rate of zero — is *indeterminate*: surfaced, never silently failed.

use crate::evalmetrics::ConfusionMatrix;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("reference group {group:?} not present in attribute {attribute:?}")]
    UnknownReference { attribute: String, group: String },
    #[error("no rows to audit")]
    Empty,
    #[error("attribute {0:?} has no group column")]
    MissingAttribute(String),
    #[error("invalid audit config: {0}")]
    ConfigInvalid(String),
}

/// The four parity tests and the group rate each one compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DisparityMetric {
    #[serde(rename = "EP")]
    EqualParity,
    #[serde(rename = "PP")]
    ProportionalParity,
    #[serde(rename = "FPRP")]
    FalsePositiveRateParity,
    #[serde(rename = "FNRP")]
    FalseNegativeRateParity,
}

impl DisparityMetric {
    pub const ALL: [DisparityMetric; 4] = [
        DisparityMetric::EqualParity,
        DisparityMetric::ProportionalParity,
        DisparityMetric::FalsePositiveRateParity,
        DisparityMetric::FalseNegativeRateParity,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            DisparityMetric::EqualParity => "EP",
            DisparityMetric::ProportionalParity => "PP",
            DisparityMetric::FalsePositiveRateParity => "FPRP",
            DisparityMetric::FalseNegativeRateParity => "FNRP",
        }
    }

    /// True for the error-rate parities (FPRP/FNRP), which support the
    /// optional one-sided band.
    pub fn is_error_rate(&self) -> bool {
        matches!(
            self,
            DisparityMetric::FalsePositiveRateParity | DisparityMetric::FalseNegativeRateParity
        )
    }
}

/// Confusion counts of one group within one sensitive attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSlice {
    pub attribute: String,
    pub group: String,
    pub cm: ConfusionMatrix,
    pub size: u64,
    pub size_ratio: f64,
}

/// Per-group audit rates; `None` marks an undefined rate (zero denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub ppr: Option<f64>,
    pub ppgr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

impl GroupRates {
    pub fn get(&self, metric: DisparityMetric) -> Option<f64> {
        match metric {
            DisparityMetric::EqualParity => self.ppr,
            DisparityMetric::ProportionalParity => self.ppgr,
            DisparityMetric::FalsePositiveRateParity => self.fpr,
            DisparityMetric::FalseNegativeRateParity => self.fnr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

/// One (attribute, group, metric) comparison against the reference group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityRecord {
    pub attribute: String,
    pub group: String,
    pub reference_group: String,
    pub metric: DisparityMetric,
    pub group_rate: Option<f64>,
    pub reference_rate: Option<f64>,
    /// group rate divided by reference rate (the "X" multiplier);
    /// `None` when indeterminate
    pub ratio: Option<f64>,
    pub verdict: Verdict,
    pub suppressed: bool,
}

/// How the per-attribute reference group is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceRule {
    /// Largest group by size (ties broken lexicographically).
    LargestGroup,
    /// Explicit attribute → group mapping; attributes absent from the map
    /// fall back to the largest group.
    Fixed(BTreeMap<String, String>),
}

/// The reference groups used by the clinical schema: male, White, Medicare,
/// English.
pub fn clinical_references() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("gender".to_string(), "M".to_string()),
        ("ethnicity".to_string(), "White".to_string()),
        ("insurance".to_string(), "Medicare".to_string()),
        ("language".to_string(), "English".to_string()),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub sensitive_attributes: Vec<String>,
    pub reference_rule: ReferenceRule,
    /// lower edge of the pass band; pass iff tau <= ratio <= 1/tau
    pub tau: f64,
    /// groups smaller than this are reported but excluded from the verdict
    pub min_group_size: u64,
    /// when set, FPRP/FNRP only fail above the band (a group with *less*
    /// error than the reference passes)
    pub one_sided_error_rates: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            sensitive_attributes: Vec::new(),
            reference_rule: ReferenceRule::LargestGroup,
            tau: 0.8,
            min_group_size: 10,
            one_sided_error_rates: false,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<(), AuditError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(AuditError::ConfigInvalid(format!(
                "tau must be in (0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Audit of a single attribute: slices, rates, disparity records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeAudit {
    pub attribute: String,
    pub reference: String,
    pub groups: Vec<GroupAuditRow>,
    pub disparities: Vec<DisparityRecord>,
    pub suppressed_groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAuditRow {
    pub group: String,
    pub size: u64,
    pub size_ratio: f64,
    pub cm: ConfusionMatrix,
    pub rates: GroupRates,
    pub suppressed: bool,
}

/// The full audit: one section per configured attribute plus the overall
/// verdict (fail iff any non-suppressed group fails any metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub attributes: Vec<AttributeAudit>,
    pub overall: Verdict,
}

/// Slice predictions by group token. Returns one slice per distinct token
/// in lexicographic order; slice confusion counts sum to the global matrix.
pub fn slice_by_group(
    y_true: &[u8],
    y_pred: &[u8],
    groups: &[String],
    attribute: &str,
) -> Result<Vec<GroupSlice>, AuditError> {
    if y_true.len() != y_pred.len() || y_true.len() != groups.len() {
        return Err(AuditError::LengthMismatch(format!(
            "y_true {} / y_pred {} / groups {}",
            y_true.len(),
            y_pred.len(),
            groups.len()
        )));
    }
    if y_true.is_empty() {
        return Err(AuditError::Empty);
    }
    let n = y_true.len() as f64;
    let mut by_group: BTreeMap<&str, ConfusionMatrix> = BTreeMap::new();
    for i in 0..y_true.len() {
        let cm = by_group.entry(groups[i].as_str()).or_default();
        match (y_true[i] != 0, y_pred[i] != 0) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(by_group
        .into_iter()
        .map(|(group, cm)| GroupSlice {
            attribute: attribute.to_string(),
            group: group.to_string(),
            size: cm.total(),
            size_ratio: cm.total() as f64 / n,
            cm,
        })
        .collect())
}

/// Rates for one slice. `total_predicted_positive` is the attribute-wide
/// predicted-positive count (the PPR denominator).
pub fn group_rates(slice: &GroupSlice, total_predicted_positive: u64) -> GroupRates {
    let cm = &slice.cm;
    let rate = |num: u64, den: u64| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    GroupRates {
        ppr: rate(cm.predicted_positive(), total_predicted_positive),
        ppgr: rate(cm.predicted_positive(), slice.size),
        fpr: rate(cm.fp, cm.fp + cm.tn),
        fnr: rate(cm.fn_, cm.fn_ + cm.tp),
    }
}

/// Pick the reference group for one attribute's slices.
pub fn select_reference(slices: &[GroupSlice], rule: &ReferenceRule) -> Result<String, AuditError> {
    if slices.is_empty() {
        return Err(AuditError::Empty);
    }
    let attribute = &slices[0].attribute;
    if let ReferenceRule::Fixed(map) = rule {
        if let Some(want) = map.get(attribute) {
            return if slices.iter().any(|s| &s.group == want) {
                Ok(want.clone())
            } else {
                Err(AuditError::UnknownReference {
                    attribute: attribute.clone(),
                    group: want.clone(),
                })
            };
        }
    }
    // largest group; slices arrive in lexicographic group order, so the
    // first maximum is the lexicographically smallest tie
    let mut best = &slices[0];
    for s in &slices[1..] {
        if s.size > best.size {
            best = s;
        }
    }
    Ok(best.group.clone())
}

/// Disparity records of one metric for every group, ratioed against the
/// reference. The reference's own ratio is exactly 1 when its rate is
/// defined.
pub fn disparity(
    rates_by_group: &BTreeMap<String, GroupRates>,
    reference: &str,
    metric: DisparityMetric,
    config: &AuditConfig,
    attribute: &str,
) -> Result<Vec<DisparityRecord>, AuditError> {
    let ref_rates = rates_by_group
        .get(reference)
        .ok_or_else(|| AuditError::UnknownReference {
            attribute: attribute.to_string(),
            group: reference.to_string(),
        })?;
    let reference_rate = ref_rates.get(metric);
    let mut out = Vec::with_capacity(rates_by_group.len());
    for (group, rates) in rates_by_group {
        let group_rate = rates.get(metric);
        let (ratio, verdict) = if group == reference {
            match group_rate {
                Some(_) => (Some(1.0), Verdict::Pass),
                None => (None, Verdict::Indeterminate),
            }
        } else {
            match (group_rate, reference_rate) {
                (Some(g), Some(r)) if r > 0.0 => {
                    let ratio = g / r;
                    (Some(ratio), band_verdict(ratio, metric, config))
                }
                _ => (None, Verdict::Indeterminate),
            }
        };
        out.push(DisparityRecord {
            attribute: attribute.to_string(),
            group: group.clone(),
            reference_group: reference.to_string(),
            metric,
            group_rate,
            reference_rate,
            ratio,
            verdict,
            suppressed: false,
        });
    }
    Ok(out)
}

fn band_verdict(ratio: f64, metric: DisparityMetric, config: &AuditConfig) -> Verdict {
    let upper = 1.0 / config.tau;
    let pass = if config.one_sided_error_rates && metric.is_error_rate() {
        ratio <= upper
    } else {
        ratio >= config.tau && ratio <= upper
    };
    if pass {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Run the full audit over every configured attribute.
pub fn run_audit(
    y_true: &[u8],
    y_pred: &[u8],
    sensitive_columns: &BTreeMap<String, Vec<String>>,
    config: &AuditConfig,
) -> Result<AuditSummary, AuditError> {
    config.validate()?;
    let mut attributes = Vec::new();
    for attr in &config.sensitive_attributes {
        let tokens = sensitive_columns
            .get(attr)
            .ok_or_else(|| AuditError::MissingAttribute(attr.clone()))?;
        let slices = slice_by_group(y_true, y_pred, tokens, attr)?;
        let total_pp: u64 = slices.iter().map(|s| s.cm.predicted_positive()).sum();
        let reference = select_reference(&slices, &config.reference_rule)?;

        let suppressed: BTreeSet<String> = slices
            .iter()
            .filter(|s| s.size < config.min_group_size)
            .map(|s| s.group.clone())
            .collect();
        let mut rates_by_group = BTreeMap::new();
        let mut groups = Vec::new();
        for s in &slices {
            let rates = group_rates(s, total_pp);
            rates_by_group.insert(s.group.clone(), rates);
            groups.push(GroupAuditRow {
                group: s.group.clone(),
                size: s.size,
                size_ratio: s.size_ratio,
                cm: s.cm,
                rates,
                suppressed: suppressed.contains(&s.group),
            });
        }
        let mut disparities = Vec::new();
        for metric in DisparityMetric::ALL {
            let mut records = disparity(&rates_by_group, &reference, metric, config, attr)?;
            for r in &mut records {
                r.suppressed = suppressed.contains(&r.group);
            }
            disparities.extend(records);
        }
        attributes.push(AttributeAudit {
            attribute: attr.clone(),
            reference,
            groups,
            disparities,
            suppressed_groups: suppressed.into_iter().collect(),
        });
    }
    let overall = overall_verdict(&attributes);
    Ok(AuditSummary {
        attributes,
        overall,
    })
}

fn overall_verdict(attributes: &[AttributeAudit]) -> Verdict {
    let mut indeterminate = false;
    for attr in attributes {
        for r in &attr.disparities {
            if r.suppressed {
                continue;
            }
            match r.verdict {
                Verdict::Fail => return Verdict::Fail,
                Verdict::Indeterminate => indeterminate = true,
                Verdict::Pass => {}
            }
        }
    }
    if indeterminate {
        Verdict::Indeterminate
    } else {
        Verdict::Pass
    }
}

impl AuditSummary {
    /// All records of one attribute+metric, keyed by group (convenience for
    /// report consumers).
    pub fn records(
        &self,
        attribute: &str,
        metric: DisparityMetric,
    ) -> BTreeMap<&str, &DisparityRecord> {
        self.attributes
            .iter()
            .filter(|a| a.attribute == attribute)
            .flat_map(|a| a.disparities.iter())
            .filter(|r| r.metric == metric)
            .map(|r| (r.group.as_str(), r))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalmetrics::confusion;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn slice(attr: &str, group: &str, tp: u64, fp: u64, fn_: u64, tn: u64) -> GroupSlice {
        let cm = ConfusionMatrix::new(tp, fp, fn_, tn);
        GroupSlice {
            attribute: attr.to_string(),
            group: group.to_string(),
            size: cm.total(),
            size_ratio: 0.0,
            cm,
        }
    }

    #[test]
    fn slices_sum_to_global_confusion() {
        let y_true = vec![1, 1, 0, 0, 1, 0, 1, 0];
        let y_pred = vec![1, 0, 1, 0, 1, 1, 0, 0];
        let groups: Vec<String> = ["a", "a", "a", "a", "b", "b", "b", "b"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let slices = slice_by_group(&y_true, &y_pred, &groups, "g").unwrap();
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0].size, 4);
        assert_eq!(slices[1].size, 4);
        let sum = slices
            .iter()
            .fold(ConfusionMatrix::default(), |acc, s| acc.add(&s.cm));
        assert_eq!(sum, confusion(&y_true, &y_pred).unwrap());
    }

    #[test]
    fn single_group_slice_is_global() {
        let y_true = vec![1, 0, 1];
        let y_pred = vec![1, 1, 0];
        let groups = vec!["only".to_string(); 3];
        let slices = slice_by_group(&y_true, &y_pred, &groups, "g").unwrap();
        assert_eq!(slices.len(), 1);
        assert_eq!(slices[0].cm, confusion(&y_true, &y_pred).unwrap());
    }

    #[test]
    fn random_slices_match_filtered_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 500;
        let y_true: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
        let y_pred: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
        let groups: Vec<String> = (0..n).map(|_| format!("g{}", rng.gen_range(0..5))).collect();
        let slices = slice_by_group(&y_true, &y_pred, &groups, "attr").unwrap();
        for s in &slices {
            // brute-force recount restricted to this group's rows
            let mut want = ConfusionMatrix::default();
            for i in 0..n {
                if groups[i] != s.group {
                    continue;
                }
                match (y_true[i], y_pred[i]) {
                    (1, 1) => want.tp += 1,
                    (0, 1) => want.fp += 1,
                    (1, 0) => want.fn_ += 1,
                    _ => want.tn += 1,
                }
            }
            assert_eq!(s.cm, want, "group {}", s.group);
        }
    }

    #[test]
    fn rates_reproduce_published_medicare_row() {
        // Medicare holds 55% of all predicted positives; 40% of the group is
        // predicted positive.
        let s = slice("insurance", "Medicare", 100, 120, 30, 300);
        let rates = group_rates(&s, 400); // 220 of 400 predicted positives = 0.55
        assert_eq!(rates.ppr, Some(0.55));
        assert_eq!(rates.ppgr, Some(0.4));
    }

    #[test]
    fn zero_denominator_rates_are_undefined() {
        // all group members truly positive: fp + tn == 0
        let s = slice("a", "g", 5, 0, 2, 0);
        let rates = group_rates(&s, 10);
        assert_eq!(rates.fpr, None);
        assert!(rates.fnr.is_some());
    }

    #[test]
    fn ppr_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 300;
        let y_true: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
        let y_pred: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
        let groups: Vec<String> = (0..n).map(|_| format!("g{}", rng.gen_range(0..4))).collect();
        let slices = slice_by_group(&y_true, &y_pred, &groups, "attr").unwrap();
        let total: u64 = slices.iter().map(|s| s.cm.predicted_positive()).sum();
        assert!(total > 0);
        let sum: f64 = slices
            .iter()
            .filter_map(|s| group_rates(s, total).ppr)
            .sum();
        assert!((sum - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn published_table_ppr_column_rounds_to_one() {
        // the published insurance PPR column: 0.01 + 0.09 + 0.55 + 0.34 + 0
        let sum = 0.01 + 0.09 + 0.55 + 0.34 + 0.0;
        assert!((sum - 0.99f64).abs() < 1e-12);
        assert!((sum - 1.0f64).abs() < 0.015);
    }

    #[test]
    fn largest_group_reference_matches_published_sizes() {
        let slices = vec![
            slice("insurance", "Government", 1, 1, 1, 77),   // 80
            slice("insurance", "Medicaid", 4, 4, 4, 228),    // 240
            slice("insurance", "Medicare", 40, 40, 8, 772),  // 860
            slice("insurance", "Private", 30, 30, 10, 710),  // 780
            slice("insurance", "Self pay", 1, 1, 0, 38),     // 40
        ];
        assert_eq!(
            select_reference(&slices, &ReferenceRule::LargestGroup).unwrap(),
            "Medicare"
        );
    }

    #[test]
    fn gender_majority_is_male() {
        let slices = vec![
            slice("gender", "F", 10, 10, 10, 400), // 430
            slice("gender", "M", 20, 20, 10, 520), // 570
        ];
        assert_eq!(
            select_reference(&slices, &ReferenceRule::LargestGroup).unwrap(),
            "M"
        );
    }

    #[test]
    fn fixed_reference_overrides_sizes() {
        let slices = vec![
            slice("ethnicity", "Black", 50, 50, 10, 400),
            slice("ethnicity", "White", 5, 5, 1, 40),
        ];
        let rule = ReferenceRule::Fixed(BTreeMap::from([(
            "ethnicity".to_string(),
            "White".to_string(),
        )]));
        assert_eq!(select_reference(&slices, &rule).unwrap(), "White");

        let rule = ReferenceRule::Fixed(BTreeMap::from([(
            "ethnicity".to_string(),
            "Martian".to_string(),
        )]));
        assert!(matches!(
            select_reference(&slices, &rule),
            Err(AuditError::UnknownReference { .. })
        ));
    }

    fn rates_map(pairs: &[(&str, GroupRates)]) -> BTreeMap<String, GroupRates> {
        pairs
            .iter()
            .map(|(g, r)| (g.to_string(), *r))
            .collect()
    }

    fn only(v: f64) -> GroupRates {
        GroupRates {
            ppr: Some(v),
            ppgr: Some(v),
            fpr: Some(v),
            fnr: Some(v),
        }
    }

    #[test]
    fn published_disparity_multipliers() {
        let cfg = AuditConfig::default();
        // (metric, group rate, reference rate, quoted multiplier, passes)
        let cases = [
            (DisparityMetric::EqualParity, 0.09, 0.55, 0.1636, false),
            (DisparityMetric::EqualParity, 0.35, 0.65, 0.5385, false),
            (DisparityMetric::ProportionalParity, 0.25, 0.35, 0.7143, false),
            (DisparityMetric::FalsePositiveRateParity, 0.27, 0.35, 0.7714, false),
            (DisparityMetric::FalseNegativeRateParity, 0.12, 0.07, 1.7143, false),
        ];
        for (metric, g, r, want, pass) in cases {
            let map = rates_map(&[("grp", only(g)), ("ref", only(r))]);
            let recs = disparity(&map, "ref", metric, &cfg, "a").unwrap();
            let rec = recs.iter().find(|x| x.group == "grp").unwrap();
            let ratio = rec.ratio.unwrap();
            assert!((ratio - want).abs() < 1e-4, "{metric:?}: {ratio} vs {want}");
            assert_eq!(rec.verdict == Verdict::Pass, pass, "{metric:?}");
        }
    }

    #[test]
    fn reference_ratio_is_exactly_one_and_passes() {
        let cfg = AuditConfig::default();
        let map = rates_map(&[("ref", only(0.37)), ("g", only(0.36))]);
        for metric in DisparityMetric::ALL {
            let recs = disparity(&map, "ref", metric, &cfg, "a").unwrap();
            let rec = recs.iter().find(|x| x.group == "ref").unwrap();
            assert_eq!(rec.ratio, Some(1.0));
            assert_eq!(rec.verdict, Verdict::Pass);
        }
    }

    #[test]
    fn band_boundaries() {
        let cfg = AuditConfig::default();
        let check = |g: f64, r: f64, want: Verdict| {
            let map = rates_map(&[("grp", only(g)), ("ref", only(r))]);
            let recs =
                disparity(&map, "ref", DisparityMetric::EqualParity, &cfg, "a").unwrap();
            let rec = recs.iter().find(|x| x.group == "grp").unwrap();
            assert_eq!(rec.verdict, want, "ratio {:?}", rec.ratio);
        };
        check(0.4, 0.5, Verdict::Pass); // 0.8 exactly
        check(0.5, 0.4, Verdict::Pass); // 1.25 exactly
        check(0.799, 1.0, Verdict::Fail);
        check(1.251, 1.0, Verdict::Fail);
    }

    #[test]
    fn zero_reference_rate_is_indeterminate() {
        let cfg = AuditConfig::default();
        let map = rates_map(&[("grp", only(0.1)), ("ref", only(0.0))]);
        let recs = disparity(&map, "ref", DisparityMetric::FalseNegativeRateParity, &cfg, "a")
            .unwrap();
        let rec = recs.iter().find(|x| x.group == "grp").unwrap();
        assert_eq!(rec.verdict, Verdict::Indeterminate);
        assert_eq!(rec.ratio, None);
        // the reference itself still passes with ratio 1
        let refr = recs.iter().find(|x| x.group == "ref").unwrap();
        assert_eq!(refr.ratio, Some(1.0));
    }

    #[test]
    fn one_sided_band_passes_lower_error_rates() {
        let cfg = AuditConfig {
            one_sided_error_rates: true,
            ..AuditConfig::default()
        };
        let map = rates_map(&[("grp", only(0.05)), ("ref", only(0.4))]);
        let recs = disparity(&map, "ref", DisparityMetric::FalsePositiveRateParity, &cfg, "a")
            .unwrap();
        assert_eq!(
            recs.iter().find(|x| x.group == "grp").unwrap().verdict,
            Verdict::Pass
        );
        // EP stays two-sided
        let recs = disparity(&map, "ref", DisparityMetric::EqualParity, &cfg, "a").unwrap();
        assert_eq!(
            recs.iter().find(|x| x.group == "grp").unwrap().verdict,
            Verdict::Fail
        );
    }

    fn two_group_data() -> (Vec<u8>, Vec<u8>, BTreeMap<String, Vec<String>>) {
        // perfectly symmetric groups with identical predictions
        let mut y_true = Vec::new();
        let mut y_pred = Vec::new();
        let mut groups = Vec::new();
        for g in ["a", "b"] {
            for (t, p, k) in [(1, 1, 6), (0, 1, 2), (1, 0, 2), (0, 0, 10)] {
                for _ in 0..k {
                    y_true.push(t);
                    y_pred.push(p);
                    groups.push(g.to_string());
                }
            }
        }
        let cols = BTreeMap::from([("grp".to_string(), groups)]);
        (y_true, y_pred, cols)
    }

    #[test]
    fn symmetric_groups_pass_everything() {
        let (y_true, y_pred, cols) = two_group_data();
        let cfg = AuditConfig {
            sensitive_attributes: vec!["grp".to_string()],
            ..AuditConfig::default()
        };
        let summary = run_audit(&y_true, &y_pred, &cols, &cfg).unwrap();
        assert_eq!(summary.overall, Verdict::Pass);
        for rec in &summary.attributes[0].disparities {
            assert_eq!(rec.verdict, Verdict::Pass);
            assert_eq!(rec.ratio, Some(1.0));
        }
    }

    #[test]
    fn small_groups_are_suppressed_not_counted() {
        let mut y_true = vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
        let mut y_pred = vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
        let mut groups = vec!["big".to_string(); 12];
        // 3-member group that would fail every comparison
        y_true.extend([0, 0, 0]);
        y_pred.extend([1, 1, 1]);
        groups.extend(["tiny".to_string(), "tiny".into(), "tiny".into()]);
        let cols = BTreeMap::from([("grp".to_string(), groups)]);
        let cfg = AuditConfig {
            sensitive_attributes: vec!["grp".to_string()],
            min_group_size: 10,
            ..AuditConfig::default()
        };
        let summary = run_audit(&y_true, &y_pred, &cols, &cfg).unwrap();
        assert_eq!(summary.attributes[0].suppressed_groups, vec!["tiny"]);
        assert_ne!(summary.overall, Verdict::Fail);
        let fprp = summary.records("grp", DisparityMetric::FalsePositiveRateParity);
        assert!(fprp["tiny"].suppressed);
    }

    #[test]
    fn missing_attribute_errors() {
        let (y_true, y_pred, cols) = two_group_data();
        let cfg = AuditConfig {
            sensitive_attributes: vec!["nope".to_string()],
            ..AuditConfig::default()
        };
        assert!(matches!(
            run_audit(&y_true, &y_pred, &cols, &cfg),
            Err(AuditError::MissingAttribute(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn renaming_and_permutation_invariance(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 120;
            let y_true: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            let y_pred: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            let groups: Vec<String> = (0..n).map(|_| format!("g{}", rng.gen_range(0..3))).collect();
            let cols = BTreeMap::from([("a".to_string(), groups.clone())]);
            let cfg = AuditConfig {
                sensitive_attributes: vec!["a".to_string()],
                min_group_size: 1,
                ..AuditConfig::default()
            };
            let base = run_audit(&y_true, &y_pred, &cols, &cfg).unwrap();

            // joint row permutation
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let t: Vec<u8> = order.iter().map(|&i| y_true[i]).collect();
            let p: Vec<u8> = order.iter().map(|&i| y_pred[i]).collect();
            let g: Vec<String> = order.iter().map(|&i| groups[i].clone()).collect();
            let cols2 = BTreeMap::from([("a".to_string(), g)]);
            let permuted = run_audit(&t, &p, &cols2, &cfg).unwrap();
            prop_assert_eq!(&base, &permuted);

            // order-preserving bijective rename: g0->h0 etc. keeps sort order
            let renamed: Vec<String> = groups.iter().map(|s| s.replace('g', "h")).collect();
            let cols3 = BTreeMap::from([("a".to_string(), renamed)]);
            let r = run_audit(&y_true, &y_pred, &cols3, &cfg).unwrap();
            for (a, b) in base.attributes[0].disparities.iter().zip(&r.attributes[0].disparities) {
                prop_assert_eq!(a.ratio, b.ratio);
                prop_assert_eq!(a.verdict, b.verdict);
            }
            prop_assert_eq!(base.overall, r.overall);
        }

        #[test]
        fn duplicating_rows_preserves_rates_and_verdicts(seed in any::<u64>(), k in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 60;
            let y_true: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            let y_pred: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            let groups: Vec<String> = (0..n).map(|_| format!("g{}", rng.gen_range(0..3))).collect();
            let cols = BTreeMap::from([("a".to_string(), groups.clone())]);
            let cfg = AuditConfig {
                sensitive_attributes: vec!["a".to_string()],
                min_group_size: 1,
                ..AuditConfig::default()
            };
            let base = run_audit(&y_true, &y_pred, &cols, &cfg).unwrap();

            let rep = |v: &Vec<u8>| -> Vec<u8> { v.iter().cycle().take(n * k).cloned().collect() };
            let g: Vec<String> = groups.iter().cycle().take(n * k).cloned().collect();
            let cols2 = BTreeMap::from([("a".to_string(), g)]);
            let scaled = run_audit(&rep(&y_true), &rep(&y_pred), &cols2, &cfg).unwrap();

            prop_assert_eq!(base.overall, scaled.overall);
            for (a, b) in base.attributes[0].groups.iter().zip(&scaled.attributes[0].groups) {
                prop_assert_eq!(&a.group, &b.group);
                prop_assert_eq!(b.size, a.size * k as u64);
                prop_assert_eq!(a.rates, b.rates);
            }
            for (a, b) in base.attributes[0].disparities.iter().zip(&scaled.attributes[0].disparities) {
                prop_assert_eq!(a.ratio, b.ratio);
                prop_assert_eq!(a.verdict, b.verdict);
            }
        }
    }
}
