//! Study-level data model and conversion of raw inputs into
//! `(estimate, standard error)` pairs on the analysis scale.
//!
//! Two input shapes are supported: raw 2x2 tables (event counts and arm
//! sizes) and reported point estimates with a 95% interval. Both end up as
//! a [`StudySummary`]; a [`Dataset`] is the ordered collection that every
//! inference routine consumes.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::InputError;

/// Default divisor applied to the length of a reported 95% interval to
/// recover a standard error.
pub const DEFAULT_CI_DIVISOR: f64 = 4.0;

/// Haldane continuity correction added to every cell of a table with a zero cell.
pub const CONTINUITY_CORRECTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectMeasure {
    LogRelativeRisk,
    RiskDifference,
    LogHazardRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackTransform {
    Exp,
    Identity,
}

impl BackTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            BackTransform::Exp => x.exp(),
            BackTransform::Identity => x,
        }
    }
}

impl EffectMeasure {
    pub fn back_transform(self) -> BackTransform {
        match self {
            EffectMeasure::LogRelativeRisk | EffectMeasure::LogHazardRatio => BackTransform::Exp,
            EffectMeasure::RiskDifference => BackTransform::Identity,
        }
    }

    /// Whether the measure is the log of a ratio (forest plots use a log axis).
    pub fn is_ratio(self) -> bool {
        self.back_transform() == BackTransform::Exp
    }

    /// Value of the measure under no treatment effect, on the analysis scale.
    pub fn null_value(self) -> f64 {
        0.0
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EffectMeasure::LogRelativeRisk => "log-rr",
            EffectMeasure::RiskDifference => "rd",
            EffectMeasure::LogHazardRatio => "log-hr",
        }
    }
}

impl fmt::Display for EffectMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EffectMeasure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "log-rr" | "log-relative-risk" | "rr" => Ok(EffectMeasure::LogRelativeRisk),
            "rd" | "risk-difference" => Ok(EffectMeasure::RiskDifference),
            "log-hr" | "log-hazard-ratio" | "hr" => Ok(EffectMeasure::LogHazardRatio),
            other => Err(format!("unknown measure `{other}` (expected log-rr, rd or log-hr)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoByTwoTable {
    pub study_id: String,
    pub events_trt: u64,
    pub n_trt: u64,
    pub events_ctl: u64,
    pub n_ctl: u64,
}

impl TwoByTwoTable {
    pub fn new(
        study_id: impl Into<String>,
        events_trt: u64,
        n_trt: u64,
        events_ctl: u64,
        n_ctl: u64,
    ) -> Result<Self, InputError> {
        let t = TwoByTwoTable {
            study_id: study_id.into(),
            events_trt,
            n_trt,
            events_ctl,
            n_ctl,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), InputError> {
        if self.n_trt == 0 || self.n_ctl == 0 {
            return Err(InputError::Invalid(format!(
                "study `{}`: arm sizes must be at least 1",
                self.study_id
            )));
        }
        if self.events_trt > self.n_trt || self.events_ctl > self.n_ctl {
            return Err(InputError::Invalid(format!(
                "study `{}`: event count exceeds arm size",
                self.study_id
            )));
        }
        Ok(())
    }

    fn has_zero_cell(&self) -> bool {
        self.events_trt == 0
            || self.events_trt == self.n_trt
            || self.events_ctl == 0
            || self.events_ctl == self.n_ctl
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummarySource {
    RawTable,
    ReportedCi,
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub study_id: String,
    pub theta_hat: f64,
    pub sigma_hat: f64,
    pub source: SummarySource,
}

impl StudySummary {
    /// Summary supplied directly on the analysis scale.
    pub fn direct(study_id: impl Into<String>, theta_hat: f64, sigma_hat: f64) -> Self {
        StudySummary {
            study_id: study_id.into(),
            theta_hat,
            sigma_hat,
            source: SummarySource::Direct,
        }
    }
}

/// Outcome of summarising a 2x2 table.
#[derive(Debug, Clone, PartialEq)]
pub enum TableOutcome {
    Summary(StudySummary),
    Excluded { study_id: String, reason: String },
}

/// Convert a 2x2 table into an effect estimate and standard error.
///
/// Tables with no events in either arm are excluded. Any other table with a
/// zero cell has 0.5 added to all four cells before the estimate is formed.
pub fn summarize_table(t: &TwoByTwoTable, measure: EffectMeasure) -> Result<TableOutcome, InputError> {
    if measure == EffectMeasure::LogHazardRatio {
        return Err(InputError::Invalid(
            "log hazard ratios cannot be computed from 2x2 tables".into(),
        ));
    }
    if t.events_trt == 0 && t.events_ctl == 0 {
        return Ok(TableOutcome::Excluded {
            study_id: t.study_id.clone(),
            reason: "double-zero".into(),
        });
    }
    let (mut x1, mut n1, mut x0, mut n0) = (
        t.events_trt as f64,
        t.n_trt as f64,
        t.events_ctl as f64,
        t.n_ctl as f64,
    );
    if t.has_zero_cell() {
        x1 += CONTINUITY_CORRECTION;
        x0 += CONTINUITY_CORRECTION;
        n1 += 2.0 * CONTINUITY_CORRECTION;
        n0 += 2.0 * CONTINUITY_CORRECTION;
    }
    let (p1, p0) = (x1 / n1, x0 / n0);
    let (theta_hat, sigma_hat) = match measure {
        EffectMeasure::LogRelativeRisk => (
            (p1 / p0).ln(),
            (1.0 / x1 - 1.0 / n1 + 1.0 / x0 - 1.0 / n0).max(0.0).sqrt(),
        ),
        EffectMeasure::RiskDifference => (
            p1 - p0,
            (p1 * (1.0 - p1) / n1 + p0 * (1.0 - p0) / n0).sqrt(),
        ),
        EffectMeasure::LogHazardRatio => unreachable!(),
    };
    Ok(TableOutcome::Summary(StudySummary {
        study_id: t.study_id.clone(),
        theta_hat,
        sigma_hat,
        source: SummarySource::RawTable,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportedScale {
    Ratio,
    Analysis,
}

impl FromStr for ReportedScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ratio" => Ok(ReportedScale::Ratio),
            "analysis" => Ok(ReportedScale::Analysis),
            other => Err(format!("unknown scale `{other}` (expected ratio or analysis)")),
        }
    }
}

/// Convert a reported estimate with a 95% interval to the analysis scale.
///
/// The standard error is the interval length on the analysis scale divided
/// by `divisor` (normally 4).
pub fn summarize_reported(
    study_id: impl Into<String>,
    est: f64,
    lo: f64,
    hi: f64,
    scale: ReportedScale,
    measure: EffectMeasure,
    divisor: f64,
) -> Result<StudySummary, InputError> {
    if !(est.is_finite() && lo.is_finite() && hi.is_finite()) || !(lo < est && est < hi) {
        return Err(InputError::Ordering { est, lo, hi });
    }
    if divisor.is_nan() || divisor <= 0.0 {
        return Err(InputError::Invalid(format!("ci divisor must be positive (got {divisor})")));
    }
    let (theta_hat, sigma_hat) = match scale {
        ReportedScale::Ratio => {
            if !measure.is_ratio() {
                return Err(InputError::Invalid(format!(
                    "ratio-scale input is incompatible with measure {measure}"
                )));
            }
            if lo <= 0.0 {
                return Err(InputError::NonPositiveRatio { est, lo, hi });
            }
            (est.ln(), (hi.ln() - lo.ln()) / divisor)
        }
        ReportedScale::Analysis => (est, (hi - lo) / divisor),
    };
    Ok(StudySummary {
        study_id: study_id.into(),
        theta_hat,
        sigma_hat,
        source: SummarySource::ReportedCi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub study_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    studies: Vec<StudySummary>,
    measure: EffectMeasure,
    exclusions: Vec<Exclusion>,
}

impl Dataset {
    pub fn new(
        studies: Vec<StudySummary>,
        measure: EffectMeasure,
        exclusions: Vec<Exclusion>,
    ) -> Result<Self, InputError> {
        if studies.is_empty() {
            return Err(InputError::Empty);
        }
        let mut seen = HashSet::new();
        for (i, s) in studies.iter().enumerate() {
            if !seen.insert(s.study_id.as_str()) {
                return Err(InputError::DuplicateStudy {
                    line: i + 1,
                    id: s.study_id.clone(),
                });
            }
            if !s.theta_hat.is_finite() || s.sigma_hat.is_nan() || s.sigma_hat < 0.0 || !s.sigma_hat.is_finite() {
                return Err(InputError::Invalid(format!(
                    "study `{}`: estimate must be finite and standard error non-negative",
                    s.study_id
                )));
            }
        }
        Ok(Dataset {
            studies,
            measure,
            exclusions,
        })
    }

    /// Build a dataset from parallel estimate / standard-error slices,
    /// naming studies `s1`, `s2`, ...
    pub fn from_pairs(thetas: &[f64], sigmas: &[f64], measure: EffectMeasure) -> Result<Self, InputError> {
        if thetas.len() != sigmas.len() {
            return Err(InputError::Invalid("estimate and standard-error lengths differ".into()));
        }
        let studies = thetas
            .iter()
            .zip(sigmas)
            .enumerate()
            .map(|(i, (&t, &s))| StudySummary::direct(format!("s{}", i + 1), t, s))
            .collect();
        Dataset::new(studies, measure, Vec::new())
    }

    /// Summarise a batch of tables, recording double-zero exclusions.
    pub fn from_tables(tables: &[TwoByTwoTable], measure: EffectMeasure) -> Result<Self, InputError> {
        let mut studies = Vec::with_capacity(tables.len());
        let mut exclusions = Vec::new();
        for t in tables {
            t.validate()?;
            match summarize_table(t, measure)? {
                TableOutcome::Summary(s) => studies.push(s),
                TableOutcome::Excluded { study_id, reason } => {
                    exclusions.push(Exclusion { study_id, reason })
                }
            }
        }
        Dataset::new(studies, measure, exclusions)
    }

    pub fn studies(&self) -> &[StudySummary] {
        &self.studies
    }

    pub fn measure(&self) -> EffectMeasure {
        self.measure
    }

    pub fn exclusions(&self) -> &[Exclusion] {
        &self.exclusions
    }

    pub fn k(&self) -> usize {
        self.studies.len()
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.studies.iter().map(|s| s.theta_hat).collect()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.studies.iter().map(|s| s.sigma_hat).collect()
    }

    /// Apply `theta -> a * theta + b`, `sigma -> a * sigma` (requires `a > 0`).
    pub fn affine(&self, a: f64, b: f64) -> Dataset {
        assert!(a > 0.0, "affine scale must be positive");
        let studies = self
            .studies
            .iter()
            .map(|s| StudySummary {
                study_id: s.study_id.clone(),
                theta_hat: a * s.theta_hat + b,
                sigma_hat: a * s.sigma_hat,
                source: s.source,
            })
            .collect();
        Dataset {
            studies,
            measure: self.measure,
            exclusions: self.exclusions.clone(),
        }
    }
}

const SUMMARY_HEADER: [&str; 5] = ["study_id", "estimate", "ci_lower", "ci_upper", "scale"];
const TABLE_HEADER: [&str; 5] = ["study_id", "events_trt", "n_trt", "events_ctl", "n_ctl"];

fn field<T: FromStr>(rec: &csv::StringRecord, idx: usize, line: usize, name: &str) -> Result<T, InputError> {
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse::<T>().map_err(|_| InputError::Parse {
        line,
        message: format!("field `{name}`: cannot parse `{raw}`"),
    })
}

/// Parse a CSV dataset in either the summary or the table schema.
pub fn parse_dataset(bytes: &[u8], measure: EffectMeasure, ci_divisor: f64) -> Result<Dataset, InputError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| InputError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<String> = header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    let is_summary = names == SUMMARY_HEADER;
    let is_table = names == TABLE_HEADER;
    if !is_summary && !is_table {
        return Err(InputError::UnknownHeader(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut studies = Vec::new();
    let mut exclusions = Vec::new();
    let mut seen = HashSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| InputError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 5 {
            return Err(InputError::Parse {
                line,
                message: format!("expected 5 fields, found {}", rec.len()),
            });
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(InputError::Parse {
                line,
                message: "empty study_id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(InputError::DuplicateStudy { line, id });
        }
        let at_line = |e: InputError| match e {
            InputError::Parse { .. } => e,
            other => InputError::Parse {
                line,
                message: other.to_string(),
            },
        };
        if is_summary {
            let est: f64 = field(&rec, 1, line, "estimate")?;
            let lo: f64 = field(&rec, 2, line, "ci_lower")?;
            let hi: f64 = field(&rec, 3, line, "ci_upper")?;
            let scale: ReportedScale = rec[4].parse().map_err(|m| InputError::Parse { line, message: m })?;
            studies.push(summarize_reported(id, est, lo, hi, scale, measure, ci_divisor).map_err(at_line)?);
        } else {
            let t = TwoByTwoTable {
                study_id: id,
                events_trt: field(&rec, 1, line, "events_trt")?,
                n_trt: field(&rec, 2, line, "n_trt")?,
                events_ctl: field(&rec, 3, line, "events_ctl")?,
                n_ctl: field(&rec, 4, line, "n_ctl")?,
            };
            t.validate().map_err(at_line)?;
            match summarize_table(&t, measure).map_err(at_line)? {
                TableOutcome::Summary(s) => studies.push(s),
                TableOutcome::Excluded { study_id, reason } => {
                    exclusions.push(Exclusion { study_id, reason })
                }
            }
        }
    }
    Dataset::new(studies, measure, exclusions)
}
