//! Coverage experiments: replicate a scenario, compute every requested
//! interval and aggregate empirical coverage levels (ECL) and median
//! interval lengths (ML).
//!
//! Replication `r` draws its data with seed `derive(base_seed, TAG_DATA, r)`
//! and its sign multipliers with `derive(base_seed, TAG_SIGNS, r)`, so
//! output does not depend on scheduling or the thread count.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Deserialize;

use crate::effects::Dataset;
use crate::error::{ConfigError, MethodError};
use crate::inversion::InversionConfig;
use crate::methods::MethodRegistry;
use crate::nulldist::{DEFAULT_EXACT_THRESHOLD, DEFAULT_RESAMPLES};
use crate::seeds::{self, TAG_DATA, TAG_SIGNS};
use crate::simgen::{self, check_keys, Scenario, ScenarioFile, DEFAULT_ORACLE_DRAWS, DEFAULT_ORACLE_SEED, SCENARIO_KEYS};
use crate::inversion::DEFAULT_GRID_POINTS;

/// Keys accepted in an experiment file in addition to the scenario keys.
pub const HARNESS_KEYS: &[&str] = &[
    "k",
    "reps",
    "level",
    "percentiles",
    "methods",
    "base_seed",
    "resamples",
    "exact_threshold",
    "grid_points",
    "oracle_draws",
    "oracle_seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub k: usize,
    pub reps: usize,
    pub level: f64,
    pub percentiles: Vec<f64>,
    pub methods: Vec<String>,
    pub base_seed: u64,
    pub resamples: usize,
    pub exact_threshold: usize,
    pub grid_points: usize,
    pub oracle_draws: usize,
    pub oracle_seed: u64,
}

#[derive(Debug, Deserialize)]
struct ExperimentFile {
    #[serde(flatten)]
    scenario: ScenarioFile,
    k: Option<usize>,
    reps: Option<usize>,
    level: Option<f64>,
    percentiles: Option<Vec<f64>>,
    methods: Option<Vec<String>>,
    base_seed: Option<u64>,
    resamples: Option<usize>,
    exact_threshold: Option<usize>,
    grid_points: Option<usize>,
    oracle_draws: Option<usize>,
    oracle_seed: Option<u64>,
}

impl ExperimentSpec {
    /// Spec with the defaults: 1000 replications, 95% level, the median,
    /// every built-in method.
    pub fn new(scenario: Scenario, k: usize) -> ExperimentSpec {
        ExperimentSpec {
            scenario,
            k,
            reps: 1000,
            level: 0.95,
            percentiles: vec![0.5],
            methods: MethodRegistry::builtin().names().iter().map(|s| s.to_string()).collect(),
            base_seed: 1,
            resamples: DEFAULT_RESAMPLES,
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
            grid_points: DEFAULT_GRID_POINTS,
            oracle_draws: DEFAULT_ORACLE_DRAWS,
            oracle_seed: DEFAULT_ORACLE_SEED,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<ExperimentSpec, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        check_keys(&table, &[SCENARIO_KEYS, HARNESS_KEYS])?;
        let raw: ExperimentFile = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let k = raw.k.ok_or_else(|| ConfigError::Invalid("missing key `k`".into()))?;
        let d = ExperimentSpec::new(raw.scenario.into_scenario()?, k);
        let spec = ExperimentSpec {
            reps: raw.reps.unwrap_or(d.reps),
            level: raw.level.unwrap_or(d.level),
            percentiles: raw.percentiles.unwrap_or(d.percentiles.clone()),
            methods: raw.methods.unwrap_or(d.methods.clone()),
            base_seed: raw.base_seed.unwrap_or(d.base_seed),
            resamples: raw.resamples.unwrap_or(d.resamples),
            exact_threshold: raw.exact_threshold.unwrap_or(d.exact_threshold),
            grid_points: raw.grid_points.unwrap_or(d.grid_points),
            oracle_draws: raw.oracle_draws.unwrap_or(d.oracle_draws),
            oracle_seed: raw.oracle_seed.unwrap_or(d.oracle_seed),
            ..d
        };
        spec.validate(&MethodRegistry::builtin())?;
        Ok(spec)
    }

    pub fn validate(&self, registry: &MethodRegistry) -> Result<(), ConfigError> {
        self.scenario.validate()?;
        if self.k == 0 {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        if self.reps == 0 {
            return Err(ConfigError::Invalid("reps must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(ConfigError::Invalid(format!("level must lie in (0, 1) (got {})", self.level)));
        }
        if self.percentiles.is_empty() || self.percentiles.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(ConfigError::Invalid("percentiles must be a non-empty list in (0, 1)".into()));
        }
        if self.methods.is_empty() {
            return Err(ConfigError::Invalid("no methods requested".into()));
        }
        if self.resamples == 0 || self.grid_points < 2 || self.oracle_draws == 0 {
            return Err(ConfigError::Invalid(
                "resamples and oracle_draws must be positive and grid_points at least 2".into(),
            ));
        }
        for name in &self.methods {
            let m = registry.get(name)?;
            if self.k < m.min_studies() {
                return Err(MethodError::TooFewStudies {
                    method: m.name(),
                    k: self.k,
                }
                .into());
            }
        }
        Ok(())
    }

    /// `key = value` lines describing every effective setting.
    pub fn describe(&self) -> Vec<String> {
        vec![
            format!("scenario = {}", self.scenario),
            format!("k = {}", self.k),
            format!("reps = {}", self.reps),
            format!("level = {}", self.level),
            format!("percentiles = {:?}", self.percentiles),
            format!("methods = {}", self.methods.join(",")),
            format!("base_seed = {}", self.base_seed),
            format!("resamples = {}", self.resamples),
            format!("exact_threshold = {}", self.exact_threshold),
            format!("grid_points = {}", self.grid_points),
            format!("oracle_draws = {}", self.oracle_draws),
            format!("oracle_seed = {}", self.oracle_seed),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub method: String,
    pub p: f64,
    pub k: usize,
    /// Fraction of scored replications whose interval contains `truth`.
    pub ecl: f64,
    /// Median length over scored replications with finite intervals.
    pub ml: f64,
    /// Replications in which the method produced an interval.
    pub reps_used: usize,
    /// Oracle value of the target percentile.
    pub truth: f64,
    /// For mean-targeting methods, coverage of the true mean.
    pub ecl_mean: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    covers: bool,
    covers_mean: bool,
    length: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn run_experiment(spec: &ExperimentSpec, registry: &MethodRegistry) -> Result<Vec<CoverageRow>, ConfigError> {
    spec.validate(registry)?;
    let methods: Vec<_> = spec.methods.iter().map(|n| registry.get(n)).collect::<Result<_, _>>()?;
    let truths: Vec<f64> = spec
        .percentiles
        .iter()
        .map(|&p| simgen::true_percentile(&spec.scenario, p, spec.oracle_draws, spec.oracle_seed))
        .collect::<Result<_, _>>()?;
    let truth_mean = if methods.iter().any(|m| !m.targets_percentile()) {
        simgen::true_mean(&spec.scenario, spec.oracle_draws, spec.oracle_seed)?
    } else {
        f64::NAN
    };
    let alpha = 1.0 - spec.level;
    let cells = methods.len() * spec.percentiles.len();

    // one Vec of per-cell outcomes per replication, in replication order
    let per_rep: Vec<Vec<Option<Outcome>>> = (0..spec.reps as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<Option<Outcome>>, ConfigError> {
            let meta = simgen::draw(spec.k, &spec.scenario, seeds::derive(spec.base_seed, TAG_DATA, r))?;
            let data = match Dataset::from_tables(&meta.tables, spec.scenario.measure) {
                Ok(d) => d,
                Err(_) => return Ok(vec![None; cells]),
            };
            let mut cfg = InversionConfig {
                grid_points: spec.grid_points,
                ..InversionConfig::default()
            };
            cfg.null.n_resamples = spec.resamples;
            cfg.null.exact_threshold = spec.exact_threshold;
            cfg.null.seed = seeds::derive(spec.base_seed, TAG_SIGNS, r);
            let mut out = Vec::with_capacity(cells);
            for m in &methods {
                for (&p, &truth) in spec.percentiles.iter().zip(&truths) {
                    out.push(m.interval(&data, p, alpha, &cfg).ok().map(|ci| Outcome {
                        covers: ci.contains(truth),
                        covers_mean: ci.contains(truth_mean),
                        length: ci.length(),
                    }));
                }
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(cells);
    for (mi, m) in methods.iter().enumerate() {
        for (pi, (&p, &truth)) in spec.percentiles.iter().zip(&truths).enumerate() {
            let cell = mi * spec.percentiles.len() + pi;
            let scored: Vec<Outcome> = per_rep.iter().filter_map(|o| o[cell]).collect();
            let n = scored.len();
            let frac = |f: fn(&Outcome) -> bool| {
                if n == 0 {
                    f64::NAN
                } else {
                    scored.iter().filter(|o| f(o)).count() as f64 / n as f64
                }
            };
            let lengths: Vec<f64> = scored.iter().map(|o| o.length).filter(|l| l.is_finite()).collect();
            rows.push(CoverageRow {
                method: m.name().to_string(),
                p,
                k: spec.k,
                ecl: frac(|o| o.covers),
                ml: median(lengths),
                reps_used: n,
                truth,
                ecl_mean: (!m.targets_percentile()).then(|| frac(|o| o.covers_mean)),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}` (expected csv or markdown)")),
        }
    }
}

fn pct(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{:.0}%", 100.0 * x)
    }
}

/// Render coverage rows. CSV keeps full-precision fractions; markdown uses
/// percentages with no decimals and lengths with two.
pub fn write_report(rows: &[CoverageRow], format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["method", "p", "K", "ECL", "ML", "reps", "truth", "ECL_mean"])
                .expect("in-memory write");
            for r in rows {
                w.write_record([
                    r.method.clone(),
                    r.p.to_string(),
                    r.k.to_string(),
                    format!("{:.4}", r.ecl),
                    format!("{:.6}", r.ml),
                    r.reps_used.to_string(),
                    format!("{:.6}", r.truth),
                    r.ecl_mean.map(|e| format!("{e:.4}")).unwrap_or_default(),
                ])
                .expect("in-memory write");
            }
            w.into_inner().expect("in-memory write")
        }
        ReportFormat::Markdown => {
            let mut s = String::from("| method | p | K | ECL | ML | reps |\n|---|---|---|---|---|---|\n");
            for r in rows {
                let mut ecl = pct(r.ecl);
                if let Some(m) = r.ecl_mean {
                    let _ = write!(ecl, " (mean {})", pct(m));
                }
                let _ = writeln!(s, "| {} | {} | {} | {} | {:.2} | {} |", r.method, r.p, r.k, ecl, r.ml, r.reps_used);
            }
            s.into_bytes()
        }
    }
}
