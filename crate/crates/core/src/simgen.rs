//! Random-effects scenario generators and Monte Carlo oracles for the true
//! percentiles of the induced effect distribution.
//!
//! Each study draws a pair of event rates `(P0, P1)` from the scenario,
//! then binomial event counts in each arm. The true effect is
//! `log(P1 / P0)` for `log-rr` and `P1 - P0` for `rd`.
//!
//! Variate order: a generator seeded with `seed` walks the studies in
//! order and, for each study, first draws the rate variates (two standard
//! normals for `logit_normal`, the three gamma variates `G1, G2, G3` for
//! `bivariate_beta`, nothing for `fixed`), then the control-arm binomial
//! count, then the treatment-arm binomial count.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::Deserialize;

use crate::effects::{EffectMeasure, TwoByTwoTable};
use crate::error::ConfigError;
use crate::inversion::sorted_percentile;
use crate::seeds;

pub const DEFAULT_ETA: [f64; 2] = [-3.56, -2.86];
pub const DEFAULT_SIGMA: [[f64; 2]; 2] = [[0.90, 0.62], [0.62, 1.10]];
/// Gamma shapes for (control numerator, treatment numerator, shared term).
pub const DEFAULT_SHAPES: [f64; 3] = [2.0, 8.0, 10.0];
pub const DEFAULT_RATES: [f64; 2] = [0.1, 0.2];
pub const DEFAULT_N_PER_ARM: u64 = 200;
pub const DEFAULT_ORACLE_DRAWS: usize = 10_000_000;
pub const DEFAULT_ORACLE_SEED: u64 = 20_100_301;

const TAG_ORACLE: u64 = 4;
const ORACLE_CHUNK: usize = 1 << 18;

/// Keys accepted in a scenario file.
pub const SCENARIO_KEYS: &[&str] = &["kind", "eta", "sigma", "shapes", "rates", "n_per_arm", "measure"];

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    LogitNormal { eta: [f64; 2], sigma: [[f64; 2]; 2] },
    BivariateBeta { shapes: [f64; 3] },
    Fixed { p0: f64, p1: f64 },
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::LogitNormal { .. } => "logit_normal",
            ScenarioKind::BivariateBeta { .. } => "bivariate_beta",
            ScenarioKind::Fixed { .. } => "fixed",
        }
    }
}

/// Per-arm sample sizes: one value for every study, or one per study.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SampleSizes {
    Constant(u64),
    PerStudy(Vec<u64>),
}

impl SampleSizes {
    fn get(&self, k: usize) -> Result<u64, ConfigError> {
        match self {
            SampleSizes::Constant(n) => Ok(*n),
            SampleSizes::PerStudy(v) => v.get(k).copied().ok_or_else(|| {
                ConfigError::Invalid(format!("n_per_arm lists {} sizes but study {} was requested", v.len(), k + 1))
            }),
        }
    }
}

impl fmt::Display for SampleSizes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSizes::Constant(n) => write!(f, "{n}"),
            SampleSizes::PerStudy(v) => {
                let parts: Vec<String> = v.iter().map(u64::to_string).collect();
                write!(f, "[{}]", parts.join(" "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub sample_sizes: SampleSizes,
    pub measure: EffectMeasure,
}

/// Raw scenario keys as read from a TOML file.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct ScenarioFile {
    pub kind: Option<String>,
    pub eta: Option<[f64; 2]>,
    pub sigma: Option<[[f64; 2]; 2]>,
    pub shapes: Option<[f64; 3]>,
    pub rates: Option<[f64; 2]>,
    pub n_per_arm: Option<SampleSizes>,
    pub measure: Option<String>,
}

impl ScenarioFile {
    /// Build a validated scenario, filling unspecified parameters with the
    /// defaults for the chosen kind.
    pub fn into_scenario(self) -> Result<Scenario, ConfigError> {
        let kind_name = self.kind.ok_or_else(|| ConfigError::Invalid("missing key `kind`".into()))?;
        let kind = match kind_name.as_str() {
            "logit_normal" => ScenarioKind::LogitNormal {
                eta: self.eta.unwrap_or(DEFAULT_ETA),
                sigma: self.sigma.unwrap_or(DEFAULT_SIGMA),
            },
            "bivariate_beta" => ScenarioKind::BivariateBeta {
                shapes: self.shapes.unwrap_or(DEFAULT_SHAPES),
            },
            "fixed" => {
                let [p0, p1] = self.rates.unwrap_or(DEFAULT_RATES);
                ScenarioKind::Fixed { p0, p1 }
            }
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown scenario kind `{other}` (expected logit_normal, bivariate_beta or fixed)"
                )))
            }
        };
        let measure = match self.measure {
            Some(m) => m.parse::<EffectMeasure>().map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => EffectMeasure::LogRelativeRisk,
        };
        let s = Scenario {
            kind,
            sample_sizes: self.n_per_arm.unwrap_or(SampleSizes::Constant(DEFAULT_N_PER_ARM)),
            measure,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Reject keys outside `allowed`.
pub(crate) fn check_keys(table: &toml::Table, allowed: &[&[&str]]) -> Result<(), ConfigError> {
    for key in table.keys() {
        if !allowed.iter().any(|set| set.contains(&key.as_str())) {
            return Err(ConfigError::Parse(format!("unknown key `{key}`")));
        }
    }
    Ok(())
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        check_keys(&table, &[SCENARIO_KEYS])?;
        let raw: ScenarioFile = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        raw.into_scenario()
    }

    pub fn logit_normal(eta: [f64; 2], sigma: [[f64; 2]; 2], n_per_arm: u64) -> Scenario {
        Scenario {
            kind: ScenarioKind::LogitNormal { eta, sigma },
            sample_sizes: SampleSizes::Constant(n_per_arm),
            measure: EffectMeasure::LogRelativeRisk,
        }
    }

    pub fn bivariate_beta(shapes: [f64; 3], n_per_arm: u64) -> Scenario {
        Scenario {
            kind: ScenarioKind::BivariateBeta { shapes },
            sample_sizes: SampleSizes::Constant(n_per_arm),
            measure: EffectMeasure::LogRelativeRisk,
        }
    }

    pub fn fixed(p0: f64, p1: f64, n_per_arm: u64) -> Scenario {
        Scenario {
            kind: ScenarioKind::Fixed { p0, p1 },
            sample_sizes: SampleSizes::Constant(n_per_arm),
            measure: EffectMeasure::LogRelativeRisk,
        }
    }

    pub fn with_measure(mut self, measure: EffectMeasure) -> Scenario {
        self.measure = measure;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.measure == EffectMeasure::LogHazardRatio {
            return Err(ConfigError::Invalid("simulated 2x2 tables support log-rr and rd only".into()));
        }
        match &self.kind {
            ScenarioKind::LogitNormal { eta, sigma } => {
                if eta.iter().any(|x| !x.is_finite()) {
                    return Err(ConfigError::Invalid("eta must be finite".into()));
                }
                cholesky(sigma)?;
            }
            ScenarioKind::BivariateBeta { shapes } => {
                if shapes.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                    return Err(ConfigError::Invalid(format!("gamma shapes must be positive (got {shapes:?})")));
                }
            }
            ScenarioKind::Fixed { p0, p1 } => {
                for r in [p0, p1] {
                    if !(*r > 0.0 && *r < 1.0) {
                        return Err(ConfigError::Invalid(format!("event rates must lie in (0, 1) (got {r})")));
                    }
                }
            }
        }
        let sizes = match &self.sample_sizes {
            SampleSizes::Constant(n) => vec![*n],
            SampleSizes::PerStudy(v) if v.is_empty() => {
                return Err(ConfigError::Invalid("n_per_arm list is empty".into()))
            }
            SampleSizes::PerStudy(v) => v.clone(),
        };
        if sizes.iter().any(|&n| n < 2) {
            return Err(ConfigError::Invalid("every n_per_arm must be at least 2".into()));
        }
        Ok(())
    }

    /// True effect for a pair of event rates.
    pub fn effect(&self, p0: f64, p1: f64) -> f64 {
        match self.measure {
            EffectMeasure::RiskDifference => p1 - p0,
            _ => (p1 / p0).ln(),
        }
    }

    /// Draw one `(P0, P1)` pair, consuming the scenario's rate variates.
    fn draw_rates<R: Rng>(&self, chol: &[[f64; 2]; 2], rng: &mut R) -> (f64, f64) {
        match &self.kind {
            ScenarioKind::LogitNormal { eta, .. } => {
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                let l0 = eta[0] + chol[0][0] * z0;
                let l1 = eta[1] + chol[1][0] * z0 + chol[1][1] * z1;
                (expit(l0), expit(l1))
            }
            ScenarioKind::BivariateBeta { shapes } => {
                let g: Vec<f64> = shapes
                    .iter()
                    .map(|&a| Gamma::new(a, 1.0).expect("validated shape").sample(rng))
                    .collect();
                (g[0] / (g[0] + g[2]), g[1] / (g[1] + g[2]))
            }
            ScenarioKind::Fixed { p0, p1 } => (*p0, *p1),
        }
    }

    fn chol(&self) -> Result<[[f64; 2]; 2], ConfigError> {
        match &self.kind {
            ScenarioKind::LogitNormal { sigma, .. } => cholesky(sigma),
            _ => Ok([[0.0; 2]; 2]),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kind={}", self.kind.name())?;
        match &self.kind {
            ScenarioKind::LogitNormal { eta, sigma } => write!(
                f,
                " eta=[{} {}] sigma=[[{} {}] [{} {}]]",
                eta[0], eta[1], sigma[0][0], sigma[0][1], sigma[1][0], sigma[1][1]
            )?,
            ScenarioKind::BivariateBeta { shapes } => {
                write!(f, " shapes=[{} {} {}]", shapes[0], shapes[1], shapes[2])?
            }
            ScenarioKind::Fixed { p0, p1 } => write!(f, " rates=[{p0} {p1}]")?,
        }
        write!(f, " n_per_arm={} measure={}", self.sample_sizes, self.measure)
    }
}

impl FromStr for Scenario {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::from_toml_str(s)
    }
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Lower Cholesky factor of a symmetric positive semi-definite 2x2 matrix.
/// A zero matrix is accepted and yields the degenerate distribution at `eta`.
fn cholesky(s: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2], ConfigError> {
    let bad = || ConfigError::Invalid(format!("covariance matrix {s:?} is not symmetric positive definite"));
    if s.iter().flatten().any(|x| !x.is_finite()) || (s[0][1] - s[1][0]).abs() > 1e-12 {
        return Err(bad());
    }
    if s[0][0] < 0.0 || s[1][1] < 0.0 {
        return Err(bad());
    }
    let l00 = s[0][0].sqrt();
    let l10 = if l00 > 0.0 {
        s[0][1] / l00
    } else if s[0][1] == 0.0 {
        0.0
    } else {
        return Err(bad());
    };
    let rem = s[1][1] - l10 * l10;
    if rem < -1e-12 * s[1][1].max(1.0) {
        return Err(bad());
    }
    Ok([[l00, 0.0], [l10, rem.max(0.0).sqrt()]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedMeta {
    pub tables: Vec<TwoByTwoTable>,
    /// Realised true effects, one per generated study.
    pub true_thetas: Vec<f64>,
}

/// Generate `k` studies from any scenario kind.
pub fn draw(k: usize, scenario: &Scenario, seed: u64) -> Result<SimulatedMeta, ConfigError> {
    scenario.validate()?;
    let chol = scenario.chol()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tables = Vec::with_capacity(k);
    let mut true_thetas = Vec::with_capacity(k);
    for i in 0..k {
        let n = scenario.sample_sizes.get(i)?;
        let (p0, p1) = scenario.draw_rates(&chol, &mut rng);
        let x0 = Binomial::new(n, p0).expect("rate in [0, 1]").sample(&mut rng);
        let x1 = Binomial::new(n, p1).expect("rate in [0, 1]").sample(&mut rng);
        tables.push(TwoByTwoTable {
            study_id: format!("sim{}", i + 1),
            events_trt: x1,
            n_trt: n,
            events_ctl: x0,
            n_ctl: n,
        });
        true_thetas.push(scenario.effect(p0, p1));
    }
    Ok(SimulatedMeta { tables, true_thetas })
}

fn require_kind(scenario: &Scenario, name: &str) -> Result<(), ConfigError> {
    if scenario.kind.name() == name {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!(
            "expected a {name} scenario, got {}",
            scenario.kind.name()
        )))
    }
}

pub fn draw_logit_normal(k: usize, scenario: &Scenario, seed: u64) -> Result<SimulatedMeta, ConfigError> {
    require_kind(scenario, "logit_normal")?;
    draw(k, scenario, seed)
}

pub fn draw_bivariate_beta(k: usize, scenario: &Scenario, seed: u64) -> Result<SimulatedMeta, ConfigError> {
    require_kind(scenario, "bivariate_beta")?;
    draw(k, scenario, seed)
}

pub fn draw_fixed(k: usize, scenario: &Scenario, seed: u64) -> Result<SimulatedMeta, ConfigError> {
    require_kind(scenario, "fixed")?;
    draw(k, scenario, seed)
}

/// Sorted oracle draws of the true effect, with their mean.
#[derive(Debug)]
pub struct OracleSample {
    pub sorted: Vec<f64>,
    pub mean: f64,
    pub draws: usize,
    pub seed: u64,
}

impl OracleSample {
    pub fn percentile(&self, p: f64) -> f64 {
        sorted_percentile(&self.sorted, p)
    }
}

type OracleCache = Mutex<HashMap<String, Arc<OracleSample>>>;

fn cache() -> &'static OracleCache {
    static CACHE: OnceLock<OracleCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Draw (or fetch from the process-wide cache) `draws` independent true
/// effects. Chunk `c` of the sample uses its own stream derived from
/// `seed`, so the result does not depend on the thread count.
pub fn oracle_sample(scenario: &Scenario, draws: usize, seed: u64) -> Result<Arc<OracleSample>, ConfigError> {
    scenario.validate()?;
    if draws == 0 {
        return Err(ConfigError::Invalid("oracle_draws must be positive".into()));
    }
    let key = format!("{:?}|{}|{draws}|{seed}", scenario.kind, scenario.measure);
    if let Some(hit) = cache().lock().expect("oracle cache").get(&key) {
        return Ok(Arc::clone(hit));
    }
    let chol = scenario.chol()?;
    let n_chunks = draws.div_ceil(ORACLE_CHUNK);
    let chunks: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let len = ORACLE_CHUNK.min(draws - c * ORACLE_CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, TAG_ORACLE, c as u64));
            (0..len)
                .map(|_| {
                    let (p0, p1) = scenario.draw_rates(&chol, &mut rng);
                    scenario.effect(p0, p1)
                })
                .collect()
        })
        .collect();
    let mut sorted: Vec<f64> = chunks.concat();
    let mean = sorted.iter().sum::<f64>() / draws as f64;
    sorted.par_sort_unstable_by(f64::total_cmp);
    let sample = Arc::new(OracleSample {
        sorted,
        mean,
        draws,
        seed,
    });
    cache().lock().expect("oracle cache").insert(key, Arc::clone(&sample));
    Ok(sample)
}

/// True `100p`-th percentile of the effect distribution. Exact for the
/// fixed scenario; otherwise the empirical percentile of the oracle sample.
pub fn true_percentile(scenario: &Scenario, p: f64, draws: usize, seed: u64) -> Result<f64, ConfigError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(ConfigError::Invalid(format!("percentile must lie in (0, 1) (got {p})")));
    }
    if let ScenarioKind::Fixed { p0, p1 } = scenario.kind {
        scenario.validate()?;
        return Ok(scenario.effect(p0, p1));
    }
    Ok(oracle_sample(scenario, draws, seed)?.percentile(p))
}

/// True mean of the effect distribution (exact for the fixed scenario).
pub fn true_mean(scenario: &Scenario, draws: usize, seed: u64) -> Result<f64, ConfigError> {
    if let ScenarioKind::Fixed { p0, p1 } = scenario.kind {
        scenario.validate()?;
        return Ok(scenario.effect(p0, p1));
    }
    Ok(oracle_sample(scenario, draws, seed)?.mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn rates(scenario: &Scenario, n: usize, seed: u64) -> Vec<(f64, f64)> {
        let chol = scenario.chol().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| scenario.draw_rates(&chol, &mut rng)).collect()
    }

    fn mean_and_se(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn degenerate_covariance_fixes_the_rates() {
        let s = Scenario::logit_normal(DEFAULT_ETA, [[0.0; 2]; 2], 200);
        let (e0, e1) = (1.0 / (1.0 + 3.56f64.exp()), 1.0 / (1.0 + 2.86f64.exp()));
        // the rounded figures 0.02767 / 0.05413 are only good to about 5e-5
        assert_abs_diff_eq!(e0, 0.02767, epsilon = 1e-4);
        assert_abs_diff_eq!(e1, 0.05413, epsilon = 1e-4);
        for (p0, p1) in rates(&s, 20, 3) {
            assert_abs_diff_eq!(p0, e0, epsilon = 1e-15);
            assert_abs_diff_eq!(p1, e1, epsilon = 1e-15);
        }
        let m = draw_logit_normal(6, &s, 9).unwrap();
        for t in &m.true_thetas {
            assert_abs_diff_eq!(*t, (e1 / e0).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn logit_means_match_eta() {
        let s = Scenario::logit_normal(DEFAULT_ETA, DEFAULT_SIGMA, 200);
        let r = rates(&s, 100_000, 11);
        let l0: Vec<f64> = r.iter().map(|x| logit(x.0)).collect();
        let l1: Vec<f64> = r.iter().map(|x| logit(x.1)).collect();
        let (m0, se0) = mean_and_se(&l0);
        let (m1, se1) = mean_and_se(&l1);
        assert!((m0 + 3.56).abs() < 3.0 * se0, "{m0} {se0}");
        assert!((m1 + 2.86).abs() < 3.0 * se1, "{m1} {se1}");
        // sample covariance near 0.62
        let cov = l0.iter().zip(&l1).map(|(a, b)| (a - m0) * (b - m1)).sum::<f64>() / (l0.len() as f64 - 1.0);
        assert!((cov - 0.62).abs() < 0.03, "cov {cov}");
    }

    #[test]
    fn beta_marginals_and_correlation() {
        let s = Scenario::bivariate_beta(DEFAULT_SHAPES, 200);
        let r = rates(&s, 100_000, 5);
        let p0: Vec<f64> = r.iter().map(|x| x.0).collect();
        let p1: Vec<f64> = r.iter().map(|x| x.1).collect();
        let (m0, se0) = mean_and_se(&p0);
        let (m1, se1) = mean_and_se(&p1);
        assert!((m0 - 2.0 / 12.0).abs() < 3.0 * se0, "{m0}");
        assert!((m1 - 8.0 / 18.0).abs() < 3.0 * se1, "{m1}");
        let cov: f64 = p0.iter().zip(&p1).map(|(a, b)| (a - m0) * (b - m1)).sum();
        assert!(cov > 0.0);
    }

    #[test]
    fn fixed_scenario() {
        let s = Scenario::fixed(0.1, 0.2, 200);
        let m = draw_fixed(10, &s, 1).unwrap();
        assert_eq!(m.tables.len(), 10);
        assert!(m.true_thetas.iter().all(|&t| (t - 2f64.ln()).abs() < 1e-15));
        for p in [0.1, 0.5, 0.9] {
            assert_eq!(true_percentile(&s, p, 10, 0).unwrap(), 2f64.ln());
        }
        let rd = s.clone().with_measure(EffectMeasure::RiskDifference);
        assert_abs_diff_eq!(true_percentile(&rd, 0.3, 10, 0).unwrap(), 0.1, epsilon = 1e-15);

        let big = Scenario::fixed(0.1, 0.2, 100_000);
        let d = crate::effects::Dataset::from_tables(&draw_fixed(20, &big, 2).unwrap().tables, big.measure).unwrap();
        assert!(d.thetas().iter().all(|t| (t - 2f64.ln()).abs() < 0.05));
    }

    #[test]
    fn generators_are_deterministic() {
        for s in [
            Scenario::logit_normal(DEFAULT_ETA, DEFAULT_SIGMA, 50),
            Scenario::bivariate_beta(DEFAULT_SHAPES, 50),
            Scenario::fixed(0.1, 0.2, 50),
        ] {
            assert_eq!(draw(15, &s, 42).unwrap(), draw(15, &s, 42).unwrap());
            assert_ne!(draw(15, &s, 42).unwrap().tables, draw(15, &s, 43).unwrap().tables);
        }
    }

    #[test]
    fn wrong_kind_and_invalid_parameters() {
        let s = Scenario::fixed(0.1, 0.2, 200);
        assert!(draw_logit_normal(3, &s, 0).is_err());
        assert!(draw_bivariate_beta(3, &s, 0).is_err());
        let bad = Scenario::logit_normal(DEFAULT_ETA, [[1.0, 2.0], [2.0, 1.0]], 200);
        assert!(matches!(draw(3, &bad, 0), Err(ConfigError::Invalid(_))));
        assert!(Scenario::bivariate_beta([2.0, 0.0, 1.0], 200).validate().is_err());
        assert!(Scenario::fixed(0.0, 0.2, 200).validate().is_err());
        assert!(Scenario::fixed(0.1, 0.2, 1).validate().is_err());
    }

    #[test]
    fn per_study_sample_sizes() {
        let mut s = Scenario::fixed(0.1, 0.2, 200);
        s.sample_sizes = SampleSizes::PerStudy(vec![10, 20, 30]);
        let m = draw(3, &s, 0).unwrap();
        assert_eq!(m.tables.iter().map(|t| t.n_ctl).collect::<Vec<_>>(), vec![10, 20, 30]);
        assert!(draw(4, &s, 0).is_err());
    }

    #[test]
    fn parse_scenario_file() {
        let s = Scenario::from_toml_str("kind = \"logit_normal\"\nn_per_arm = [20, 30]\nmeasure = \"rd\"\n").unwrap();
        assert_eq!(
            s.kind,
            ScenarioKind::LogitNormal {
                eta: DEFAULT_ETA,
                sigma: DEFAULT_SIGMA
            }
        );
        assert_eq!(s.sample_sizes, SampleSizes::PerStudy(vec![20, 30]));
        assert_eq!(s.measure, EffectMeasure::RiskDifference);
        let s = Scenario::from_toml_str("kind = \"fixed\"\nrates = [0.2, 0.3]").unwrap();
        assert_eq!(s.kind, ScenarioKind::Fixed { p0: 0.2, p1: 0.3 });
        assert_eq!(s.sample_sizes, SampleSizes::Constant(200));
        assert!(Scenario::from_toml_str("kind = \"gumbel\"").is_err());
        assert!(Scenario::from_toml_str("kind = \"fixed\"\nratez = [0.2, 0.3]").is_err());
        assert!(Scenario::from_toml_str("kind = ").is_err());
    }

    #[test]
    fn oracle_percentiles_are_monotone_and_cached() {
        let s = Scenario::bivariate_beta(DEFAULT_SHAPES, 200);
        let a = oracle_sample(&s, 50_000, 7).unwrap();
        let b = oracle_sample(&s, 50_000, 7).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let qs: Vec<f64> = [0.1, 0.25, 0.5, 0.75, 0.9].iter().map(|&p| true_percentile(&s, p, 50_000, 7).unwrap()).collect();
        assert!(qs.windows(2).all(|w| w[0] <= w[1]));
    }

    // Reference values from an independent 10^7-draw simulation of the
    // default scenarios (different generator, so agreement is up to MC error).
    #[test]
    fn oracle_matches_reference_values() {
        let ln = Scenario::logit_normal(DEFAULT_ETA, DEFAULT_SIGMA, 200);
        let tol = 5e-3;
        let o = |s: &Scenario, p| true_percentile(s, p, DEFAULT_ORACLE_DRAWS, DEFAULT_ORACLE_SEED).unwrap();
        assert_abs_diff_eq!(o(&ln, 0.5), 0.6594918291374987, epsilon = tol);
        assert_abs_diff_eq!(o(&ln, 0.25), 0.1060677217009585, epsilon = tol);
        assert_abs_diff_eq!(o(&ln, 0.75), 1.2075105861096107, epsilon = tol);
        assert_abs_diff_eq!(
            true_mean(&ln, DEFAULT_ORACLE_DRAWS, DEFAULT_ORACLE_SEED).unwrap(),
            0.6537894748065181,
            epsilon = tol
        );
        let bb = Scenario::bivariate_beta(DEFAULT_SHAPES, 200);
        assert_abs_diff_eq!(o(&bb, 0.5), 1.0666255969117415, epsilon = tol);
        assert_abs_diff_eq!(o(&bb, 0.25), 0.6548565101687146, epsilon = tol);
        assert_abs_diff_eq!(o(&bb, 0.75), 1.5764476333751698, epsilon = tol);
        assert_abs_diff_eq!(
            true_mean(&bb, DEFAULT_ORACLE_DRAWS, DEFAULT_ORACLE_SEED).unwrap(),
            1.1731819650937299,
            epsilon = tol
        );
    }
}
