//! Interval methods behind a common trait, looked up by name.
//!
//! The built-in registry holds `weighted`, `unweighted`, `dl` and `sj`.
//! Additional methods can be registered at runtime.

use crate::comparators::{dl_interval, sj_interval, MeanMethodResult};
use crate::effects::Dataset;
use crate::error::MethodError;
use crate::inversion::{
    check_query, invert_cells, invert_grid, point_estimate, Diagnostics, IntervalResult, InversionConfig,
    PercentileTest, TestKind,
};

pub trait IntervalMethod: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    /// Smallest number of studies the method accepts.
    fn min_studies(&self) -> usize {
        1
    }

    /// `false` for methods whose estimand is the mean rather than the
    /// requested percentile.
    fn targets_percentile(&self) -> bool {
        true
    }

    fn interval(
        &self,
        d: &Dataset,
        p: f64,
        alpha: f64,
        cfg: &InversionConfig,
    ) -> Result<IntervalResult, MethodError>;
}

/// Inversion of the coverage-weighted sign test.
#[derive(Debug, Clone, Copy, Default)]
pub struct WeightedSignTest;

impl IntervalMethod for WeightedSignTest {
    fn name(&self) -> &'static str {
        "weighted"
    }

    fn description(&self) -> &'static str {
        "coverage-weighted conditional sign test with resampled +-1 multipliers"
    }

    fn interval(&self, d: &Dataset, p: f64, alpha: f64, cfg: &InversionConfig) -> Result<IntervalResult, MethodError> {
        check_query(p, alpha)?;
        let test = PercentileTest::new(d, p, TestKind::Weighted, cfg)?;
        let (bounds, diag) = invert_grid(&test, alpha, cfg)?;
        let point = point_estimate(d, p, TestKind::Weighted);
        Ok(IntervalResult::assemble(self.name(), d, p, alpha, point, bounds, diag))
    }
}

/// Inversion of the plain sign test against the binomial lattice.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnweightedSignTest;

impl IntervalMethod for UnweightedSignTest {
    fn name(&self) -> &'static str {
        "unweighted"
    }

    fn description(&self) -> &'static str {
        "unweighted sign test (order-statistic interval)"
    }

    fn interval(&self, d: &Dataset, p: f64, alpha: f64, cfg: &InversionConfig) -> Result<IntervalResult, MethodError> {
        check_query(p, alpha)?;
        let test = PercentileTest::new(d, p, TestKind::Unweighted, cfg)?;
        let (bounds, diag) = invert_cells(&test, alpha, cfg.null.seed)?;
        let point = point_estimate(d, p, TestKind::Unweighted);
        Ok(IntervalResult::assemble(self.name(), d, p, alpha, point, bounds, diag))
    }
}

fn mean_result(
    name: &'static str,
    d: &Dataset,
    p: f64,
    alpha: f64,
    cfg: &InversionConfig,
    r: MeanMethodResult,
) -> IntervalResult {
    let diag = Diagnostics {
        grid_points: 0,
        refinements: 0,
        non_interval: false,
        empty: false,
        seed: cfg.null.seed,
        null_kind: None,
    };
    IntervalResult::assemble(name, d, p, alpha, r.mean_hat, (r.lower, r.upper), diag)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DerSimonianLaird;

impl IntervalMethod for DerSimonianLaird {
    fn name(&self) -> &'static str {
        "dl"
    }

    fn description(&self) -> &'static str {
        "DerSimonian-Laird interval for the mean (normal quantile)"
    }

    fn min_studies(&self) -> usize {
        2
    }

    fn targets_percentile(&self) -> bool {
        false
    }

    fn interval(&self, d: &Dataset, p: f64, alpha: f64, cfg: &InversionConfig) -> Result<IntervalResult, MethodError> {
        check_query(p, alpha)?;
        Ok(mean_result(self.name(), d, p, alpha, cfg, dl_interval(d, alpha)?))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SidikJonkman;

impl IntervalMethod for SidikJonkman {
    fn name(&self) -> &'static str {
        "sj"
    }

    fn description(&self) -> &'static str {
        "Sidik-Jonkman interval for the mean (t quantile)"
    }

    fn min_studies(&self) -> usize {
        2
    }

    fn targets_percentile(&self) -> bool {
        false
    }

    fn interval(&self, d: &Dataset, p: f64, alpha: f64, cfg: &InversionConfig) -> Result<IntervalResult, MethodError> {
        check_query(p, alpha)?;
        Ok(mean_result(self.name(), d, p, alpha, cfg, sj_interval(d, alpha)?))
    }
}

pub struct MethodRegistry {
    methods: Vec<Box<dyn IntervalMethod>>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl MethodRegistry {
    pub fn empty() -> Self {
        MethodRegistry { methods: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(WeightedSignTest));
        r.register(Box::new(UnweightedSignTest));
        r.register(Box::new(DerSimonianLaird));
        r.register(Box::new(SidikJonkman));
        r
    }

    /// Add a method, replacing any existing method of the same name.
    pub fn register(&mut self, method: Box<dyn IntervalMethod>) {
        match self.methods.iter().position(|m| m.name() == method.name()) {
            Some(i) => self.methods[i] = method,
            None => self.methods.push(method),
        }
    }

    pub fn get(&self, name: &str) -> Result<&dyn IntervalMethod, MethodError> {
        self.methods
            .iter()
            .find(|m| m.name() == name)
            .map(|m| m.as_ref())
            .ok_or_else(|| MethodError::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.iter().map(|m| m.name()).collect()
    }

    /// Position of a method in registration order.
    pub fn rank(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m.name() == name)
    }
}

/// Names of the built-in methods in registration order.
pub fn method_names() -> Vec<&'static str> {
    MethodRegistry::builtin().names()
}
