//! P-values, test inversion and point estimates for a percentile of the
//! random-effects distribution.
//!
//! Weighted intervals are found by scanning a grid of candidate values,
//! then bisecting between the outermost non-rejected grid points and their
//! rejected neighbours. The unweighted sign statistic is piecewise constant
//! between the ordered estimates, so its interval is found exactly by testing
//! one point per cell.

use rayon::prelude::*;

use crate::effects::Dataset;
use crate::error::MethodError;
use crate::nulldist::{self, null_binomial, tail_prob, NullConfig, NullEngine, NullLaw, Side, Tails};
use crate::seeds;
use crate::statistic::{centered_coverage, statistic_unweighted, statistic_weighted};

pub const DEFAULT_GRID_POINTS: usize = 512;
pub const DEFAULT_RANGE_MULTIPLIER: f64 = 6.0;

/// Which tails form the p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sidedness {
    /// Doubled smaller tail, capped at 1.
    TwoSided,
    /// Only large values of the statistic reject: an upper confidence bound.
    UpperBound,
    /// Only small values of the statistic reject: a lower confidence bound.
    LowerBound,
}

impl Sidedness {
    pub fn pvalue(self, tails: Tails) -> f64 {
        match self {
            Sidedness::TwoSided => tails.two_sided(),
            Sidedness::UpperBound => tails.ge,
            Sidedness::LowerBound => tails.le,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sidedness::TwoSided => "two-sided",
            Sidedness::UpperBound => "upper",
            Sidedness::LowerBound => "lower",
        }
    }
}

/// How multipliers are drawn across candidate values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resampling {
    /// One multiplier matrix shared by every candidate.
    Common,
    /// A new matrix per candidate, seeded from the candidate value.
    Fresh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    pub grid_points: usize,
    pub range_multiplier: f64,
    /// Stop bisecting once the bracket is this narrow; `0` bisects until the
    /// bracket endpoints are adjacent floating-point numbers.
    pub refine_tol: f64,
    pub sidedness: Sidedness,
    pub resampling: Resampling,
    pub null: NullConfig,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            grid_points: DEFAULT_GRID_POINTS,
            range_multiplier: DEFAULT_RANGE_MULTIPLIER,
            refine_tol: 0.0,
            sidedness: Sidedness::TwoSided,
            resampling: Resampling::Common,
            null: NullConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub grid_points: usize,
    pub refinements: usize,
    /// The non-rejected set was not connected; the reported interval is its hull.
    pub non_interval: bool,
    /// Nothing was accepted; the interval collapses to the best-supported value.
    pub empty: bool,
    pub seed: u64,
    pub null_kind: Option<nulldist::NullKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalResult {
    pub method: &'static str,
    pub p: f64,
    pub level: f64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub point_bt: f64,
    pub lower_bt: f64,
    pub upper_bt: f64,
    pub diagnostics: Diagnostics,
}

impl IntervalResult {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub(crate) fn assemble(
        method: &'static str,
        d: &Dataset,
        p: f64,
        alpha: f64,
        point: f64,
        bounds: (f64, f64),
        diagnostics: Diagnostics,
    ) -> IntervalResult {
        let bt = d.measure().back_transform();
        IntervalResult {
            method,
            p,
            level: 1.0 - alpha,
            point,
            lower: bounds.0,
            upper: bounds.1,
            point_bt: bt.apply(point),
            lower_bt: bt.apply(bounds.0),
            upper_bt: bt.apply(bounds.1),
            diagnostics,
        }
    }
}

/// p-value curve over a grid of candidate values.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueCurve {
    pub mu_grid: Vec<f64>,
    pub pvals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    Weighted,
    Unweighted,
}

pub(crate) fn check_query(p: f64, alpha: f64) -> Result<(), MethodError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MethodError::InvalidArgument(format!("percentile level {p} outside (0, 1)")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MethodError::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Evaluates the p-value of one test at arbitrary candidate values.
pub struct PercentileTest<'a> {
    data: &'a Dataset,
    p: f64,
    sidedness: Sidedness,
    inner: TestInner,
}

enum TestInner {
    Unweighted(NullLaw),
    Weighted(Box<dyn NullEngine>),
    WeightedFresh(NullConfig),
}

impl<'a> PercentileTest<'a> {
    pub fn new(
        data: &'a Dataset,
        p: f64,
        kind: TestKind,
        cfg: &InversionConfig,
    ) -> Result<PercentileTest<'a>, MethodError> {
        let inner = match (kind, cfg.resampling) {
            (TestKind::Unweighted, _) => TestInner::Unweighted(null_binomial(data.k(), p)?),
            (TestKind::Weighted, Resampling::Common) => {
                TestInner::Weighted(nulldist::build_engine(data.k(), p, &cfg.null)?)
            }
            (TestKind::Weighted, Resampling::Fresh) => {
                // validates the engine name up front
                nulldist::build_engine(data.k(), p, &NullConfig {
                    n_resamples: 1,
                    ..cfg.null.clone()
                })?;
                TestInner::WeightedFresh(cfg.null.clone())
            }
        };
        Ok(PercentileTest {
            data,
            p,
            sidedness: cfg.sidedness,
            inner,
        })
    }

    /// Use an existing engine (for example one sharing a multiplier matrix).
    pub fn with_engine(data: &'a Dataset, p: f64, sidedness: Sidedness, engine: Box<dyn NullEngine>) -> Self {
        PercentileTest {
            data,
            p,
            sidedness,
            inner: TestInner::Weighted(engine),
        }
    }

    pub fn null_kind(&self) -> Option<nulldist::NullKind> {
        match &self.inner {
            TestInner::Unweighted(_) => Some(nulldist::NullKind::BinomialLattice),
            TestInner::Weighted(e) => Some(e.kind()),
            TestInner::WeightedFresh(_) => None,
        }
    }

    pub fn tails(&self, mu0: f64) -> Result<Tails, MethodError> {
        match &self.inner {
            TestInner::Unweighted(law) => {
                let t = statistic_unweighted(self.data, mu0).value;
                Ok(Tails {
                    le: tail_prob(law, t, Side::Le),
                    ge: tail_prob(law, t, Side::Ge),
                })
            }
            TestInner::Weighted(engine) => {
                let s = statistic_weighted(self.data, mu0);
                engine.tails(&s.weights, &s.signs)
            }
            TestInner::WeightedFresh(cfg) => {
                let s = statistic_weighted(self.data, mu0);
                let local = NullConfig {
                    seed: seeds::derive(cfg.seed, seeds::TAG_FRESH, mu0.to_bits()),
                    ..cfg.clone()
                };
                nulldist::build_engine(self.data.k(), self.p, &local)?.tails(&s.weights, &s.signs)
            }
        }
    }

    pub fn pvalue(&self, mu0: f64) -> Result<f64, MethodError> {
        Ok(self.sidedness.pvalue(self.tails(mu0)?))
    }

    pub fn curve(&self, mu_grid: Vec<f64>) -> Result<PValueCurve, MethodError> {
        let pvals = mu_grid
            .par_iter()
            .map(|&m| self.pvalue(m))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PValueCurve { mu_grid, pvals })
    }
}

/// p-value of the percentile test at `mu0`. For the weighted test an engine
/// may be supplied; otherwise one is built from the default configuration.
pub fn pvalue(
    d: &Dataset,
    p: f64,
    mu0: f64,
    kind: TestKind,
    engine: Option<Box<dyn NullEngine>>,
) -> Result<f64, MethodError> {
    check_query(p, 0.5)?;
    let test = match (kind, engine) {
        (TestKind::Weighted, Some(e)) => PercentileTest::with_engine(d, p, Sidedness::TwoSided, e),
        (kind, _) => PercentileTest::new(d, p, kind, &InversionConfig::default())?,
    };
    test.pvalue(mu0)
}

/// Candidate range scanned by the grid.
pub fn scan_range(d: &Dataset, multiplier: f64) -> (f64, f64) {
    let (mut lo, mut hi, mut smax) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for s in d.studies() {
        lo = lo.min(s.theta_hat);
        hi = hi.max(s.theta_hat);
        smax = smax.max(s.sigma_hat);
    }
    let pad = if smax > 0.0 {
        multiplier * smax
    } else if hi > lo {
        0.5 * (hi - lo)
    } else {
        1.0
    };
    (lo - pad, hi + pad)
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

struct Boundary {
    value: f64,
    evaluations: usize,
}

/// Bisect between a rejected and an accepted candidate; returns the last
/// accepted value, snapped onto a zero-variance estimate inside the final
/// bracket when there is one.
fn refine(
    test: &PercentileTest<'_>,
    alpha: f64,
    mut rejected: f64,
    mut accepted: f64,
    tol: f64,
) -> Result<Boundary, MethodError> {
    let mut evaluations = 0;
    for _ in 0..2000 {
        let mid = rejected + (accepted - rejected) / 2.0;
        if mid == rejected || mid == accepted || (accepted - rejected).abs() <= tol {
            break;
        }
        evaluations += 1;
        if test.pvalue(mid)? > alpha {
            accepted = mid;
        } else {
            rejected = mid;
        }
    }
    let (a, b) = if rejected < accepted {
        (rejected, accepted)
    } else {
        (accepted, rejected)
    };
    let snapped = test
        .data
        .studies()
        .iter()
        .filter(|s| s.sigma_hat == 0.0 && s.theta_hat >= a && s.theta_hat <= b)
        .map(|s| s.theta_hat)
        .next();
    Ok(Boundary {
        value: snapped.unwrap_or(accepted),
        evaluations,
    })
}

/// Closure of the non-rejected set of a test over the scan range, via grid
/// search plus bisection. Returns `(lower, upper)` and diagnostics.
pub fn invert_grid(
    test: &PercentileTest<'_>,
    alpha: f64,
    cfg: &InversionConfig,
) -> Result<((f64, f64), Diagnostics), MethodError> {
    let (lo, hi) = scan_range(test.data, cfg.range_multiplier);
    let curve = test.curve(grid(lo, hi, cfg.grid_points))?;
    let g = &curve.mu_grid;
    let accepted: Vec<bool> = curve.pvals.iter().map(|&pv| pv > alpha).collect();
    let mut diag = Diagnostics {
        grid_points: g.len(),
        refinements: 0,
        non_interval: false,
        empty: false,
        seed: cfg.null.seed,
        null_kind: test.null_kind(),
    };
    let (Some(first), Some(last)) = (
        accepted.iter().position(|&a| a),
        accepted.iter().rposition(|&a| a),
    ) else {
        let best = curve
            .pvals
            .iter()
            .enumerate()
            .fold(0, |b, (i, &pv)| if pv > curve.pvals[b] { i } else { b });
        diag.empty = true;
        return Ok(((g[best], g[best]), diag));
    };
    diag.non_interval = accepted[first..=last].iter().any(|&a| !a);

    let lower = if first == 0 {
        f64::NEG_INFINITY
    } else {
        let b = refine(test, alpha, g[first - 1], g[first], cfg.refine_tol)?;
        diag.refinements += b.evaluations;
        b.value
    };
    let upper = if last == g.len() - 1 {
        f64::INFINITY
    } else {
        let b = refine(test, alpha, g[last + 1], g[last], cfg.refine_tol)?;
        diag.refinements += b.evaluations;
        b.value
    };
    Ok(((lower, upper), diag))
}

/// Exact inversion of a test whose statistic only changes at the observed
/// estimates: one representative point per open cell between distinct
/// ordered estimates. Isolated points are ignored (closure).
pub fn invert_cells(test: &PercentileTest<'_>, alpha: f64, seed: u64) -> Result<((f64, f64), Diagnostics), MethodError> {
    let mut u = test.data.thetas();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let m = u.len();
    // cell j spans (u[j-1], u[j]) with u[-1] = -inf and u[m] = +inf
    let rep = |j: usize| -> f64 {
        if j == 0 {
            u[0] - 1.0
        } else if j == m {
            u[m - 1] + 1.0
        } else {
            u[j - 1] + (u[j] - u[j - 1]) / 2.0
        }
    };
    let pvals = (0..=m).map(|j| test.pvalue(rep(j))).collect::<Result<Vec<_>, _>>()?;
    let accepted: Vec<bool> = pvals.iter().map(|&pv| pv > alpha).collect();
    let mut diag = Diagnostics {
        grid_points: m + 1,
        refinements: 0,
        non_interval: false,
        empty: false,
        seed,
        null_kind: test.null_kind(),
    };
    let (Some(first), Some(last)) = (
        accepted.iter().position(|&a| a),
        accepted.iter().rposition(|&a| a),
    ) else {
        let best = pvals
            .iter()
            .enumerate()
            .fold(0, |b, (i, &pv)| if pv > pvals[b] { i } else { b });
        diag.empty = true;
        let at = rep(best);
        return Ok(((at, at), diag));
    };
    diag.non_interval = accepted[first..=last].iter().any(|&a| !a);
    let lower = if first == 0 { f64::NEG_INFINITY } else { u[first - 1] };
    let upper = if last == m { f64::INFINITY } else { u[last] };
    Ok(((lower, upper), diag))
}

/// Sample percentile: with `h = p * K`, the average of the `h`-th and
/// `(h+1)`-th order statistics when `h` is an integer, otherwise the
/// `ceil(h)`-th. For `p = 0.5` this is the usual median.
pub fn sample_percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    sorted_percentile(&v, p)
}

pub(crate) fn sorted_percentile(v: &[f64], p: f64) -> f64 {
    let k = v.len();
    let h = p * k as f64;
    let j = h.floor() as usize;
    if (h - h.floor()).abs() < 1e-9 * k as f64 && j >= 1 && j < k {
        (v[j - 1] + v[j]) / 2.0
    } else {
        v[(h.ceil() as usize).clamp(1, k) - 1]
    }
}

fn bisect_increasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2000 {
        let mid = lo + (hi - lo) / 2.0;
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + (hi - lo) / 2.0
}

/// Point estimate of the `100p`-th percentile.
///
/// Unweighted: [`sample_percentile`]. Weighted: the value `mu` at which the
/// observed weighted statistic equals its conditional null mean,
/// `sum_k c_k = (2p - 1) * sum_k |c_k|` with `c_k = Phi((mu - theta_k) / sigma_k) - 1/2`.
/// The difference is increasing in `mu`, so the root is bracketed and found
/// by bisection. When every standard error is zero the unweighted estimate
/// is returned.
pub fn point_estimate(d: &Dataset, p: f64, kind: TestKind) -> f64 {
    let thetas = d.thetas();
    if kind == TestKind::Unweighted || d.studies().iter().all(|s| s.sigma_hat == 0.0) {
        return sample_percentile(&thetas, p);
    }
    let smax = d.sigmas().into_iter().fold(0.0, f64::max);
    let lo = thetas.iter().copied().fold(f64::INFINITY, f64::min) - 40.0 * smax;
    let hi = thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 40.0 * smax;
    let gap = |mu: f64| -> f64 {
        d.studies()
            .iter()
            .map(|s| {
                let c = centered_coverage(s.theta_hat, s.sigma_hat, mu);
                c - (2.0 * p - 1.0) * c.abs()
            })
            .sum()
    };
    bisect_increasing(gap, lo, hi)
}
