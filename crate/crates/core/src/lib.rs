//! Nonparametric confidence intervals for percentiles of the random-effects
//! distribution in meta-analysis.
//!
//! Each study contributes an estimate and a standard error. A percentile
//! value `mu0` is tested with a sign statistic whose per-study weights are
//! the estimated coverage levels `|Phi((mu0 - theta) / sigma) - 1/2|`; the
//! conditional null comes from resampled +-1 multipliers. Inverting the test
//! over `mu0` gives the interval. Unweighted sign-test and DerSimonian-Laird /
//! Sidik-Jonkman intervals are available as comparators, and the
//! [`harness`] module runs coverage simulations.

pub mod cli;
pub mod comparators;
pub mod effects;
pub mod error;
pub mod forest;
pub mod harness;
pub mod inversion;
pub mod methods;
pub mod nulldist;
pub mod seeds;
pub mod simgen;
pub mod statistic;

pub use effects::{Dataset, EffectMeasure, StudySummary, TwoByTwoTable};
pub use error::{ConfigError, InputError, MethodError};
pub use inversion::{IntervalResult, InversionConfig};
pub use methods::{method_names, IntervalMethod, MethodRegistry};


