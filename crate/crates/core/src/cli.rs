//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for unreadable or invalid input files, 3 for
//! invalid flags or flag combinations, 1 when an output file cannot be
//! written.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::effects::{parse_dataset, Dataset, EffectMeasure, DEFAULT_CI_DIVISOR};
use crate::error::{ConfigError, MethodError};
use crate::forest::render_forest;
use crate::harness::{run_experiment, write_report, ExperimentSpec, ReportFormat};
use crate::inversion::{IntervalResult, InversionConfig, DEFAULT_GRID_POINTS};
use crate::methods::MethodRegistry;
use crate::nulldist::{DEFAULT_EXACT_THRESHOLD, DEFAULT_RESAMPLES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OUTPUT: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "metapct", version, about = "Confidence intervals for percentiles of a random-effects distribution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute percentile intervals for a dataset.
    Analyze(AnalyzeArgs),
    /// Run a coverage experiment described by a spec file.
    Simulate(SimulateArgs),
    /// Draw a forest plot as SVG.
    Forest(ForestArgs),
}

#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    /// Input CSV (summary or 2x2 table schema).
    #[arg(long)]
    pub input: PathBuf,
    /// Effect measure: log-rr, rd or log-hr.
    #[arg(long, default_value = "log-rr")]
    pub measure: EffectMeasure,
    /// Percentile(s) in (0, 1), comma separated.
    #[arg(long = "percentile", value_delimiter = ',', default_value = "0.5")]
    pub percentiles: Vec<f64>,
    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Seed for the multiplier matrix.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Monte Carlo resamples when K exceeds the exact threshold.
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    pub resamples: usize,
    /// Largest K for which the null is enumerated exactly.
    #[arg(long, default_value_t = DEFAULT_EXACT_THRESHOLD)]
    pub exact_threshold: usize,
    /// Grid points for the inversion scan.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub grid: usize,
    /// Divisor turning a reported 95% CI width into a standard error.
    #[arg(long, default_value_t = DEFAULT_CI_DIVISOR)]
    pub ci_divisor: f64,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: AnalysisArgs,
    /// Method(s), comma separated: weighted, unweighted, dl, sj.
    #[arg(long = "method", value_delimiter = ',', default_value = "weighted")]
    pub methods: Vec<String>,
    /// Results CSV; `-` writes to stdout.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Experiment spec (TOML).
    #[arg(long)]
    pub spec: PathBuf,
    /// Report file; `-` writes to stdout.
    #[arg(long)]
    pub out: PathBuf,
    /// csv or markdown; defaults to markdown for `.md` outputs and csv otherwise.
    #[arg(long)]
    pub format: Option<ReportFormat>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ForestArgs {
    #[command(flatten)]
    pub common: AnalysisArgs,
    /// Method used for the diamonds.
    #[arg(long, default_value = "weighted")]
    pub method: String,
    /// Output SVG file.
    #[arg(long)]
    pub out: PathBuf,
}

/// An error paired with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

fn method_failure(e: MethodError) -> Failure {
    match e {
        MethodError::TooFewStudies { .. } | MethodError::UnknownMethod(_) | MethodError::InvalidArgument(_) => {
            Failure::usage(e.to_string())
        }
        other => Failure::input(other.to_string()),
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let res = if path.as_os_str() == "-" {
        use std::io::Write;
        std::io::stdout().write_all(bytes)
    } else {
        fs::write(path, bytes)
    };
    res.map_err(|e| Failure {
        code: EXIT_OUTPUT,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Failure::usage("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::usage(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

impl AnalysisArgs {
    fn validate(&self) -> Result<(), Failure> {
        if self.percentiles.is_empty() || self.percentiles.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Failure::usage("--percentile values must lie in (0, 1)"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Failure::usage("--level must lie in (0, 1)"));
        }
        if self.resamples == 0 {
            return Err(Failure::usage("--resamples must be at least 1"));
        }
        if self.grid < 2 {
            return Err(Failure::usage("--grid must be at least 2"));
        }
        if !(self.ci_divisor > 0.0 && self.ci_divisor.is_finite()) {
            return Err(Failure::usage("--ci-divisor must be positive"));
        }
        Ok(())
    }

    fn inversion_config(&self) -> InversionConfig {
        let mut cfg = InversionConfig {
            grid_points: self.grid,
            ..InversionConfig::default()
        };
        cfg.null.seed = self.seed;
        cfg.null.n_resamples = self.resamples;
        cfg.null.exact_threshold = self.exact_threshold;
        cfg
    }

    fn load(&self) -> Result<Dataset, Failure> {
        let bytes = read_input(&self.input)?;
        parse_dataset(&bytes, self.measure, self.ci_divisor)
            .map_err(|e| Failure::input(format!("{}: {e}", self.input.display())))
    }

    fn describe(&self, out: &mut String, data: &Dataset) {
        let cfg = self.inversion_config();
        let pct: Vec<String> = self.percentiles.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "# input = {}", self.input.display());
        let _ = writeln!(out, "# measure = {}", self.measure);
        let _ = writeln!(out, "# percentiles = {}", pct.join(","));
        let _ = writeln!(out, "# level = {}", self.level);
        let _ = writeln!(out, "# seed = {}", self.seed);
        let _ = writeln!(out, "# null_engine = {}", cfg.null.engine);
        let _ = writeln!(out, "# resamples = {}", self.resamples);
        let _ = writeln!(out, "# exact_threshold = {}", self.exact_threshold);
        let _ = writeln!(out, "# grid = {}", self.grid);
        let _ = writeln!(out, "# range_multiplier = {}", cfg.range_multiplier);
        let _ = writeln!(out, "# sidedness = {}", cfg.sidedness.as_str());
        let _ = writeln!(out, "# ci_divisor = {}", self.ci_divisor);
        let _ = writeln!(out, "# studies = {}", data.k());
        for e in data.exclusions() {
            let _ = writeln!(out, "# excluded = {} ({})", e.study_id, e.reason);
        }
    }
}

fn compute(
    args: &AnalysisArgs,
    data: &Dataset,
    methods: &[String],
    registry: &MethodRegistry,
) -> Result<Vec<IntervalResult>, Failure> {
    let alpha = 1.0 - args.level;
    let cfg = args.inversion_config();
    let mut resolved = Vec::new();
    for name in methods {
        let m = registry.get(name).map_err(method_failure)?;
        if data.k() < m.min_studies() {
            return Err(method_failure(MethodError::TooFewStudies {
                method: m.name(),
                k: data.k(),
            }));
        }
        resolved.push(m);
    }
    let mut results = Vec::new();
    for m in resolved {
        for &p in &args.percentiles {
            results.push(m.interval(data, p, alpha, &cfg).map_err(method_failure)?);
        }
    }
    Ok(results)
}

fn analyze(a: &AnalyzeArgs) -> Result<(), Failure> {
    a.common.validate()?;
    let registry = MethodRegistry::builtin();
    for name in &a.methods {
        registry.get(name).map_err(method_failure)?;
    }
    let data = a.common.load()?;
    let results = with_threads(a.common.threads, || compute(&a.common, &data, &a.methods, &registry))??;

    let mut out = format!("# metapct {} analyze\n", env!("CARGO_PKG_VERSION"));
    a.common.describe(&mut out, &data);
    let _ = writeln!(out, "# methods = {}", a.methods.join(","));
    let mut w = csv::Writer::from_writer(out.into_bytes());
    let header = [
        "method", "p", "level", "point", "lower", "upper", "point_bt", "lower_bt", "upper_bt", "seed", "null",
        "non_interval", "empty",
    ];
    let csv_err = |e: csv::Error| Failure {
        code: EXIT_OUTPUT,
        message: e.to_string(),
    };
    w.write_record(header).map_err(csv_err)?;
    for r in &results {
        let null = match r.diagnostics.null_kind {
            Some(k) => format!("{k:?}"),
            None => "none".into(),
        };
        w.write_record([
            r.method.to_string(),
            r.p.to_string(),
            r.level.to_string(),
            r.point.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
            r.point_bt.to_string(),
            r.lower_bt.to_string(),
            r.upper_bt.to_string(),
            r.diagnostics.seed.to_string(),
            null,
            r.diagnostics.non_interval.to_string(),
            r.diagnostics.empty.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure {
        code: EXIT_OUTPUT,
        message: e.to_string(),
    })?;
    write_output(&a.out, &bytes)
}

fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.spec).map_err(|e| Failure::input(format!("cannot read {}: {e}", a.spec.display())))?;
    let spec = ExperimentSpec::from_toml_str(&text).map_err(|e| Failure::input(format!("{}: {e}", a.spec.display())))?;
    let registry = MethodRegistry::builtin();
    let rows = with_threads(a.threads, || run_experiment(&spec, &registry))?.map_err(|e| match e {
        ConfigError::Method(m) => method_failure(m),
        other => Failure::input(other.to_string()),
    })?;
    let format = a.format.unwrap_or_else(|| {
        if a.out.extension().is_some_and(|e| e == "md") {
            ReportFormat::Markdown
        } else {
            ReportFormat::Csv
        }
    });
    let (open, close) = match format {
        ReportFormat::Csv => ("# ", ""),
        ReportFormat::Markdown => ("<!-- ", " -->"),
    };
    let mut out = format!("{open}metapct {} simulate{close}\n", env!("CARGO_PKG_VERSION"));
    for line in spec.describe() {
        let _ = writeln!(out, "{open}{line}{close}");
    }
    if format == ReportFormat::Markdown {
        out.push('\n');
    }
    let mut bytes = out.into_bytes();
    bytes.extend(write_report(&rows, format));
    write_output(&a.out, &bytes)
}

fn forest(a: &ForestArgs) -> Result<(), Failure> {
    a.common.validate()?;
    let registry = MethodRegistry::builtin();
    registry.get(&a.method).map_err(method_failure)?;
    let data = a.common.load()?;
    let intervals = with_threads(a.common.threads, || {
        compute(&a.common, &data, std::slice::from_ref(&a.method), &registry)
    })??;
    write_output(&a.out, render_forest(&data, &intervals).as_bytes())
}

/// Parse `args` (including the program name), run the command and return
/// the exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let res = match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::Forest(a) => forest(a),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
