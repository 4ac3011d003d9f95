use thiserror::Error;

/// Errors raised while turning raw inputs into a [`crate::effects::Dataset`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum InputError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unrecognised header `{0}`; expected `study_id,estimate,ci_lower,ci_upper,scale` or `study_id,events_trt,n_trt,events_ctl,n_ctl`")]
    UnknownHeader(String),
    #[error("line {line}: duplicate study_id `{id}`")]
    DuplicateStudy { line: usize, id: String },
    #[error("reported interval must satisfy lower < estimate < upper (got {lo} / {est} / {hi})")]
    Ordering { est: f64, lo: f64, hi: f64 },
    #[error("ratio-scale values must be positive (got {lo} / {est} / {hi})")]
    NonPositiveRatio { est: f64, lo: f64, hi: f64 },
    #[error("{0}")]
    Invalid(String),
    #[error("dataset has no usable studies after exclusions")]
    Empty,
}

/// Errors raised by the inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MethodError {
    #[error("method `{method}` requires K >= 2 studies (got K = {k})")]
    TooFewStudies { method: &'static str, k: usize },
    #[error("method `{method}` requires every standard error to be positive (study `{study}`)")]
    ZeroVariance { method: &'static str, study: String },
    #[error("exact enumeration limited to K <= {threshold} (got K = {k})")]
    ExactTooLarge { k: usize, threshold: usize },
    #[error("weight vector of length {weights} does not match sign matrix with {cols} columns")]
    DimensionMismatch { weights: usize, cols: usize },
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Errors raised by scenario / experiment configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse spec: {0}")]
    Parse(String),
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Method(#[from] MethodError),
}
