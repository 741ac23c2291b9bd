//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("linear system is singular to working precision (rcond estimate {rcond:.3e})")]
    SingularSystem { rcond: f64 },

    #[error("matrix is not symmetric (max |S - S^T| entry {max_dev:.3e})")]
    AsymmetricInput { max_dev: f64 },

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("input invalid for metric {metric}: {reason}")]
    InvalidForMetric { metric: String, reason: String },

    #[error("malformed input at row {row}: {reason}")]
    MalformedInput { row: usize, reason: String },

    #[error("cannot parse value at row {row}, column {col}: {value:?}")]
    ParseError { row: usize, col: usize, value: String },

    #[error("class {class} has only {available} samples, need {requested}")]
    InsufficientSamples { class: usize, available: usize, requested: usize },

    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    #[error("invalid cluster count {requested} for {n} samples")]
    InvalidClusterCount { requested: usize, n: usize },

    #[error("label {label} out of range 1..={c}")]
    LabelError { label: usize, c: usize },

    #[error("K = {k} exceeds gallery size {gallery}")]
    InvalidK { k: usize, gallery: usize },

    #[error("query has no relevant gallery items, average precision undefined")]
    UndefinedAP,

    #[error("no scorable queries in evaluation")]
    EmptyEvaluation,

    #[error("degenerate kernel: all points coincide, bandwidth is zero")]
    DegenerateKernel,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-parsable category tag, used by the CLI for exit
    /// diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::SingularSystem { .. } => "singular_system",
            Error::AsymmetricInput { .. } => "asymmetric_input",
            Error::ShapeError(_) => "shape_error",
            Error::InvalidForMetric { .. } => "invalid_for_metric",
            Error::MalformedInput { .. } => "malformed_input",
            Error::ParseError { .. } => "parse_error",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::DegenerateProblem(_) => "degenerate_problem",
            Error::InvalidClusterCount { .. } => "invalid_cluster_count",
            Error::LabelError { .. } => "label_error",
            Error::InvalidK { .. } => "invalid_k",
            Error::UndefinedAP => "undefined_ap",
            Error::EmptyEvaluation => "empty_evaluation",
            Error::DegenerateKernel => "degenerate_kernel",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Io(_) => "io",
        }
    }
}
