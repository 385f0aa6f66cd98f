use thiserror::Error;

/// Errors raised by the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate cover: all partition-of-unity weights vanish at {point:?}")]
    DegenerateCover { point: Vec<f64> },

    #[error("invalid kernel: k({v}, {w}) = {value} is negative")]
    InvalidKernel { v: f64, w: f64, value: f64 },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("degenerate row {row} ({kind}): all entries are zero")]
    DegenerateRow { row: usize, kind: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("unsupported problem: {0}")]
    UnsupportedProblem(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable kebab-case name used on stderr by the command-line runner.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::DegenerateCover { .. } => "degenerate-cover",
            Error::InvalidKernel { .. } => "invalid-kernel",
            Error::InvalidProblem(_) => "invalid-problem",
            Error::DegenerateRow { .. } => "degenerate-row",
            Error::InvalidInput(_) => "invalid-input",
            Error::NoConvergence { .. } => "no-convergence",
            Error::UnsupportedProblem(_) => "unsupported-problem",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::InvalidConfig(_) => "invalid-config",
            Error::Io(_) => "io",
        }
    }

    /// True for errors caused by the caller's configuration rather than by numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::InvalidProblem(_)
                | Error::InvalidConfig(_)
                | Error::UnsupportedProblem(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_arg(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
