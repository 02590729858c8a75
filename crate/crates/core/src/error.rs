use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
///
/// Every variant maps onto one of four coarse categories (see
/// [`Error::category`]) that the command-line front end turns into exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("range error: {0}")]
    Range(String),

    #[error("design violation: non-concurrent subjects assigned to the active arm: {ids:?}")]
    DesignViolation { ids: Vec<String> },

    #[error("empty population: {0}")]
    EmptyPopulation(String),

    #[error("separation detected while fitting {0}")]
    Separation(String),

    #[error("singular design: columns {columns:?} are linearly dependent")]
    SingularDesign { columns: Vec<String> },

    #[error("logistic fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("degenerate hazard {value} at subject {subject}, period {period}")]
    DegenerateHazard {
        subject: usize,
        period: usize,
        value: f64,
    },

    #[error("division-domain error: {0}")]
    DivisionDomain(String),

    #[error("bootstrap unstable: {failed} of {total} replicates failed")]
    BootstrapInstability { failed: usize, total: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse failure class used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numerical => 4,
            ErrorCategory::Io => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Io => "io",
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Calibration(_) => ErrorCategory::Config,
            Error::MissingColumn(_)
            | Error::Parse { .. }
            | Error::Range(_)
            | Error::DesignViolation { .. }
            | Error::EmptyPopulation(_)
            | Error::Csv(_) => ErrorCategory::Data,
            Error::Separation(_)
            | Error::SingularDesign { .. }
            | Error::NotConverged { .. }
            | Error::DegenerateHazard { .. }
            | Error::DivisionDomain(_)
            | Error::BootstrapInstability { .. } => ErrorCategory::Numerical,
            Error::Io { .. } => ErrorCategory::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
