use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("{matrix} is numerically singular")]
    SingularStructuralMatrix { matrix: &'static str },
    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },
    #[error("no admissible starting point found")]
    StartInadmissible,
    #[error("independence model cannot be fitted: {0}")]
    DegenerateBaseline(String),
    #[error("models are not nested (difference in free parameters is {0})")]
    NotNested(i64),
    #[error("search target has no slots to toggle")]
    EmptyModelSpace,
    #[error("every penalized fit along the path failed")]
    AllPathsFailed,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("covariance matrix is not symmetric (max deviation {0:e})")]
    NonSymmetric(f64),
    #[error("covariance input requires an explicit sample size")]
    MissingN,
    #[error("missing value at row {row}, column {col}; full-information estimation is not supported")]
    MissingValues { row: usize, col: usize },
    #[error("report contains no network estimate")]
    NoNetworkInReport,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::SingularStructuralMatrix { .. } => "singular_structural_matrix",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::StartInadmissible => "start_inadmissible",
            Error::DegenerateBaseline(_) => "degenerate_baseline",
            Error::NotNested(_) => "not_nested",
            Error::EmptyModelSpace => "empty_model_space",
            Error::AllPathsFailed => "all_paths_failed",
            Error::InvalidConfig(_) => "invalid_config",
            Error::MalformedFile(_) => "malformed_file",
            Error::NonSymmetric(_) => "non_symmetric",
            Error::MissingN => "missing_n",
            Error::MissingValues { .. } => "missing_values",
            Error::NoNetworkInReport => "no_network_in_report",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// True for failures caused by the numbers rather than by the user's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularStructuralMatrix { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::StartInadmissible
                | Error::DegenerateBaseline(_)
                | Error::AllPathsFailed
        )
    }
}
