use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the crate.
///
/// Variants fall into three families which the CLI maps onto exit codes:
/// bad input (1), estimation infeasibility (2) and internal invariant
/// violations (3). See [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate design: every column was dropped")]
    DegenerateDesign,

    #[error("treatment column is collinear with earlier regressors ({0})")]
    TreatmentDropped(String),

    #[error("empty treatment arm: {0}")]
    EmptyArm(String),

    #[error(
        "missingness pattern {pattern} too small: N={size} (control {n_control}, treated {n_treated}); requires {requirement}"
    )]
    PatternTooSmall {
        pattern: String,
        size: usize,
        n_control: usize,
        n_treated: usize,
        requirement: String,
    },

    #[error("arm-wise observed rates are equal for covariate column(s) {columns:?}; bias cannot be removed by imputation")]
    ZeroDenominator { columns: Vec<usize> },

    #[error("insufficient clusters: {0}")]
    InsufficientClusters(String),

    #[error("too many failed replicates for {estimator}: {failed} of {total}; last error: {last}")]
    TooManyFailures {
        estimator: String,
        failed: usize,
        total: usize,
        last: String,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// 1 for input errors, 2 for estimation infeasibility, 3 for internal errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_)
            | Error::Csv { .. }
            | Error::InvalidData(_)
            | Error::InvalidArgument(_)
            | Error::NonFinite(_) => 1,
            Error::DegenerateDesign
            | Error::TreatmentDropped(_)
            | Error::EmptyArm(_)
            | Error::PatternTooSmall { .. }
            | Error::ZeroDenominator { .. }
            | Error::InsufficientClusters(_)
            | Error::TooManyFailures { .. } => 2,
            Error::Internal(_) => 3,
        }
    }

    /// Whether the failure means "this estimator cannot be computed on these data".
    pub fn is_infeasible(&self) -> bool {
        self.exit_code() == 2
    }
}
