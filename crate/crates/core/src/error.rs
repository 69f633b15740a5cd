use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("parse error at row {row}, column `{column}`: cannot read `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite value at row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },

    #[error("unbalanced panel: no observation for unit `{unit}` in period `{period}`")]
    Unbalanced { unit: String, period: String },

    #[error("duplicate observation for unit `{unit}` in period `{period}` (row {row})")]
    Duplicate {
        unit: String,
        period: String,
        row: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate within-transform: every unit has a single period")]
    DegenerateWithin,

    #[error("invalid group-size spec: {0}")]
    InvalidSizes(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("group {0} is empty")]
    EmptyGroup(usize),

    #[error("singular design in group {0}")]
    SingularDesign(usize),

    #[error("degenerate start: {0}")]
    DegenerateStart(String),

    #[error("estimation failed: all {0} starts were degenerate")]
    EstimationFailed(usize),

    #[error("penalty domain error: N and T must both be at least 2 (got N={n}, T={t})")]
    PenaltyDomain { n: usize, t: usize },

    #[error("infeasible K_max: N*T = {nt} does not exceed the parameter count n(K_max) = {n_params}; use a smaller K_max or a longer panel")]
    InfeasibleKmax { nt: usize, n_params: usize },

    #[error("the K_max={0} fit failed, so sigma_tilde2 is undefined")]
    KmaxFitFailed(usize),

    #[error("invalid use: {0}")]
    InvalidUse(String),
}

impl Error {
    /// Short stable identifier, used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::MissingColumn(_) => "missing_column",
            Error::Parse { .. } => "parse",
            Error::NonFinite { .. } => "non_finite",
            Error::Unbalanced { .. } => "unbalanced_panel",
            Error::Duplicate { .. } => "duplicate",
            Error::Dimension(_) => "dimension",
            Error::DegenerateWithin => "degenerate_within",
            Error::InvalidSizes(_) => "invalid_sizes",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptyGroup(_) => "empty_group",
            Error::SingularDesign(_) => "singular_design",
            Error::DegenerateStart(_) => "degenerate_start",
            Error::EstimationFailed(_) => "estimation_failed",
            Error::PenaltyDomain { .. } => "penalty_domain",
            Error::InfeasibleKmax { .. } => "infeasible_kmax",
            Error::KmaxFitFailed(_) => "kmax_fit_failed",
            Error::InvalidUse(_) => "invalid_use",
        }
    }
}
