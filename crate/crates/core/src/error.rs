use thiserror::Error;

/// Errors produced by panel validation, subsampling, and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing cell for unit {unit}, time {time}")]
    MissingCell { unit: i64, time: i64 },
    #[error("duplicate cell for unit {unit}, time {time}")]
    DuplicateCell { unit: i64, time: i64 },
    #[error("non-finite value at unit {unit}, time {time}")]
    NonFiniteValue { unit: i64, time: i64 },
    #[error("inconsistent row width: expected {expected} values, got {got}")]
    InconsistentWidth { expected: usize, got: usize },
    #[error("empty input: no rows")]
    EmptyInput,
    #[error("invalid rate specification: p={p}, q={q}")]
    InvalidRate { p: f64, q: f64 },
    #[error("invalid block size b={b} for {n_units} units")]
    InvalidBlockSize { b: usize, n_units: usize },
    #[error("invalid window length l={l} for {n_periods} periods")]
    InvalidWindowLength { l: usize, n_periods: usize },
    #[error("statistic returned a non-finite value on block {block}, window {window}")]
    StatisticFailure { block: usize, window: usize },
    #[error("no subsample statistics to aggregate")]
    EmptyStatistics,
    #[error("probability {0} outside (0,1)")]
    InvalidProbability(f64),
    #[error("confidence level {0} outside (0,1)")]
    InvalidLevel(f64),
    #[error("degenerate bias correction: small window {l_small} must be below {l}")]
    DegenerateCorrection { l_small: usize, l: usize },
    #[error("negative variance {0} with clipping disabled")]
    NegativeVariance(f64),
    #[error("autocovariance estimation needs at least two units")]
    SingleUnit,
    #[error("invalid lag {max_lag} for {n_periods} periods")]
    InvalidLag { max_lag: usize, n_periods: usize },
    #[error("design matrix is singular or ill-conditioned (cond={cond:.3e})")]
    SingularDesign { cond: f64 },
    #[error("infeasible scores requested but true errors are absent")]
    MissingTrueErrors,
    #[error("variance for coordinate {coordinate} is not positive")]
    ZeroVariance { coordinate: usize },
    #[error("AR coefficient {0} outside [0,1)")]
    InvalidRho(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
