use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter value violates a type invariant.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A symmetric solve failed; `pivot` is the zero-based index of the
    /// Cholesky pivot that broke down (or of the smallest singular value
    /// when the factorization itself succeeded).
    #[error("singular or ill-conditioned weighted cross-product matrix at pivot {pivot} (condition estimate {cond:.3e})")]
    SingularPivot { pivot: usize, cond: f64 },

    /// The complete-data variance estimate collapsed; for robit regression
    /// this is the perfect-separation diagnostic.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// A per-row E-step expectation could not be evaluated.
    #[error("E-step failure at row {row}: {reason}")]
    EStepRow { row: usize, reason: String },

    /// Rate diagnostics need at least three recorded iterations.
    #[error("trace too short for rate diagnostics: {len} iterations (need at least 3)")]
    ShortTrace { len: usize },

    /// The design matrix does not have full column rank.
    #[error("rank-deficient design matrix: rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    /// Malformed dataset file.
    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
