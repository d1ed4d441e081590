use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains no data rows")]
    EmptyInput,

    #[error("parse error at row {row}: {message}")]
    Parse { row: u64, message: String },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("all labels are equal (ones_total = {ones_total}, n_total = {n_total}); the permutation distribution is degenerate")]
    DegenerateLabels { n_total: usize, ones_total: usize },

    #[error("invalid counts: {0}")]
    InvalidCounts(String),

    #[error("invalid hypergeometric parameters: {0}")]
    InvalidParams(String),

    #[error("tail side does not match observation: {0}")]
    InvalidSide(String),

    #[error("invalid alternative: q = {q} must be smaller than p = {p}")]
    InvalidAlternative { p: f64, q: f64 },

    #[error("no scan blocks for N = {0}; need more points")]
    EmptyBlockRange(usize),

    #[error("calibration blocks {calibrated:?} do not match dataset blocks {dataset:?}")]
    BlockMismatch { calibrated: Vec<u32>, dataset: Vec<u32> },

    #[error("brute force limited to N <= {limit}, got {n}")]
    TooLarge { n: usize, limit: usize },

    #[error("no enumerated rectangle is contained in the query rectangle")]
    NoContainedRect,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
