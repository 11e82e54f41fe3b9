use crate::linalg::sparse::SparseSolveError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular local system at node {node} (pivot ratio {ratio:.3e})")]
    SingularStencil { node: usize, ratio: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("rank-deficient reduced system: smallest singular value {sigma_min:.3e}, largest {sigma_max:.3e}")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("only {found} candidates fall inside the domain, {needed} requested")]
    InsufficientCandidates { found: usize, needed: usize },

    #[error("target row {0} has zero norm")]
    ZeroTarget(usize),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("parameter ({0}, {1}) lies outside the parameter domain")]
    OutOfDomain(f64, f64),

    #[error("solve failed for parameter index {index}: {source}")]
    Parameter { index: usize, source: Box<Error> },

    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed artifact: {0}")]
    Format(String),

    #[error(transparent)]
    Sparse(#[from] SparseSolveError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }

    /// True for failures caused by the configuration rather than the computation.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
