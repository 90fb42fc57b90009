use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("not a mountain pass path: endpoint energy {energy} is not negative")]
    NotMountainPass { energy: f64 },

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("region is not star-shaped about {center:?}: {reason}")]
    NotStarShaped { center: [f64; 3], reason: String },

    #[error("R = {0} is too small: no admissible barrier margin in (0, 1/2)")]
    RadiusTooSmall(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
