use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("path hop {from} -> {to} has no edge in the graph")]
    MissingEdge { from: String, to: String },

    #[error("negative path weight {weight} on path {index}")]
    NegativeWeight { index: usize, weight: f64 },

    #[error("unknown site `{0}`")]
    UnknownSite(String),

    #[error("unknown workload `{0}`")]
    UnknownWorkload(String),

    #[error("weight alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),

    #[error("workload `{0}` is not portable and cannot be moved")]
    NotPortable(String),

    #[error("transfer bandwidth must be positive, got {0} Gbps")]
    NoTransferBandwidth(f64),

    #[error("LP dimension mismatch: {0}")]
    Dimension(String),

    #[error("brute force refused: {placements} placements exceed the guard of {limit}")]
    BruteForceGuard { placements: f64, limit: f64 },

    #[error("workload universe of {size} exceeds the enumeration guard of {limit}; use membership queries instead")]
    UniverseGuard { size: usize, limit: usize },

    #[error("instance is feasible; no infeasibility certificate exists")]
    NotInfeasible,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
