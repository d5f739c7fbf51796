use crate::planner::SparseDistribution;

/// Errors surfaced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The request exceeds a configured capability limit (enumeration
    /// caps, table-size caps).
    #[error("capability exceeded: {0}")]
    Capability(String),

    /// A configuration value is unusable as given.
    #[error("configuration error: {0}")]
    Config(String),

    /// The cutting-plane loop hit its iteration cap before certifying
    /// optimality. Carries the best feasible distribution found so the
    /// caller can decide whether to proceed with it.
    #[error("cutting-plane solver stalled after {cuts} cuts (best value {value})")]
    SolverStall {
        cuts: usize,
        value: f64,
        best: Box<SparseDistribution>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
