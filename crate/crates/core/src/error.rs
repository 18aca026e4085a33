use thiserror::Error;

/// Errors surfaced by the simulator, the environment and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// A required key is absent from a JSON config document.
    #[error("missing key: {0}")]
    MissingKey(&'static str),

    /// A config value violates an invariant (non-positive process time, rate
    /// outside [0,1], ...).
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The JSON document itself could not be parsed.
    #[error("config parse error: {0}")]
    Parse(String),

    /// An operation was called outside its contract (step on a terminal
    /// episode, maintenance while the resource is busy, empty batch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Exact enumeration refused to build a state space beyond the cap.
    #[error("state-space cap exceeded ({found} states > cap {cap}); use a smaller instance")]
    CapExceeded { found: usize, cap: usize },

    /// Value iteration failed to reach the tolerance within the sweep limit.
    #[error("value iteration did not converge within {0} sweeps")]
    NoConvergence(usize),

    /// A checkpoint file does not describe a network of the expected shape.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
