use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the operation's domain (bad lengths, signs, ranges).
    #[error("domain error: {0}")]
    Domain(String),

    /// A simulated path produced a non-finite state.
    #[error("non-finite state at sub-step {substep}")]
    NonFinite { substep: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    /// Simulation failure annotated with the kernel coordinates that produced it.
    #[error("simulation failed at state {state_index}, replication {replication}: {source}")]
    Simulation {
        state_index: usize,
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    /// Failure of one γ in a sweep.
    #[error("sweep failed at gamma {gamma}: {source}")]
    Sweep {
        gamma: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid kernel file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
