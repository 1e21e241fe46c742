use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("{what} index {index} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error(
        "absolute continuity violated: source assigns zero probability to next state {next_state} \
         from (stage {stage}, state {state}, action {action}) but target does not"
    )]
    AbsoluteContinuity {
        stage: usize,
        state: usize,
        action: usize,
        next_state: usize,
    },

    #[error("cholesky factorization failed: {0}")]
    Factorization(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("run aborted at episode {episode}, stage {stage}: {reason}")]
    Divergence {
        episode: usize,
        stage: usize,
        reason: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
