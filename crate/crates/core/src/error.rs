use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid model: {0}")]
    Invariant(String),

    #[error("invalid policy: {0}")]
    Policy(String),

    #[error("trajectory incompatible with policy at step {step}: took action {taken}, policy prescribes {expected}")]
    Incompatible {
        step: usize,
        taken: usize,
        expected: usize,
    },

    #[error("enumeration needs {required} items, cap is {cap}")]
    CapExceeded { required: u128, cap: u128 },

    #[error("budget exceeded: {what} requires {required}, budget is {budget}")]
    Budget {
        what: &'static str,
        required: u128,
        budget: u128,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("episode in progress (step {step} of {horizon})")]
    MidEpisode { step: usize, horizon: usize },

    #[error("episode is over; call reset first")]
    EpisodeOver,

    #[error("interval set infeasible for row: lower bounds sum to {lower}, upper bounds sum to {upper}")]
    Infeasible { lower: f64, upper: f64 },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
