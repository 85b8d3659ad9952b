use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("continued fraction did not converge after {iterations} iterations (x={x}, a={a}, b={b})")]
    NoConvergence { x: f64, a: f64, b: f64, iterations: usize },

    #[error("degenerate design: critical count {k} outside [0, {max}]")]
    DegenerateDesign { k: i64, max: u64 },

    #[error("no design found with maximal sample size up to {cap}")]
    SearchBound { cap: u64 },

    #[error("critical count {k} is not attainable; nearest attainable values are {below:?} and {above:?}")]
    Unattainable { k: u64, below: Option<u64>, above: Option<u64> },

    #[error("trial already terminated ({0})")]
    TerminalState(&'static str),

    #[error("sequence gap: expected seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },

    #[error("duplicate or out-of-order seq {got} (last accepted {last})")]
    Duplicate { got: u64, last: u64 },

    #[error("trial is still running; estimation needs a terminal state")]
    NotTerminal,

    #[error("invalid event on line {line}: {reason}")]
    InvalidEvent { line: usize, reason: String },

    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    #[error("unsupported snapshot format version {0}")]
    SnapshotVersion(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
