use thiserror::Error;

pub type Result<T, E = FkcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FkcError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("operation not supported for this schedule kind: {0}")]
    UnsupportedKind(&'static str),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("missing model capability: {0}")]
    Capability(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("capacity exceeded: {requested} components requested, cap is {cap}")]
    Capacity { requested: u128, cap: usize },

    #[error("singular configuration: {0}")]
    Singularity(String),

    #[error("degenerate ensemble: every log-weight is -inf")]
    DegenerateEnsemble,

    #[error("simulation failure at step {step} (t = {t:.6}), particle {particle}: {what}")]
    SimulationFailure {
        step: usize,
        t: f64,
        particle: usize,
        what: String,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(FkcError::Shape { expected, got })
    }
}
