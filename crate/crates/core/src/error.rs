use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no closed-form population gradient for {0}")]
    UnsupportedOracle(String),

    #[error("simplex coordinate {0} is zero and can never recover under a multiplicative update")]
    DegenerateSupport(usize),

    #[error("forecast error undefined: realized gradient is zero")]
    UndefinedRatio,

    #[error("AUC undefined: labels contain a single class")]
    UndefinedAuc,

    #[error("probe set is empty")]
    EmptyProbe,

    #[error("incomplete ledger: expected round {expected}, found {found}")]
    IncompleteLedger { expected: usize, found: usize },

    #[error("misuse: {0}")]
    Misuse(String),

    #[error("causality violation: round {requested} requested while only rounds up to {horizon} are revealed")]
    Causality { requested: usize, horizon: usize },

    #[error("divergence at round {round}, inner iteration {iter}: parameters became non-finite")]
    Divergence { round: usize, iter: usize },

    #[error("no per-iteration traces recorded; rerun with tracing enabled")]
    NoTraces,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            got,
        })
    }
}
