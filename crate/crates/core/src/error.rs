use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyData,

    #[error("action {action} is outside the action set of size {n_actions}")]
    UnknownAction { action: usize, n_actions: usize },

    #[error("policy cannot be evaluated on this state: {0}")]
    UnsupportedState(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("all importance weights are zero")]
    DegenerateWeights,

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("delta must lie in (0, 0.5], got {0}")]
    InvalidDelta(f64),

    #[error("series is constant; autocorrelation is undefined")]
    ConstantSeries,

    #[error("series cannot be forecast: {0}")]
    DegenerateSeries(String),

    #[error("corpus contains no symbols")]
    EmptyCorpus,

    #[error("AICc undefined for n = {n}, k = {k} (needs n > k + 1)")]
    AiccUndefined { n: usize, k: usize },

    #[error("policy evaluation system is singular")]
    SingularEvaluation,

    #[error("Lipschitz bound violated by {slack:e}")]
    ViolationFound { slack: f64 },

    #[error("transition has zero probability under every type")]
    ImpossibleTransition,

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("column generation hit the iteration cap ({0})")]
    IterationCap(usize),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
