use thiserror::Error;

/// Errors surfaced by dataset validation, nuisance fitting, and estimation.
#[derive(Error, Debug)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("missing outcome for observed unit")]
    MissingOutcome,

    #[error("positivity violation: {0}")]
    Positivity(String),

    #[error("nonpositive bandwidth")]
    NonpositiveBandwidth,

    #[error("degenerate covariate: {0}")]
    DegenerateCovariate(String),

    #[error("degenerate outcome range")]
    DegenerateOutcome,

    #[error("rank deficient design: column '{0}'")]
    RankDeficient(String),

    #[error("separation in logistic fit (coefficient norm {0:.2})")]
    Separation(f64),

    #[error("separation in fluctuation (|epsilon| = {0:.2})")]
    FluctuationSeparation(f64),

    #[error("fluctuation did not converge after {iterations} iterations (max |score| = {score:.3e})")]
    NoConvergence {
        iterations: usize,
        score: f64,
        /// Best iterate reached and its score residuals.
        epsilon: Vec<f64>,
        residuals: Vec<f64>,
    },

    #[error("fold degenerate; reduce S")]
    DegenerateFold,

    #[error("bootstrap failure rate too high: {failed}/{total} replicates failed")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
