use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sample batch is empty")]
    EmptyBatch,

    #[error("power subproblem is unbounded: lambda > 0 with mu = 0")]
    Unbounded,

    #[error("var level bracket exceeded its cap of {cap} without a sign change")]
    BracketExpansion { cap: f64 },

    #[error("dual iterates diverged at iteration {iteration}: mu = {mu}, lambda = {lambda:?}")]
    Divergence {
        iteration: usize,
        mu: f64,
        lambda: Vec<f64>,
    },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("sweep point (phi_low = {phi_low}, phi_high = {phi_high}): {source}")]
    SweepPoint {
        phi_low: f64,
        phi_high: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
