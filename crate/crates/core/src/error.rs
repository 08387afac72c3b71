use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("quadrature did not converge: achieved {achieved:e}, target {target:e}")]
    Quadrature { achieved: f64, target: f64 },
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("regime: {0}")]
    Regime(String),
    #[error("atom at s = {0}")]
    AtomHere(f64),
    #[error("insufficient paths: estimate 0 with {n_paths} paths, expected p ~ {expected:e}")]
    InsufficientPaths { n_paths: usize, expected: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("relative standard error {rel_se:.3} above 0.1; increase paths ({detail})")]
    IncreasePaths { rel_se: f64, detail: String },
    #[error("not covered: {0}")]
    NotCovered(String),
    #[error("no exponential signal: {0}")]
    NoSignal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
