use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OdeError {
    #[error("step size {h:e} fell below the minimum at t = {t}")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("exceeded {steps} steps at t = {t}")]
    TooManySteps { t: f64, steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("integration failed: {0}")]
    Integration(#[from] OdeError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dominant eigenvalue is not real and simple: {0}")]
    DominanceViolated(String),
    #[error("Newton iteration did not converge from any seed")]
    NoConvergence,
    #[error("no sign change of s1 - alpha on the grid")]
    EmptyLevelSet,
    #[error("static program infeasible: {0}")]
    Infeasible(String),
    #[error("bisection could not localize the frontier: {0}")]
    ToleranceNotMet(String),
    #[error("level set unreachable within t_max = {t_max}")]
    Unreachable { t_max: f64 },
    #[error("no feasible anchor in the table")]
    NoFeasibleAnchor,
    #[error("state left the inflated box at t = {t}")]
    RunawayState { t: f64 },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
