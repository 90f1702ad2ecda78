use std::fmt;
use std::path::Path;

use isopulse_core::Error;

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Core(Error),
    /// A run that finished but failed a numerical check.
    Numerical(String),
    Regulation(String),
}

impl Failure {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Validation(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 5,
            Failure::Regulation(_) => 4,
            Failure::Core(e) => match e {
                Error::InvalidArgument(_) | Error::Config(_) => 2,
                Error::Infeasible(_) => 3,
                Error::RunawayState { .. } | Error::NoFeasibleAnchor => 4,
                _ => 5,
            },
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Numerical(m) | Failure::Regulation(m) => write!(f, "{m}"),
        }
    }
}
