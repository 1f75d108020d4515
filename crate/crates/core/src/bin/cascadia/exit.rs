use std::fmt;

/// Failures mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    Usage(String),
    /// Invalid input data (exit 2).
    Validation(String),
    /// Solver or stabilization failure (exit 3).
    Numerical(String),
    /// A self-check or sweep found a discrepancy (exit 4).
    Diff(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Validation(_) => 2,
            Self::Numerical(_) => 3,
            Self::Diff(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Validation(m) => write!(f, "validation error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Diff(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<cascadia::Error> for CliError {
    fn from(e: cascadia::Error) -> Self {
        use cascadia::Error as E;
        match e {
            E::NumericalFailure(_) | E::NoStabilization { .. } | E::BudgetExceeded { .. } => Self::Numerical(e.to_string()),
            E::InvalidLoadingFactor { .. } => Self::Usage(e.to_string()),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Validation(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Validation(format!("json: {e}"))
    }
}
