use std::fmt;

/// Failure of a run, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or input; exit code 1.
    Config(String),
    /// A numerical routine aborted; exit code 2.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Numerical(m) => write!(f, "numerical abort: {m}"),
        }
    }
}

impl From<ssep_core::Error> for CliError {
    fn from(e: ssep_core::Error) -> Self {
        use ssep_core::Error as E;
        match e {
            E::Numerical(_) | E::OutOfUnitRange { .. } => Self::Numerical(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Config(format!("i/o: {e}"))
    }
}
