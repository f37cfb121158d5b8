use std::fmt;

/// Exit statuses of the `nhfa` binary.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_DIAGNOSTIC: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config files or input data.
    Config(String),
    /// Failure while sampling or writing outputs.
    Runtime(String),
    /// A diagnostic check ran and failed.
    Diagnostic(String),
}

impl CliError {
    pub fn config(e: impl fmt::Display) -> Self {
        Self::Config(e.to_string())
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        Self::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime(_) => EXIT_RUNTIME,
            Self::Diagnostic(_) => EXIT_DIAGNOSTIC,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Runtime(m) => write!(f, "runtime error: {m}"),
            Self::Diagnostic(m) => write!(f, "diagnostic failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
