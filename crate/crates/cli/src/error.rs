use std::fmt;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad configuration or missing inputs; exit code 1.
    Usage(String),
    /// Failure while executing a valid request; exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError::Usage(msg.to_string())
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        CliError::Runtime(msg.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Tags a library result with the exit class it belongs to at the call site.
pub trait Classify<T> {
    fn usage_err(self) -> CliResult<T>;
    fn runtime_err(self) -> CliResult<T>;
}

impl<T, E: fmt::Display> Classify<T> for Result<T, E> {
    fn usage_err(self) -> CliResult<T> {
        self.map_err(CliError::usage)
    }

    fn runtime_err(self) -> CliResult<T> {
        self.map_err(CliError::runtime)
    }
}
