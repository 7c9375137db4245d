//! Error-to-exit-code mapping: 2 config, 3 solver, 4 I/O, 5 detection.

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(String),
    Io(String),
    Detection(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
            CliError::Detection(_) => 5,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Solver(m)
            | CliError::Io(m)
            | CliError::Detection(m) => m,
        }
    }

    /// Map any displayable error to the I/O class.
    pub fn io(e: impl std::fmt::Display) -> Self {
        CliError::Io(e.to_string())
    }
}
