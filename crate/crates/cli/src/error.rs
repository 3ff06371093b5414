use std::fmt;

/// A failed command: exit code plus a one-line message.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: String,
    pub message: String,
}

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const RUNTIME: u8 = 3;

impl CliError {
    pub fn new(code: u8, kind: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            code,
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new(USAGE, "usage", message)
    }

    /// For errors caused by flag values rather than by input files.
    pub fn from_flags(e: pasta_core::Error) -> Self {
        CliError::new(USAGE, e.kind(), e.to_string())
    }
}

impl From<pasta_core::Error> for CliError {
    fn from(e: pasta_core::Error) -> Self {
        use pasta_core::Error as E;
        let code = match e {
            E::Divergence { .. } | E::NonFiniteGradient(_) | E::NonFinite(_) => RUNTIME,
            _ => DATA,
        };
        CliError::new(code, e.kind(), e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat = self
            .message
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        write!(f, "error[{}]: {flat}", self.kind)
    }
}
