//! Exit codes and the error type that carries them.

use std::fmt;

use curtail::Error;

pub const OK: u8 = 0;
pub const GENERAL: u8 = 1;
pub const USAGE: u8 = 2;
pub const DEGENERATE: u8 = 3;
pub const LOG_FORMAT: u8 = 4;
pub const TERMINAL: u8 = 5;
pub const NOT_TERMINAL: u8 = 6;
pub const REPRO_FAILED: u8 = 7;
/// The trial stopped with rejection: the signal for scripts to halt.
pub const REJECT: u8 = 10;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(USAGE, message)
    }

    pub fn general(message: impl fmt::Display) -> Self {
        Self::new(GENERAL, message.to_string())
    }

    /// Prefix the message with where the failure happened.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::Domain(_) => USAGE,
            Error::DegenerateDesign { .. } | Error::SearchBound { .. } | Error::Unattainable { .. } => DEGENERATE,
            Error::InvalidEvent { .. } | Error::SequenceGap { .. } | Error::Duplicate { .. } => LOG_FORMAT,
            Error::TerminalState(_) => TERMINAL,
            Error::NotTerminal => NOT_TERMINAL,
            // undecodable bytes in an event log are a format problem too
            Error::Io(e) if e.kind() == std::io::ErrorKind::InvalidData => LOG_FORMAT,
            _ => GENERAL,
        };
        Self::new(code, err.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Self::general(err)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(err: serde_json::Error) -> Self {
        Self::general(err)
    }
}

impl From<csv::Error> for Failure {
    fn from(err: csv::Error) -> Self {
        Self::general(err)
    }
}

pub type Outcome = Result<u8, Failure>;
