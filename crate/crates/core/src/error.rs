//! Error type shared across the library, with a stable mapping to process
//! exit codes for the CLI.

use std::path::PathBuf;

/// Exit code for configuration problems (bad flags, bad config file).
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for data problems (malformed corpus, bad fixture, bad record).
pub const EXIT_DATA: i32 = 3;
/// Exit code for transport problems (endpoint unreachable, retries exhausted).
pub const EXIT_TRANSPORT: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: unusable flag combination, bad config value,
    /// missing credential variable, and the like.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid input data: malformed corpus lines, bad numbers, broken
    /// fixtures, inconsistent record sets.
    #[error("data error: {0}")]
    Data(String),

    /// The endpoint could not be reached or kept failing after retries.
    #[error("transport error: {0}")]
    Transport(String),

    /// The endpoint answered, but not with the protocol we speak.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Error {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Error {
        Error::Data(msg.into())
    }

    pub fn transport(msg: impl Into<String>) -> Error {
        Error::Transport(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Error {
        Error::Protocol(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Error {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Process exit code this error maps to.
    ///
    /// Config problems exit 2; anything that went wrong while talking to an
    /// endpoint (unreachable, retries exhausted, or an unintelligible reply)
    /// exits 4; everything rooted in input data, including I/O and parse
    /// failures, exits 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => EXIT_CONFIG,
            Error::Transport(_) | Error::Protocol(_) => EXIT_TRANSPORT,
            Error::Data(_) | Error::Io { .. } | Error::Json { .. } => EXIT_DATA,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(Error::config("x").exit_code(), 2);
        assert_eq!(Error::data("x").exit_code(), 3);
        assert_eq!(Error::protocol("x").exit_code(), 4);
        assert_eq!(Error::transport("x").exit_code(), 4);
        assert_eq!(
            Error::io("/tmp/y", std::io::Error::other("boom")).exit_code(),
            3
        );
    }

    #[test]
    fn messages_name_their_class() {
        assert!(Error::config("bad flag")
            .to_string()
            .starts_with("config error"));
        assert!(Error::data("bad line")
            .to_string()
            .starts_with("data error"));
        assert!(Error::transport("down")
            .to_string()
            .starts_with("transport error"));
    }
}
