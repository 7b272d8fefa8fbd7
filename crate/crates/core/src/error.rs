use thiserror::Error;

/// Errors raised while building or running a scenario.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("synthesis error: {0}")]
    Synthesis(String),

    #[error("config parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid {key} ({}): {message}", line_ref(*.line))]
    Constraint {
        key: String,
        line: Option<usize>,
        message: String,
    },

    #[error("run failed: {0}")]
    Runtime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn line_ref(line: Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}"),
        None => "default value".to_string(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn ensure_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            found,
        })
    }
}
