use std::fmt;

use promptlab_core::gateway::GatewayError;
use promptlab_core::prompting::PromptError;
use promptlab_core::selection::SelectionError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Backend(String),
    Verify(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Verify(_) => 4,
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Backend(m) => write!(f, "backend error: {m}"),
            CliError::Verify(v) => {
                write!(f, "verification failed ({} violations)", v.len())?;
                for line in v.iter().take(20) {
                    write!(f, "\n  {line}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Precondition(_) => CliError::Config(e.to_string()),
            other => CliError::Backend(other.to_string()),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Gateway(g) => g.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::Annotation { id, source } => match CliError::from(source) {
                CliError::Backend(m) => CliError::Backend(format!("annotating {id}: {m}")),
                other => other,
            },
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}
