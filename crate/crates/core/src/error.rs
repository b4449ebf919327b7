use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Bad input: schema, units or a violated model invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// The synthesis LMI system (or another solver problem) has no solution.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Non-convergence, singular Jacobians, integrator breakdown.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Self::Numeric(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            CoreError::Validation(_) | CoreError::Io { .. } => 2,
            CoreError::Infeasible(_) => 3,
            CoreError::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
