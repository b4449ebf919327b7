use thiserror::Error;

/// Errors raised before the solver starts iterating.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("constraint `{name}`: {reason}")]
    MalformedConstraint { name: String, reason: String },

    #[error("problem has {vars} scalar variables, cap is {cap}")]
    TooManyVariables { vars: usize, cap: usize },

    #[error("constraint `{name}` is {dim}x{dim}, cap is {cap}")]
    BlockTooLarge { name: String, dim: usize, cap: usize },

    #[error("initial point has {got} entries, problem has {expected} variables")]
    InitialPointLength { got: usize, expected: usize },
}
