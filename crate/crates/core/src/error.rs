use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed expression text; `column` is 1-based.
    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },

    #[error("column {column}: denominator {denominator} is not a power of two")]
    NonDyadic { column: usize, denominator: i64 },

    /// An operand lies outside the domain an operation accepts
    /// (non-integer index, support outside a window, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid construction: {0}")]
    Invalid(String),

    #[error("enumeration cap exceeded: n = {n} > {cap}; use sampling instead")]
    CapExceeded { n: u32, cap: u32 },

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
