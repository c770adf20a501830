use std::fmt;

use thiserror::Error;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    UnknownIntrinsic(String),
    ObsIndexOutOfRange { index: i64, obs_dim: usize },
    NonLiteralObsIndex,
    Disallowed(String),
    Arity { name: String, expected: String, got: usize },
    NoReturn,
    TooDeep,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::UnknownIdentifier(n) => write!(f, "unknown identifier '{n}'"),
            ParseErrorKind::UnknownIntrinsic(n) => {
                write!(f, "unknown intrinsic '{n}' (not in the whitelist)")
            }
            ParseErrorKind::ObsIndexOutOfRange { index, obs_dim } => {
                write!(f, "observation index {index} out of range [0, {obs_dim})")
            }
            ParseErrorKind::NonLiteralObsIndex => {
                write!(f, "observation index must be a non-negative integer literal")
            }
            ParseErrorKind::Disallowed(what) => write!(f, "disallowed construct: {what}"),
            ParseErrorKind::Arity {
                name,
                expected,
                got,
            } => write!(f, "'{name}' expects {expected} argument(s), got {got}"),
            ParseErrorKind::NoReturn => write!(f, "function has no return statement"),
            ParseErrorKind::TooDeep => write!(f, "expression nesting too deep"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: {kind}")]
pub struct ParseError {
    pub pos: Pos,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub fn new(pos: Pos, kind: ParseErrorKind) -> Self {
        ParseError { pos, kind }
    }
}

/// Failures while interpreting a program.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("operation budget of {0} exceeded")]
    BudgetExceeded(u64),
    #[error("non-finite or out-of-range value ({0})")]
    NonFinite(f64),
    #[error("type error: {0}")]
    Type(String),
    #[error("returned {got} but the action has dimension {expected}")]
    ActionArity { expected: usize, got: String },
    #[error("local '{0}' read before assignment")]
    Unbound(String),
    #[error("index {index} out of range for vector of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("observation has length {got}, expected {expected}")]
    ObservationArity { expected: usize, got: usize },
    #[error("observation contains a non-finite value")]
    ObservationNonFinite,
    #[error("control reached the end of the function without a return")]
    NoReturn,
}
