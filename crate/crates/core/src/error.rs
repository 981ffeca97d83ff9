//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in this crate.
///
/// Variants split into two broad groups: bad inputs or configuration
/// (rejected up front, before any work happens) and runtime failures such as
/// I/O problems or an optimizer that never reached its tolerance. The CLI
/// maps the groups to distinct exit codes via [`Error::is_invalid_input`].
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A sequence argument was empty.
    EmptySequence,
    /// A score fell outside the closed interval [0, 1].
    ScoreOutOfRange { index: usize, value: f64 },
    /// An operation requiring binary scores saw a value other than 0 or 1.
    NonBinaryScore { index: usize, value: f64 },
    /// A border value was negative.
    NegativeBorder { value: f64 },
    /// The epoch length was zero or negative.
    NonPositiveEpochLength { value: f64 },
    /// Two sequences that must align had different lengths.
    LengthMismatch { left: usize, right: usize },
    /// A state label was outside `0..n_states`.
    InvalidStateLabel { index: usize, label: usize, n_states: usize },
    /// A rescoring rule constant was zero or negative.
    InvalidRuleConstant { value: f64 },
    /// A model was applied to input of the wrong width.
    ArityMismatch { expected: usize, got: usize },
    /// An input that must be finite contained a NaN or infinity.
    NonFiniteInput { context: &'static str },
    /// Labels were all one class where both are required.
    SingleClassLabels,
    /// Fewer participants than requested cross-validation folds.
    TooFewParticipants { participants: usize, folds: usize },
    /// A configuration value failed validation.
    InvalidConfig(String),
    /// A CSV row could not be parsed.
    MalformedRow { line: u64, message: String },
    /// Epoch indices for a participant were not consecutive from 1.
    EpochGap { participant: String, line: u64, expected: usize, found: usize },
    /// Rows for a participant appeared in more than one contiguous block.
    SplitParticipant { participant: String, line: u64 },
    /// An optimizer hit its iteration cap before reaching tolerance.
    DidNotConverge { iterations: usize },
    /// Underlying I/O failure.
    Io(String),
}

impl Error {
    /// True when the error reflects invalid input or configuration rather
    /// than a failure that occurred while doing otherwise valid work.
    pub fn is_invalid_input(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::DidNotConverge { .. })
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptySequence => write!(f, "sequence is empty"),
            Error::ScoreOutOfRange { index, value } => {
                write!(f, "score {value} at epoch {} is outside [0, 1]", index + 1)
            }
            Error::NonBinaryScore { index, value } => {
                write!(f, "score {value} at epoch {} is not binary", index + 1)
            }
            Error::NegativeBorder { value } => write!(f, "border value {value} is negative"),
            Error::NonPositiveEpochLength { value } => {
                write!(f, "epoch length {value} must be positive")
            }
            Error::LengthMismatch { left, right } => {
                write!(f, "sequence lengths differ: {left} vs {right}")
            }
            Error::InvalidStateLabel { index, label, n_states } => {
                write!(f, "state {label} at epoch {} is outside 0..{n_states}", index + 1)
            }
            Error::InvalidRuleConstant { value } => {
                write!(f, "rule constant {value} must be positive")
            }
            Error::ArityMismatch { expected, got } => {
                write!(f, "model expects {expected} inputs, got {got}")
            }
            Error::NonFiniteInput { context } => write!(f, "non-finite value in {context}"),
            Error::SingleClassLabels => write!(f, "labels contain only one class"),
            Error::TooFewParticipants { participants, folds } => {
                write!(f, "{participants} participants cannot fill {folds} folds")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::MalformedRow { line, message } => {
                write!(f, "malformed row at line {line}: {message}")
            }
            Error::EpochGap { participant, line, expected, found } => write!(
                f,
                "participant {participant} at line {line}: expected epoch {expected}, found {found}"
            ),
            Error::SplitParticipant { participant, line } => write!(
                f,
                "participant {participant} reappears at line {line} after other participants"
            ),
            Error::DidNotConverge { iterations } => {
                write!(f, "optimizer did not converge within {iterations} iterations")
            }
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
            _ => {
                let line = e.position().map_or(0, csv::Position::line);
                Error::MalformedRow { line, message: e.to_string() }
            }
        }
    }
}
