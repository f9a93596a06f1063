use core::fmt;

/// Errors reported by the library.
///
/// All numeric routines validate their domains up front and return one of
/// these variants instead of producing NaNs or silently clamping.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A probability-valued argument fell outside `[0, 1]`.
    ProbabilityOutOfRange { name: &'static str, value: f64 },
    /// Ternary entropy arguments must sum to one.
    SimplexViolation { sum: f64 },
    /// The requested quantity is undefined at ε = 1.
    ErasureProbIsOne,
    /// A dynamic-program action exceeded its state constraint δ ≤ z.
    ActionExceedsState { delta: f64, z: f64 },
    /// Value-function grids need at least two points.
    GridTooSmall { grid_size: usize },
    /// Value iteration needs at least one sweep.
    NoIterations,
    /// A labelling cannot devote `floor(p·size)` ranks to '1' twice over.
    LabellingTooSmall { size: u64, ones_count: u64 },
    /// The message index is not a member of the current message set.
    UnknownMessage,
    /// A filter selected a label class with no members.
    EmptyLabelClass,
    /// The two-phase split parameter is below its feasibility floor.
    LambdaTooSmall { lambda: u32, minimum: u32 },
    /// Sequences that must be aligned had different lengths.
    LengthMismatch { left: usize, right: usize },
    /// A feedback session hit its channel-use budget before decoding.
    MaxUsesExhausted { max_uses: u64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ProbabilityOutOfRange { name, value } => {
                write!(f, "{name} = {value} is not a probability in [0, 1]")
            }
            Error::SimplexViolation { sum } => {
                write!(f, "ternary entropy arguments sum to {sum}, expected 1")
            }
            Error::ErasureProbIsOne => {
                write!(f, "quantity is undefined at erasure probability 1")
            }
            Error::ActionExceedsState { delta, z } => {
                write!(f, "action delta = {delta} exceeds state z = {z}")
            }
            Error::GridTooSmall { grid_size } => {
                write!(f, "grid size {grid_size} is below the minimum of 2")
            }
            Error::NoIterations => write!(f, "value iteration needs at least one sweep"),
            Error::LabellingTooSmall { size, ones_count } => {
                write!(
                    f,
                    "set of size {size} cannot hold two disjoint blocks of {ones_count} ranks"
                )
            }
            Error::UnknownMessage => write!(f, "message index is not in the current set"),
            Error::EmptyLabelClass => write!(f, "received label selects an empty class"),
            Error::LambdaTooSmall { lambda, minimum } => {
                write!(f, "lambda = {lambda} is below the feasibility floor {minimum}")
            }
            Error::LengthMismatch { left, right } => {
                write!(f, "sequence lengths differ: {left} vs {right}")
            }
            Error::MaxUsesExhausted { max_uses } => {
                write!(f, "session exhausted its budget of {max_uses} channel uses")
            }
        }
    }
}
