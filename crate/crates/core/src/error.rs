//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A real value does not fit the configured fixed-point range.
    #[error("fixed-point overflow: |{value}| >= 2^{int_bits}")]
    Overflow { value: f64, int_bits: u32 },

    /// Two matrices that must conform do not.
    #[error("shape mismatch: {context} ({lhs:?} vs {rhs:?})")]
    ShapeMismatch {
        context: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    /// Both shares claim to belong to the same party.
    #[error("cannot reconstruct from two shares held by the same party")]
    SameParty,

    /// The random source failed to produce bytes.
    #[error("insufficient entropy from the random source")]
    InsufficientEntropy,

    /// The peer is at a different protocol step.
    #[error("peer desync: local step {local}, peer step {peer}")]
    PeerDesync { local: u64, peer: u64 },

    /// The peer sent a frame with an unexpected tag.
    #[error("unexpected frame tag: expected {expected}, got {got}")]
    BadTag { expected: &'static str, got: u8 },

    /// The peer aborted the session.
    #[error("peer aborted the session (code {0})")]
    Abort(u64),

    /// A correlated-randomness pool ran dry.
    #[error("triple pool exhausted: {pool}")]
    TripleExhausted { pool: String },

    /// Blocked multiplication called with an unusable block size.
    #[error("bad block size {block} for n = {n} (need power-of-two b with b | n and n/b a power of two)")]
    BadBlockSize { block: usize, n: usize },

    /// The two endpoints disagree on protocol configuration.
    #[error("session config mismatch: {0}")]
    ConfigMismatch(String),

    /// No commitment is stored for the requested session.
    #[error("no commitment found for session {0}")]
    NoCommitment(String),

    /// A share/triple container file is malformed.
    #[error("bad container file: {0}")]
    BadContainer(String),

    /// CSV input could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A label or sensitive column held something other than 0/1.
    #[error("non-binary value {value} in column {column}")]
    NonBinaryLabel { column: String, value: f64 },

    /// The input file contains no data rows.
    #[error("empty input file")]
    EmptyFile,

    /// A feature column has (near) zero variance and cannot be whitened.
    #[error("zero variance in feature column {0}")]
    ZeroVariance(String),

    /// The correlation knob is outside [0, 1].
    #[error("bad correlation {0}: must lie in [0, 1]")]
    BadCorrelation(f64),

    /// An interior-point iterate left the feasible region.
    #[error("infeasible iterate in log-barrier training (epoch {epoch}, constraint {constraint})")]
    InfeasibleIterate { epoch: usize, constraint: usize },

    /// Generic shape/precondition violation in the data pipeline.
    #[error("bad shape: {0}")]
    BadShape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
