use std::io;

use thiserror::Error;

/// Coarse classification of an [`Error`], used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed user input: bad flags, bad config values.
    Usage,
    /// File system or on-disk format problems.
    Format,
    /// Numeric preconditions and shape violations.
    Numeric,
    /// Training blew up.
    Divergence,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row} has zero norm")]
    ZeroRow { row: usize },
    #[error("non-finite value encountered{}", context_suffix(.context))]
    NonFinite { context: &'static str },
    #[error("prefix length {requested} out of range 1..={available}")]
    OutOfRange { requested: usize, available: usize },
    #[error("ladder is not strictly increasing at group {group} ({side} side)")]
    NotIncreasing { group: usize, side: &'static str },
    #[error("last ladder group ({r_q},{r_c}) does not match model ({model_r_q},{model_r_c})")]
    LastGroupMismatch {
        r_q: usize,
        r_c: usize,
        model_r_q: usize,
        model_r_c: usize,
    },
    #[error("empty budget ladder")]
    EmptyLadder,
    #[error("invalid budget: r_q and r_c must both be >= 1 (got {r_q}:{r_c})")]
    InvalidBudget { r_q: usize, r_c: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("budget needs {requested} vectors but only {available} are available")]
    BudgetExceedsVectors { requested: usize, available: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("k = {k} exceeds candidate count {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("duplicate doc id {0}")]
    DuplicateDocId(u64),
    #[error("inconsistent embedding dimension: expected {expected}, got {actual}")]
    InconsistentDimension { expected: usize, actual: usize },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    VersionUnsupported(u16),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("file truncated: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("near-tie in MaxSim argmax (gap {gap:.3e}); resample the configuration")]
    TieNearMax { gap: f64 },
    #[error("training diverged at step {step}: total loss is {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("ranking for query {0} has no judgments")]
    UnknownQuery(u64),
    #[error("query {0} has no positive judgment")]
    NoPositiveJudgment(u64),
    #[error("empty token matrix")]
    EmptyInput,
    #[error("{tokens} tokens cannot be split into {segments} segments")]
    TooFewTokens { tokens: usize, segments: usize },
    #[error("unknown {kind} '{name}'; available: {available}")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" in {context}")
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Io(_)
            | BadMagic { .. }
            | VersionUnsupported(_)
            | UnsupportedDtype(_)
            | TruncatedFile { .. }
            | ChecksumMismatch { .. }
            | Parse(_) => ErrorClass::Format,
            UnknownStrategy { .. } | Config(_) | InvalidBudget { .. } => ErrorClass::Usage,
            Divergence { .. } => ErrorClass::Divergence,
            _ => ErrorClass::Numeric,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
