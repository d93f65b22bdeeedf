use thiserror::Error;

use crate::tridiag::CutPlan;

/// Errors raised by the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no norming functional direction: vector is zero")]
    ZeroVector,

    #[error("block index {index} out of range (space has {blocks} blocks)")]
    BlockOutOfRange { index: usize, blocks: usize },

    #[error("operands live on different spaces")]
    SpaceMismatch,

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("symbol needs block band {required}, but at most {allowed} is allowed by the cut structure")]
    BandTooLarge { required: usize, allowed: usize },

    #[error("window {window} out of range (operator has {blocks} blocks)")]
    WindowOutOfRange { window: usize, blocks: usize },

    #[error("dimension {dim} exceeds the brute-force limit of {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("invalid budget: {0}")]
    InvalidBudget(String),

    #[error("empty operator family")]
    EmptyFamily,

    #[error("cut plan does not cover the matrix: plan ends at {plan}, matrix has dimension {matrix}")]
    PlanMismatch { plan: usize, matrix: usize },

    #[error("cut selection exhausted the truncation after {} cuts", .0.cuts().len())]
    Exhausted(Box<CutPlan>),

    #[error("symbol not invertible on circle (min |f| = {min_modulus:e})")]
    SymbolNotInvertible { min_modulus: f64 },

    #[error("path not certified nonvanishing near step {step} of {steps} (min |f| = {min_modulus:e})")]
    VanishingPath {
        step: usize,
        steps: usize,
        min_modulus: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
