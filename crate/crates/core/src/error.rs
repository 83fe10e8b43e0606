use thiserror::Error;

/// Broad failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Parse,
    Validation,
    Convergence,
    Invariant,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not antisymmetric at ({i},{j}): deviation {deviation:e}")]
    NotAntisymmetric { i: usize, j: usize, deviation: f64 },
    #[error("entry ({i},{j}) = {value} lies outside [-1, 1]")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("player index {index} out of range for {n} players")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("function is not odd at x = {x}")]
    NotOdd { x: f64 },
    #[error("exhaustive cycle search capped at n = {cap}, got n = {n}")]
    TooLargeForExhaustive { n: usize, cap: usize },
    #[error("scale too large: max |entry| would be {max}")]
    LambdaTooLarge { max: f64 },
    #[error("beta must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("alpha = {alpha} must lie in (0, {max})")]
    InvalidAlpha { alpha: f64, max: f64 },
    #[error("game is not transitive: {i} > {j} > {k} but not {i} > {k}")]
    NotTransitive { i: usize, j: usize, k: usize },
    #[error("game is not regular: ({i},{j}) is a tie")]
    NotRegular { i: usize, j: usize },
    #[error("game has no Hamiltonian win cycle")]
    NotCyclic,
    #[error("permutation is not a win cycle of the game")]
    NotACycle,
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    DidNotConverge { iterations: usize, residual: f64 },
    #[error("no beta up to {max_beta:e} satisfies the sign-preservation predicate")]
    PredicateNeverSatisfied { max_beta: f64 },
    #[error("requested {requested} components but only {available} are available")]
    KTooLarge { requested: usize, available: usize },
    #[error("signs still disagree after {rounds} shrink rounds")]
    ShrinkExhausted { rounds: usize },
    #[error("construction failed: {0}")]
    ConstructionFailed(String),
    #[error("no observed pairs to train on")]
    EmptyTrainSet,
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Parse(_) | Json(_) => ErrorClass::Parse,
            Io(_) => ErrorClass::Io,
            DidNotConverge { .. } | PredicateNeverSatisfied { .. } | NonFiniteLoss { .. } => {
                ErrorClass::Convergence
            }
            ConstructionFailed(_) | ShrinkExhausted { .. } => ErrorClass::Invariant,
            _ => ErrorClass::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
