//! Error taxonomy for game execution.

use thiserror::Error;

/// A cup identifier: stable index in `0..n`.
pub type CupId = usize;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GameError {
    /// A fill move violated its contract. Signals a buggy strategy; the
    /// game aborts rather than clamping.
    #[error("invalid fill move: {0}")]
    InvalidFill(String),

    /// The emptier exceeded its extra-emptying or skip budget.
    #[error("emptier budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("duplicate cup {0} in empty move")]
    DuplicateCup(CupId),

    #[error("cup id {0} out of range (n = {1})")]
    UnknownCup(CupId, usize),

    /// Mass or mean requested over an empty cup set.
    #[error("empty cup set")]
    EmptySet,

    #[error("wrong phase: expected {expected}, found {found}")]
    WrongPhase { expected: &'static str, found: &'static str },

    /// A strategy ran past twice its certified worst-case round count.
    /// The constructions bound their own running time, so this indicates
    /// an engine or strategy bug, never adversarial stalling.
    #[error("strategy exceeded round cap {cap}: {context}")]
    NonTermination { cap: u64, context: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("strategy error: {0}")]
    Strategy(String),
}

pub type Result<T> = std::result::Result<T, GameError>;
