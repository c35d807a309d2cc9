//! Filling strategies.
//!
//! Two strategy families with deliberately different interfaces:
//! adaptive fillers receive the full prior state and the emptier's last
//! move, while oblivious fillers receive nothing at all — their moves are
//! a function of their private RNG stream and round counter only. The
//! split is enforced by the trait signatures, so an oblivious strategy
//! cannot peek even by accident.

pub mod adaptive;
pub mod common;
pub mod oblivious;

use crate::error::{CupId, Result};
use crate::moves::{EmptyMove, FillMove};
use crate::num::FillValue;
use crate::state::CupState;
use std::collections::BTreeSet;

/// What a filler produces each round: a move, or completion. A completed
/// strategy may designate the cup its construction certifies.
#[derive(Debug, Clone)]
pub enum FillerRound<N: FillValue> {
    Move(FillMove<N>),
    Finished { designated: Option<CupId> },
}

/// A filler with full visibility of state and the emptier's last move.
pub trait AdaptiveFiller<N: FillValue>: Send {
    fn next(&mut self, state: &CupState<N>, last_empty: Option<&EmptyMove>)
        -> Result<FillerRound<N>>;
    /// The strategy's current anchor set, if it maintains one. Introspection
    /// for tracing; the engine uses it to flag neglected rounds.
    fn anchors(&self) -> Option<BTreeSet<CupId>> {
        None
    }
    fn name(&self) -> String;
}

/// A filler that sees nothing: moves depend only on private randomness and
/// the strategy's own move history.
pub trait ObliviousFiller<N: FillValue>: Send {
    fn next(&mut self) -> Result<FillerRound<N>>;
    /// Anchor-set introspection (output only; never an input to decisions).
    fn anchors(&self) -> Option<BTreeSet<CupId>> {
        None
    }
    fn name(&self) -> String;
}

/// The engine-facing handle for either filler family.
pub enum FillerRef<'a, N: FillValue> {
    Adaptive(&'a mut dyn AdaptiveFiller<N>),
    Oblivious(&'a mut dyn ObliviousFiller<N>),
}

impl<'a, N: FillValue> FillerRef<'a, N> {
    pub(crate) fn next(
        &mut self,
        state: &CupState<N>,
        last_empty: Option<&EmptyMove>,
    ) -> Result<FillerRound<N>> {
        match self {
            FillerRef::Adaptive(f) => f.next(state, last_empty),
            FillerRef::Oblivious(f) => f.next(),
        }
    }

    pub(crate) fn anchors(&self) -> Option<BTreeSet<CupId>> {
        match self {
            FillerRef::Adaptive(f) => f.anchors(),
            FillerRef::Oblivious(f) => f.anchors(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            FillerRef::Adaptive(f) => f.name(),
            FillerRef::Oblivious(f) => f.name(),
        }
    }
}

/// What a driver does when its strategy completes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinishPolicy {
    /// Report completion to the engine; the game stops there.
    Stop,
    /// Re-instantiate the strategy up to `restarts` times, then fall back
    /// to a cheap rotating single-cup pour to keep pressure on the emptier
    /// for the rest of the round budget.
    RestartThenRotate { restarts: u32 },
}
