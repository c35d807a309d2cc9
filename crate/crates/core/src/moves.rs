//! Move types for both players.

use crate::error::{CupId, GameError, Result};
use crate::num::{sum, FillValue};
use std::collections::{BTreeMap, BTreeSet};

/// One round's fill distribution: the chosen processor count `p` and the
/// per-cup amounts. Amounts must lie in `[0, 1]` and sum to at most `p`;
/// distributing less than the full budget is legal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FillMove<N: FillValue> {
    pub p: usize,
    pub adds: BTreeMap<CupId, N>,
}

impl<N: FillValue> FillMove<N> {
    pub fn new(p: usize, adds: impl IntoIterator<Item = (CupId, N)>) -> Self {
        FillMove { p, adds: adds.into_iter().collect() }
    }

    /// An idle move: one processor, no water.
    pub fn idle() -> Self {
        FillMove { p: 1, adds: BTreeMap::new() }
    }

    pub fn total(&self) -> N {
        sum(self.adds.values().cloned())
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.p < 1 || self.p > n {
            return Err(GameError::InvalidFill(format!(
                "p = {} outside [1, {}]",
                self.p, n
            )));
        }
        for (&c, amt) in &self.adds {
            if c >= n {
                return Err(GameError::UnknownCup(c, n));
            }
            if amt.is_negative() || *amt > N::one() {
                return Err(GameError::InvalidFill(format!(
                    "amount {} into cup {} outside [0, 1]",
                    amt, c
                )));
            }
        }
        if self.total() > N::from_int(self.p as i64) {
            return Err(GameError::InvalidFill(format!(
                "total {} exceeds p = {}",
                self.total(),
                self.p
            )));
        }
        Ok(())
    }
}

/// One round's emptier selection: the set of cups emptied (each loses at
/// most one unit) plus the number of emptyings left unused this round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmptyMove {
    pub cups: BTreeSet<CupId>,
    pub skipped: u64,
}

impl EmptyMove {
    /// Build a move from a cup list against a round budget `p`, deriving
    /// the skip count. Rejects duplicate cups.
    pub fn new(cups: impl IntoIterator<Item = CupId>, p: usize) -> Result<Self> {
        let mut set = BTreeSet::new();
        for c in cups {
            if !set.insert(c) {
                return Err(GameError::DuplicateCup(c));
            }
        }
        let skipped = p.saturating_sub(set.len()) as u64;
        Ok(EmptyMove { cups: set, skipped })
    }

    pub fn contains(&self, c: CupId) -> bool {
        self.cups.contains(&c)
    }

    /// Emptyings beyond the round budget `p` (drawn from the extra budget).
    pub fn extra_used(&self, p: usize) -> u64 {
        (self.cups.len().saturating_sub(p)) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{rat, Rat};

    #[test]
    fn fill_move_validation() {
        let m: FillMove<Rat> = FillMove::new(1, [(0, rat(1, 2)), (1, rat(1, 2))]);
        assert!(m.validate(2).is_ok());

        let too_big: FillMove<Rat> = FillMove::new(1, [(0, rat(6, 5))]);
        assert!(matches!(too_big.validate(3), Err(GameError::InvalidFill(_))));

        let neg: FillMove<Rat> = FillMove::new(1, [(0, rat(-1, 5))]);
        assert!(matches!(neg.validate(3), Err(GameError::InvalidFill(_))));

        let over_budget: FillMove<Rat> = FillMove::new(1, [(0, rat(1, 1)), (1, rat(1, 2))]);
        assert!(matches!(over_budget.validate(3), Err(GameError::InvalidFill(_))));

        let bad_p: FillMove<Rat> = FillMove::new(0, []);
        assert!(matches!(bad_p.validate(3), Err(GameError::InvalidFill(_))));

        let bad_cup: FillMove<Rat> = FillMove::new(1, [(9, rat(1, 2))]);
        assert!(matches!(bad_cup.validate(3), Err(GameError::UnknownCup(9, 3))));
    }

    #[test]
    fn empty_move_accounting() {
        let m = EmptyMove::new([2, 0], 3).unwrap();
        assert_eq!(m.skipped, 1);
        assert_eq!(m.extra_used(3), 0);
        let m = EmptyMove::new([0, 1, 2, 3], 3).unwrap();
        assert_eq!(m.skipped, 0);
        assert_eq!(m.extra_used(3), 1);
        assert_eq!(EmptyMove::new([1, 1], 2), Err(GameError::DuplicateCup(1)));
    }
}
