//! Cup state and per-state metrics.
//!
//! A round alternates two phases: the filler acts on the start state and
//! produces the intermediate state, then the emptier acts and the next
//! round begins. Ranks order cups by fill descending with ties broken by
//! ascending cup id, so every rank query is deterministic and replayable.

use crate::error::{CupId, GameError, Result};
use crate::num::{sum, FillValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Before the filler's move of the current round.
    Start,
    /// After the filler's move, before the emptier's.
    Intermediate,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Start => "start",
            Phase::Intermediate => "intermediate",
        }
    }
}

/// Fills of `n` cups plus the round counter and phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CupState<N: FillValue> {
    pub fills: Vec<N>,
    pub round: u64,
    pub phase: Phase,
}

impl<N: FillValue> CupState<N> {
    /// All cups empty, round 0, start phase.
    pub fn new(n: usize) -> Self {
        CupState { fills: vec![N::zero(); n], round: 0, phase: Phase::Start }
    }

    pub fn with_fills(fills: Vec<N>) -> Self {
        CupState { fills, round: 0, phase: Phase::Start }
    }

    pub fn n(&self) -> usize {
        self.fills.len()
    }

    pub fn fill(&self, c: CupId) -> &N {
        &self.fills[c]
    }

    /// Maximum fill over all cups.
    pub fn backlog(&self) -> N {
        self.fills.iter().cloned().max().expect("no cups")
    }

    /// Minimum fill over all cups.
    pub fn anti_backlog(&self) -> N {
        self.fills.iter().cloned().min().expect("no cups")
    }

    pub fn fill_range(&self) -> N {
        self.backlog() - self.anti_backlog()
    }

    pub fn mass_all(&self) -> N {
        sum(self.fills.iter().cloned())
    }

    /// Total fill over a cup subset. Errors on the empty set.
    pub fn mass_of(&self, cups: &[CupId]) -> Result<N> {
        if cups.is_empty() {
            return Err(GameError::EmptySet);
        }
        Ok(sum(cups.iter().map(|&c| self.fills[c].clone())))
    }

    /// Average fill over a cup subset. Errors on the empty set.
    pub fn mean_of(&self, cups: &[CupId]) -> Result<N> {
        let m = self.mass_of(cups)?;
        Ok(m.div_nat(cups.len()))
    }

    pub fn mean_all(&self) -> N {
        self.mass_all().div_nat(self.n())
    }

    /// Cup ids ordered by fill descending, ties by ascending id.
    pub fn rank_order(&self) -> Vec<CupId> {
        crate::num::sort_desc_indices(&self.fills)
    }

    /// The rank-`r` cup, 1-based: rank 1 is the fullest.
    pub fn rank(&self, r: usize) -> Option<CupId> {
        if r == 0 || r > self.n() {
            return None;
        }
        Some(self.rank_order()[r - 1])
    }

    /// The `count` fullest cups under the canonical tie-break.
    pub fn ranked_set(&self, count: usize) -> Vec<CupId> {
        let mut v = self.rank_order();
        v.truncate(count);
        v
    }

    /// Fullest cup restricted to a subset (canonical tie-break).
    pub fn fullest_in(&self, cups: &[CupId]) -> Option<CupId> {
        cups.iter()
            .copied()
            .max_by(|&a, &b| self.fills[a].cmp(&self.fills[b]).then(b.cmp(&a)))
    }

    /// Least full cup restricted to a subset (ties to the lowest id).
    pub fn least_full_in(&self, cups: &[CupId]) -> Option<CupId> {
        cups.iter()
            .copied()
            .min_by(|&a, &b| self.fills[a].cmp(&self.fills[b]).then(a.cmp(&b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{rat, Rat};

    fn state(fills: &[i64]) -> CupState<Rat> {
        CupState::with_fills(fills.iter().map(|&f| Rat::from_int(f)).collect())
    }

    #[test]
    fn metrics_on_simple_state() {
        let s = state(&[3, 1, 2, 5]);
        assert_eq!(s.backlog(), rat(5, 1));
        assert_eq!(s.anti_backlog(), rat(1, 1));
        assert_eq!(s.rank(1), Some(3));
        assert_eq!(s.fill_range(), rat(4, 1));
        assert_eq!(s.rank_order(), vec![3, 0, 2, 1]);
        assert_eq!(s.ranked_set(2), vec![3, 0]);
    }

    #[test]
    fn equal_fills_have_zero_range_and_id_tiebreak() {
        let s = state(&[4, 4, 4]);
        assert_eq!(s.fill_range(), rat(0, 1));
        assert_eq!(s.rank_order(), vec![0, 1, 2]);
        assert_eq!(s.rank(2), Some(1));
    }

    #[test]
    fn mass_and_mean_cancel_exactly() {
        let s = CupState::with_fills(vec![rat(1, 2), rat(-1, 2)]);
        assert_eq!(s.mass_of(&[0, 1]).unwrap(), rat(0, 1));
        assert_eq!(s.mean_of(&[0, 1]).unwrap(), rat(0, 1));
    }

    #[test]
    fn empty_set_errors() {
        let s = state(&[1]);
        assert_eq!(s.mass_of(&[]), Err(GameError::EmptySet));
        assert_eq!(s.mean_of(&[]), Err(GameError::EmptySet));
    }

    #[test]
    fn mean_times_count_is_mass() {
        let s = CupState::with_fills(vec![rat(1, 3), rat(2, 5), rat(-7, 15)]);
        let cups = [0usize, 1, 2];
        let mean = s.mean_of(&cups).unwrap();
        let mass = s.mass_of(&cups).unwrap();
        assert_eq!(mean * rat(3, 1), mass);
    }
}
