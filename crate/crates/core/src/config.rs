//! Game configuration.

use serde::{Deserialize, Serialize};

/// What emptying does to a cup holding less than one unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillSemantics {
    /// Emptying a cup with fill below 1 zeroes it out; fills never go
    /// negative.
    Standard,
    /// Emptying always subtracts exactly 1; fills may go negative. Used by
    /// the lower-bound constructions so subset means can act as a new zero.
    Negative,
}

/// Static parameters of one game.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameConfig {
    pub n: usize,
    pub semantics: FillSemantics,
    /// Cumulative extra emptyings the emptier may perform beyond the
    /// per-round budget.
    pub extra_budget: u64,
    /// Cumulative emptyings the emptier may leave unused; `None` is
    /// unbounded. The regular game is `extra_budget = 0`, `skip_budget =
    /// None`.
    pub skip_budget: Option<u64>,
    pub seed: u64,
}

impl GameConfig {
    /// The regular game: no extra emptyings, unlimited skips.
    pub fn regular(n: usize, semantics: FillSemantics, seed: u64) -> Self {
        GameConfig { n, semantics, extra_budget: 0, skip_budget: None, seed }
    }

    /// Strict budgets for embedded-subgame experiments.
    pub fn budgeted(
        n: usize,
        semantics: FillSemantics,
        extra: u64,
        skips: Option<u64>,
        seed: u64,
    ) -> Self {
        GameConfig { n, semantics, extra_budget: extra, skip_budget: skips, seed }
    }
}
