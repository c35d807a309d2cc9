//! Online invariant monitors.
//!
//! Monitors are pure observers attached to the game loop: they never touch
//! the state or the strategies, so attaching any set of them cannot change
//! a game's move streams. Each produces an [`InvariantVerdict`] whose
//! violation record carries exact values sufficient to recheck the claim
//! independently. In strict mode the engine aborts on first violation; in
//! survey mode it keeps logging.

use crate::emptier::check_delta_greedy;
use crate::engine::RoundRecord;
use crate::moves::{EmptyMove, FillMove};
use crate::num::FillValue;
use crate::state::CupState;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonitorStatus {
    Holds,
    Violated,
}

/// First-violation record with exact operands, rendered as strings so the
/// verdict is serializable regardless of the numeric mode.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub round: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub lhs: String,
    pub rhs: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantVerdict {
    pub monitor: String,
    pub status: MonitorStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_violation: Option<Violation>,
    /// Informational flags (e.g. the mass-escape detector's trigger round).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub trait Monitor<N: FillValue>: Send {
    fn id(&self) -> &str;
    /// Called on every start state, including the initial one.
    fn on_start_state(&mut self, _state: &CupState<N>) {}
    /// Called on every intermediate state with the fill move that made it.
    fn on_intermediate(&mut self, _state: &CupState<N>, _mv: &FillMove<N>) {}
    /// Called with the intermediate state and the emptier's selection,
    /// before the emptying is applied.
    fn on_empty(&mut self, _state: &CupState<N>, _mv: &EmptyMove) {}
    /// Called after the round completes, with the record and S_{t+1}.
    fn on_round_complete(&mut self, _rec: &RoundRecord<N>, _state: &CupState<N>) {}
    fn violated(&self) -> bool;
    fn verdict(&self) -> InvariantVerdict;
    /// Strict monitors abort the game on first violation.
    fn strict(&self) -> bool;
}

fn verdict_of(id: &str, v: &Option<Violation>, note: Option<String>) -> InvariantVerdict {
    InvariantVerdict {
        monitor: id.to_string(),
        status: if v.is_some() { MonitorStatus::Violated } else { MonitorStatus::Holds },
        first_violation: v.clone(),
        note,
    }
}

/// Checks, at every start state, that for every k the average fill of the
/// k fullest cups is at most 2n - k (equivalently, their mass is at most
/// k(2n - k)). This is the invariant system the greedy emptier maintains.
pub struct GreedyInvariantMonitor {
    strict: bool,
    first: Option<Violation>,
}

impl GreedyInvariantMonitor {
    pub fn new(strict: bool) -> Self {
        GreedyInvariantMonitor { strict, first: None }
    }
}

impl<N: FillValue> Monitor<N> for GreedyInvariantMonitor {
    fn id(&self) -> &str {
        "greedy-invariant"
    }

    fn on_start_state(&mut self, state: &CupState<N>) {
        if self.first.is_some() {
            return;
        }
        let n = state.n();
        let order = state.rank_order();
        let mut prefix = N::zero();
        for (i, &c) in order.iter().enumerate() {
            let k = i + 1;
            prefix += state.fill(c).clone();
            let bound = N::from_int((k * (2 * n - k)) as i64);
            if prefix > bound {
                self.first = Some(Violation {
                    round: state.round,
                    k: Some(k),
                    lhs: format!("{}", prefix),
                    rhs: format!("{}", bound),
                    detail: format!(
                        "mass of {} fullest cups exceeds k(2n-k) at round {}",
                        k, state.round
                    ),
                });
                return;
            }
        }
    }

    fn violated(&self) -> bool {
        self.first.is_some()
    }
    fn verdict(&self) -> InvariantVerdict {
        verdict_of("greedy-invariant", &self.first, None)
    }
    fn strict(&self) -> bool {
        self.strict
    }
}

/// Checks fill-range <= R at every start state.
pub struct FlatnessMonitor<N: FillValue> {
    r: N,
    strict: bool,
    first: Option<Violation>,
}

impl<N: FillValue> FlatnessMonitor<N> {
    pub fn new(r: N, strict: bool) -> Self {
        FlatnessMonitor { r, strict, first: None }
    }
}

impl<N: FillValue> Monitor<N> for FlatnessMonitor<N> {
    fn id(&self) -> &str {
        "flatness"
    }
    fn on_start_state(&mut self, state: &CupState<N>) {
        if self.first.is_some() {
            return;
        }
        let range = state.fill_range();
        if range > self.r {
            self.first = Some(Violation {
                round: state.round,
                k: None,
                lhs: format!("{}", range),
                rhs: format!("{}", self.r),
                detail: format!("fill-range exceeds bound at round {}", state.round),
            });
        }
    }
    fn violated(&self) -> bool {
        self.first.is_some()
    }
    fn verdict(&self) -> InvariantVerdict {
        verdict_of("flatness", &self.first, None)
    }
    fn strict(&self) -> bool {
        self.strict
    }
}

/// Checks the flattening step property: whenever the fill-range increases
/// from one start state to the next, the new range is already within the
/// flat band `r_delta`.
pub struct RangeStepMonitor<N: FillValue> {
    r_delta: N,
    prev: Option<N>,
    strict: bool,
    first: Option<Violation>,
}

impl<N: FillValue> RangeStepMonitor<N> {
    pub fn new(r_delta: N, strict: bool) -> Self {
        RangeStepMonitor { r_delta, prev: None, strict, first: None }
    }
}

impl<N: FillValue> Monitor<N> for RangeStepMonitor<N> {
    fn id(&self) -> &str {
        "range-step"
    }
    fn on_start_state(&mut self, state: &CupState<N>) {
        let range = state.fill_range();
        if self.first.is_none() {
            if let Some(prev) = &self.prev {
                if range > *prev && range > self.r_delta {
                    self.first = Some(Violation {
                        round: state.round,
                        k: None,
                        lhs: format!("{}", range),
                        rhs: format!("{}", self.r_delta),
                        detail: "fill-range grew past the flat band".into(),
                    });
                }
            }
        }
        self.prev = Some(range);
    }
    fn violated(&self) -> bool {
        self.first.is_some()
    }
    fn verdict(&self) -> InvariantVerdict {
        verdict_of("range-step", &self.first, None)
    }
    fn strict(&self) -> bool {
        self.strict
    }
}

/// Re-derives the mass from the move log round by round and compares it to
/// the state: mass_after = mass_before + added - removed, exactly.
pub struct ConservationMonitor<N: FillValue> {
    prev_mass: Option<N>,
    strict: bool,
    first: Option<Violation>,
}

impl<N: FillValue> ConservationMonitor<N> {
    pub fn new(strict: bool) -> Self {
        ConservationMonitor { prev_mass: None, strict, first: None }
    }
}

impl<N: FillValue> Monitor<N> for ConservationMonitor<N> {
    fn id(&self) -> &str {
        "conservation"
    }
    fn on_start_state(&mut self, state: &CupState<N>) {
        if self.prev_mass.is_none() {
            self.prev_mass = Some(state.mass_all());
        }
    }
    fn on_round_complete(&mut self, rec: &RoundRecord<N>, state: &CupState<N>) {
        let prev = self.prev_mass.clone().expect("saw initial state");
        let expected = prev + rec.added.clone() - rec.removed.clone();
        let actual = state.mass_all();
        if self.first.is_none() && expected != actual {
            self.first = Some(Violation {
                round: rec.round,
                k: None,
                lhs: format!("{}", actual),
                rhs: format!("{}", expected),
                detail: "mass does not match the move-log derivation".into(),
            });
        }
        self.prev_mass = Some(actual);
    }
    fn violated(&self) -> bool {
        self.first.is_some()
    }
    fn verdict(&self) -> InvariantVerdict {
        verdict_of("conservation", &self.first, None)
    }
    fn strict(&self) -> bool {
        self.strict
    }
}

/// Flags the run once total mass reaches `threshold` (the escape branch of
/// the oblivious constructions: huge mass means huge backlog forever
/// after). Never reports a violation.
pub struct MassEscapeMonitor<N: FillValue> {
    threshold: N,
    escaped_at: Option<u64>,
}

impl<N: FillValue> MassEscapeMonitor<N> {
    pub fn new(threshold: N) -> Self {
        MassEscapeMonitor { threshold, escaped_at: None }
    }

    pub fn escaped(&self) -> Option<u64> {
        self.escaped_at
    }
}

impl<N: FillValue> Monitor<N> for MassEscapeMonitor<N> {
    fn id(&self) -> &str {
        "mass-escape"
    }
    fn on_start_state(&mut self, state: &CupState<N>) {
        if self.escaped_at.is_none() && state.mass_all() >= self.threshold {
            self.escaped_at = Some(state.round);
        }
    }
    fn violated(&self) -> bool {
        false
    }
    fn verdict(&self) -> InvariantVerdict {
        verdict_of(
            "mass-escape",
            &None,
            self.escaped_at.map(|r| format!("mass reached threshold at round {}", r)),
        )
    }
    fn strict(&self) -> bool {
        false
    }
}

/// Checks every empty move against the delta-greedy-like constraint at the
/// intermediate state it answered.
pub struct DeltaGreedyMonitor<N: FillValue> {
    delta: N,
    strict: bool,
    first: Option<Violation>,
}

impl<N: FillValue> DeltaGreedyMonitor<N> {
    pub fn new(delta: N, strict: bool) -> Self {
        DeltaGreedyMonitor { delta, strict, first: None }
    }
}

impl<N: FillValue> Monitor<N> for DeltaGreedyMonitor<N> {
    fn id(&self) -> &str {
        "delta-greedy"
    }
    fn on_empty(&mut self, state: &CupState<N>, mv: &EmptyMove) {
        if self.first.is_some() {
            return;
        }
        if let Some(w) = check_delta_greedy(state, mv, &self.delta) {
            self.first = Some(Violation {
                round: state.round,
                k: None,
                lhs: format!("fill({}) = {}", w.c_full, w.fill_full),
                rhs: format!("fill({}) + {} = {}", w.c_less, self.delta, w.fill_less + self.delta.clone()),
                detail: format!("cup {} emptied while cup {} ignored", w.c_less, w.c_full),
            });
        }
    }
    fn violated(&self) -> bool {
        self.first.is_some()
    }
    fn verdict(&self) -> InvariantVerdict {
        verdict_of("delta-greedy", &self.first, None)
    }
    fn strict(&self) -> bool {
        self.strict
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{rat, Rat};

    #[test]
    fn greedy_invariant_holds_on_empty_start() {
        let mut m = GreedyInvariantMonitor::new(false);
        let s: CupState<Rat> = CupState::new(10);
        Monitor::<Rat>::on_start_state(&mut m, &s);
        assert!(!Monitor::<Rat>::violated(&m));
    }

    #[test]
    fn greedy_invariant_k1_bound_is_2n_minus_1() {
        // n = 10: backlog 19 is allowed, 19 + epsilon is not.
        let mut m = GreedyInvariantMonitor::new(false);
        let mut fills = vec![Rat::from_int(0); 10];
        fills[3] = Rat::from_int(19);
        Monitor::<Rat>::on_start_state(&mut m, &CupState::with_fills(fills.clone()));
        assert!(!Monitor::<Rat>::violated(&m));
        fills[3] = rat(191, 10);
        Monitor::<Rat>::on_start_state(&mut m, &CupState::with_fills(fills));
        assert!(Monitor::<Rat>::violated(&m));
        let v = Monitor::<Rat>::verdict(&m);
        assert_eq!(v.first_violation.unwrap().k, Some(1));
    }

    #[test]
    fn flatness_zero_range_holds_for_any_bound() {
        let mut m = FlatnessMonitor::new(rat(0, 1), false);
        let s = CupState::with_fills(vec![rat(7, 3); 4]);
        m.on_start_state(&s);
        assert!(!Monitor::<Rat>::violated(&m));
    }

    #[test]
    fn mass_escape_flags_without_violating() {
        let mut m = MassEscapeMonitor::new(rat(4, 1));
        let s = CupState::with_fills(vec![rat(5, 1), rat(0, 1)]);
        m.on_start_state(&s);
        assert!(!Monitor::<Rat>::violated(&m));
        assert_eq!(m.escaped(), Some(0));
        assert!(Monitor::<Rat>::verdict(&m).note.is_some());
    }
}
