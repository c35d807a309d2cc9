//! Round mechanics and the game loop.
//!
//! A round at state S_t: the filler picks p_t and distributes at most p_t
//! units (at most 1 per cup), giving the intermediate state I_t; the
//! emptier picks cups to empty at most 1 unit each, giving S_{t+1}.
//! Emptying removes exactly one unit, floored at zero in standard
//! semantics — removing less is never useful to the emptier, and partial
//! removal is not modeled. Fill moves are validated before application and
//! abort the game on violation.
//!
//! The loop is strictly sequential; determinism comes from the strategies'
//! split RNG streams, so replaying a recorded move log reproduces
//! bit-identical states.

use crate::config::{FillSemantics, GameConfig};
use crate::emptier::{BudgetView, Emptier};
use crate::error::{GameError, Result};
use crate::filler::{FillerRef, FillerRound};
use crate::monitor::Monitor;
use crate::moves::{EmptyMove, FillMove};
use crate::num::FillValue;
use crate::state::{CupState, Phase};
use std::collections::BTreeSet;
use std::io::Write;

/// Tracks cumulative budget use across a game.
#[derive(Debug, Clone)]
pub struct BudgetLedger {
    pub extra_left: u64,
    pub skips_left: Option<u64>,
}

impl BudgetLedger {
    pub fn new(cfg: &GameConfig) -> Self {
        BudgetLedger { extra_left: cfg.extra_budget, skips_left: cfg.skip_budget }
    }

    pub fn view(&self) -> BudgetView {
        BudgetView { extra_left: self.extra_left, skips_left: self.skips_left }
    }

    fn debit(&mut self, extra: u64, skips: u64) -> Result<()> {
        if extra > self.extra_left {
            return Err(GameError::BudgetExceeded(format!(
                "{} extra emptyings requested, {} left",
                extra, self.extra_left
            )));
        }
        if let Some(left) = self.skips_left {
            if skips > left {
                return Err(GameError::BudgetExceeded(format!(
                    "{} skips requested, {} left",
                    skips, left
                )));
            }
            self.skips_left = Some(left - skips);
        }
        self.extra_left -= extra;
        Ok(())
    }
}

/// Apply a validated fill move: each listed cup gains its amount, the
/// phase advances to intermediate. Returns the total water added.
pub fn apply_fill<N: FillValue>(state: &mut CupState<N>, mv: &FillMove<N>) -> Result<N> {
    if state.phase != Phase::Start {
        return Err(GameError::WrongPhase { expected: "start", found: state.phase.name() });
    }
    mv.validate(state.n())?;
    for (&c, amt) in &mv.adds {
        state.fills[c] += amt.clone();
    }
    state.phase = Phase::Intermediate;
    Ok(mv.total())
}

/// Result of applying one empty move.
#[derive(Debug, Clone)]
pub struct EmptyOutcome<N: FillValue> {
    /// Water actually removed (zeroing removes less than a full unit).
    pub removed: N,
    /// Cups that held less than one unit and were reset to zero.
    pub zeroed: u32,
}

/// Apply an empty move: every selected cup loses one unit (floored at zero
/// in standard semantics), budgets are debited, the round advances.
pub fn apply_empty<N: FillValue>(
    state: &mut CupState<N>,
    mv: &EmptyMove,
    semantics: FillSemantics,
    p: usize,
    ledger: &mut BudgetLedger,
) -> Result<EmptyOutcome<N>> {
    if state.phase != Phase::Intermediate {
        return Err(GameError::WrongPhase { expected: "intermediate", found: state.phase.name() });
    }
    for &c in &mv.cups {
        if c >= state.n() {
            return Err(GameError::UnknownCup(c, state.n()));
        }
    }
    let extra = mv.extra_used(p);
    let skips = if mv.cups.len() < p { (p - mv.cups.len()) as u64 } else { 0 };
    if mv.skipped != skips {
        return Err(GameError::BudgetExceeded(format!(
            "inconsistent skip count: move says {}, budget implies {}",
            mv.skipped, skips
        )));
    }
    ledger.debit(extra, skips)?;

    let one = N::one();
    let mut removed = N::zero();
    let mut zeroed = 0u32;
    for &c in &mv.cups {
        let fill = state.fills[c].clone();
        match semantics {
            FillSemantics::Negative => {
                state.fills[c] = fill - one.clone();
                removed += one.clone();
            }
            FillSemantics::Standard => {
                if fill < one {
                    zeroed += 1;
                    removed += fill;
                    state.fills[c] = N::zero();
                } else {
                    state.fills[c] = fill - one.clone();
                    removed += one.clone();
                }
            }
        }
    }
    state.phase = Phase::Start;
    state.round += 1;
    Ok(EmptyOutcome { removed, zeroed })
}

/// Per-round measurements, taken at the end of the round (state S_{t+1}).
#[derive(Debug, Clone)]
pub struct RoundRecord<N: FillValue> {
    pub round: u64,
    pub p: usize,
    pub backlog: N,
    pub anti_backlog: N,
    pub mass: N,
    pub fill_range: N,
    pub zeroed: u32,
    /// True iff the filler reported an anchor set this round and the
    /// emptier failed to empty every anchor cup.
    pub neglect: bool,
    pub added: N,
    pub removed: N,
    /// Anchor snapshot, kept only when the trace is retained.
    pub anchors: Option<BTreeSet<usize>>,
}

/// Why the game loop stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    RoundsExhausted,
    /// The filler strategy completed its construction.
    Finished { designated: Option<usize> },
    /// A strict monitor reported a violation.
    MonitorAbort { monitor: String },
}

/// Everything a finished game reports.
#[derive(Debug, Clone)]
pub struct GameOutcome<N: FillValue> {
    pub final_state: CupState<N>,
    pub rounds_used: u64,
    pub termination: Termination,
    pub trace: Vec<RoundRecord<N>>,
    pub moves: Vec<(FillMove<N>, EmptyMove)>,
    pub verdicts: Vec<crate::monitor::InvariantVerdict>,
    /// Maximum backlog over all start states S_0, S_1, ....
    pub max_backlog: N,
    /// Maximum fill range over all start states.
    pub max_fill_range: N,
}

/// Retention knobs for long games.
#[derive(Debug, Clone, Copy)]
pub struct TraceOpts {
    pub keep_trace: bool,
    pub keep_moves: bool,
}

impl Default for TraceOpts {
    fn default() -> Self {
        TraceOpts { keep_trace: true, keep_moves: true }
    }
}

/// Drive a full game for at most `rounds` rounds.
///
/// Stops early when the filler reports completion or a strict monitor
/// trips. Strategy errors abort the run.
pub fn run_game<N: FillValue>(
    cfg: &GameConfig,
    mut filler: FillerRef<'_, N>,
    emptier: &mut dyn Emptier<N>,
    rounds: u64,
    monitors: &mut [Box<dyn Monitor<N>>],
    opts: TraceOpts,
) -> Result<GameOutcome<N>> {
    run_game_from(CupState::new(cfg.n), cfg, &mut filler, emptier, rounds, monitors, opts)
}

/// As [`run_game`], but from an arbitrary starting state.
pub fn run_game_from<N: FillValue>(
    mut state: CupState<N>,
    cfg: &GameConfig,
    filler: &mut FillerRef<'_, N>,
    emptier: &mut dyn Emptier<N>,
    rounds: u64,
    monitors: &mut [Box<dyn Monitor<N>>],
    opts: TraceOpts,
) -> Result<GameOutcome<N>> {
    assert_eq!(state.n(), cfg.n, "state size must match config");
    let mut ledger = BudgetLedger::new(cfg);
    let mut trace = Vec::new();
    let mut moves = Vec::new();
    let mut last_empty: Option<EmptyMove> = None;
    let mut max_backlog = state.backlog();
    let mut max_fill_range = state.fill_range();
    let mut termination = Termination::RoundsExhausted;

    let observe_start = |st: &CupState<N>,
                         monitors: &mut [Box<dyn Monitor<N>>]|
     -> Option<String> {
        for m in monitors.iter_mut() {
            m.on_start_state(st);
            if m.strict() && m.violated() {
                return Some(m.id().to_string());
            }
        }
        None
    };

    if let Some(id) = observe_start(&state, monitors) {
        return Ok(GameOutcome {
            final_state: state,
            rounds_used: 0,
            termination: Termination::MonitorAbort { monitor: id },
            trace,
            moves,
            verdicts: monitors.iter().map(|m| m.verdict()).collect(),
            max_backlog,
            max_fill_range,
        });
    }

    let mut t = 0u64;
    'game: while t < rounds {
        let fill_move = match filler.next(&state, last_empty.as_ref())? {
            FillerRound::Move(m) => m,
            FillerRound::Finished { designated } => {
                termination = Termination::Finished { designated };
                break 'game;
            }
        };
        let anchors = filler.anchors();

        let added = apply_fill(&mut state, &fill_move)?;

        for m in monitors.iter_mut() {
            m.on_intermediate(&state, &fill_move);
            if m.strict() && m.violated() {
                termination = Termination::MonitorAbort { monitor: m.id().to_string() };
                break 'game;
            }
        }

        let empty_move = emptier.select(&state, fill_move.p, &ledger.view());
        for m in monitors.iter_mut() {
            m.on_empty(&state, &empty_move);
            if m.strict() && m.violated() {
                termination = Termination::MonitorAbort { monitor: m.id().to_string() };
                break 'game;
            }
        }

        let neglect = anchors
            .as_ref()
            .map(|a| a.iter().any(|c| !empty_move.contains(*c)))
            .unwrap_or(false);

        let out = apply_empty(&mut state, &empty_move, cfg.semantics, fill_move.p, &mut ledger)?;

        // Full per-round metrics are only worth computing when someone
        // observes them; long Monte-Carlo games track the extrema alone.
        let light = monitors.is_empty() && !opts.keep_trace;
        let backlog = state.backlog();
        let anti = state.anti_backlog();
        let range = backlog.clone() - anti.clone();
        if backlog > max_backlog {
            max_backlog = backlog.clone();
        }
        if range > max_fill_range {
            max_fill_range = range.clone();
        }
        if !light {
            let rec = RoundRecord {
                round: t,
                p: fill_move.p,
                backlog,
                anti_backlog: anti,
                mass: state.mass_all(),
                fill_range: range,
                zeroed: out.zeroed,
                neglect,
                added,
                removed: out.removed,
                anchors: if opts.keep_trace { anchors } else { None },
            };
            for m in monitors.iter_mut() {
                m.on_round_complete(&rec, &state);
                if m.strict() && m.violated() {
                    termination = Termination::MonitorAbort { monitor: m.id().to_string() };
                    break 'game;
                }
            }
            if opts.keep_trace {
                trace.push(rec);
            }
        }
        if opts.keep_moves {
            moves.push((fill_move, empty_move.clone()));
        }
        last_empty = Some(empty_move);
        t += 1;

        if let Some(id) = observe_start(&state, monitors) {
            termination = Termination::MonitorAbort { monitor: id };
            break 'game;
        }
    }

    Ok(GameOutcome {
        final_state: state,
        rounds_used: t,
        termination,
        trace,
        moves,
        verdicts: monitors.iter().map(|m| m.verdict()).collect(),
        max_backlog,
        max_fill_range,
    })
}

/// Replay a recorded move log through the round mechanics. Useful for
/// twin runs under the other fill semantics and for bit-identity checks.
pub fn replay<N: FillValue>(
    cfg: &GameConfig,
    moves: &[(FillMove<N>, EmptyMove)],
) -> Result<(CupState<N>, Vec<RoundRecord<N>>)> {
    let mut state = CupState::new(cfg.n);
    let mut ledger = BudgetLedger::new(cfg);
    let mut trace = Vec::with_capacity(moves.len());
    for (t, (fm, em)) in moves.iter().enumerate() {
        let added = apply_fill(&mut state, fm)?;
        let out = apply_empty(&mut state, em, cfg.semantics, fm.p, &mut ledger)?;
        trace.push(RoundRecord {
            round: t as u64,
            p: fm.p,
            backlog: state.backlog(),
            anti_backlog: state.anti_backlog(),
            mass: state.mass_all(),
            fill_range: state.fill_range(),
            zeroed: out.zeroed,
            neglect: false,
            added,
            removed: out.removed,
            anchors: None,
        });
    }
    Ok((state, trace))
}

/// Write a trace as CSV with the stable column set.
pub fn write_trace_csv<N: FillValue, W: Write>(w: &mut W, trace: &[RoundRecord<N>]) -> std::io::Result<()> {
    writeln!(w, "round,p,backlog,anti_backlog,mass,fill_range,zeroed,neglect")?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.round, r.p, r.backlog, r.anti_backlog, r.mass, r.fill_range, r.zeroed, r.neglect as u8
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{rat, Rat};

    fn cfg(n: usize, sem: FillSemantics) -> GameConfig {
        GameConfig::regular(n, sem, 0)
    }

    #[test]
    fn fill_example_half_each() {
        let mut s: CupState<Rat> = CupState::new(2);
        let m = FillMove::new(1, [(0, rat(1, 2)), (1, rat(1, 2))]);
        apply_fill(&mut s, &m).unwrap();
        assert_eq!(s.fills, vec![rat(1, 2), rat(1, 2)]);
        assert_eq!(s.phase, Phase::Intermediate);
        assert_eq!(s.round, 0);
    }

    #[test]
    fn empty_fill_move_only_changes_phase() {
        let mut s: CupState<Rat> = CupState::with_fills(vec![rat(3, 7), rat(-2, 5)]);
        let m = FillMove::new(1, []);
        apply_fill(&mut s, &m).unwrap();
        assert_eq!(s.fills, vec![rat(3, 7), rat(-2, 5)]);
        assert_eq!(s.phase, Phase::Intermediate);
    }

    #[test]
    fn overfull_amount_rejected() {
        let mut s: CupState<Rat> = CupState::new(3);
        let m = FillMove::new(1, [(0, rat(6, 5))]);
        assert!(matches!(apply_fill(&mut s, &m), Err(GameError::InvalidFill(_))));
    }

    #[test]
    fn zeroing_and_negative_semantics() {
        let c = cfg(1, FillSemantics::Standard);
        let mut ledger = BudgetLedger::new(&c);
        let mut s: CupState<Rat> = CupState::with_fills(vec![rat(2, 5)]);
        s.phase = Phase::Intermediate;
        let em = EmptyMove::new([0], 1).unwrap();
        let out = apply_empty(&mut s, &em, FillSemantics::Standard, 1, &mut ledger).unwrap();
        assert_eq!(s.fills[0], rat(0, 1));
        assert_eq!(out.zeroed, 1);
        assert_eq!(out.removed, rat(2, 5));
        assert_eq!(s.round, 1);
        assert_eq!(s.phase, Phase::Start);

        let c = cfg(1, FillSemantics::Negative);
        let mut ledger = BudgetLedger::new(&c);
        let mut s: CupState<Rat> = CupState::with_fills(vec![rat(2, 5)]);
        s.phase = Phase::Intermediate;
        let out = apply_empty(&mut s, &em, FillSemantics::Negative, 1, &mut ledger).unwrap();
        assert_eq!(s.fills[0], rat(-3, 5));
        assert_eq!(out.zeroed, 0);
        assert_eq!(out.removed, rat(1, 1));
    }

    #[test]
    fn skip_with_no_budget_is_rejected() {
        let c = GameConfig::budgeted(2, FillSemantics::Standard, 0, Some(0), 0);
        let mut ledger = BudgetLedger::new(&c);
        let mut s: CupState<Rat> = CupState::new(2);
        s.phase = Phase::Intermediate;
        let em = EmptyMove::new([], 1).unwrap();
        assert!(matches!(
            apply_empty(&mut s, &em, FillSemantics::Standard, 1, &mut ledger),
            Err(GameError::BudgetExceeded(_))
        ));
    }

    #[test]
    fn extra_emptying_needs_budget() {
        let c = cfg(3, FillSemantics::Negative);
        let mut ledger = BudgetLedger::new(&c);
        let mut s: CupState<Rat> = CupState::new(3);
        s.phase = Phase::Intermediate;
        let em = EmptyMove::new([0, 1], 1).unwrap();
        assert!(matches!(
            apply_empty(&mut s, &em, FillSemantics::Negative, 1, &mut ledger),
            Err(GameError::BudgetExceeded(_))
        ));

        let c2 = GameConfig::budgeted(3, FillSemantics::Negative, 1, None, 0);
        let mut ledger2 = BudgetLedger::new(&c2);
        let mut s2: CupState<Rat> = CupState::new(3);
        s2.phase = Phase::Intermediate;
        apply_empty(&mut s2, &em, FillSemantics::Negative, 1, &mut ledger2).unwrap();
        assert_eq!(ledger2.extra_left, 0);
    }

    #[test]
    fn phase_guards() {
        let mut s: CupState<Rat> = CupState::new(1);
        let em = EmptyMove::new([0], 1).unwrap();
        let c = cfg(1, FillSemantics::Standard);
        let mut ledger = BudgetLedger::new(&c);
        assert!(matches!(
            apply_empty(&mut s, &em, FillSemantics::Standard, 1, &mut ledger),
            Err(GameError::WrongPhase { .. })
        ));
        s.phase = Phase::Intermediate;
        let fm = FillMove::new(1, [(0, rat(1, 2))]);
        assert!(matches!(apply_fill(&mut s, &fm), Err(GameError::WrongPhase { .. })));
    }
}
