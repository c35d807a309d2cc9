//! Oblivious filling strategies.
//!
//! These strategies never see the cup state or the emptier's moves; every
//! decision is a function of the private RNG stream and the strategy's own
//! move history. The library:
//!
//! - `Flatalg`: split the budget evenly (p = n/2, half a unit per cup) for
//!   a fixed number of rounds. Against any delta-greedy-like emptier this
//!   drives the fill-range into the band 2(2 + delta) and never lets it
//!   grow past its starting value.
//! - `Randalg(k)`: keep an active set of k cups, pour one unit split
//!   evenly across it each round with p = 1, evict a uniformly random
//!   member after each round, and designate the survivor. If the emptier
//!   never touches the survivor it gains the harmonic sum 1/2 + ... + 1/k.
//! - `Rep`: the repetition construction. Donation-processes repeatedly
//!   (flatten B, run an inner strategy on B) a random number of times
//!   drawn from [1, M], then move the inner strategy's designated cup into
//!   the anchor set A, pouring one unit into every anchor cup throughout.
//!   Randomizing which application donates keeps the emptier from
//!   spending its bounded interference where it matters.
//! - `ObliviousBase`: run `Rep(Randalg(k))`, then exploit greedy-likeness:
//!   drop to p = 1 and pour into one chosen cup; the emptier must keep
//!   draining the unknown high anchor cup first, so the chosen cup climbs.
//! - `ObliviousAmplify` / `build_oblivious_poly`: the amplification and
//!   its recursion, at desk-scale parameters held in [`DeskParams`].
//!
//! Paper-scale parameterizations (round counts that grow like
//! 2^polylog(N)) are recorded in the provenance metadata but never
//! instantiated; desk-scale overrides are first-class configuration.

use super::{FillerRound, FinishPolicy, ObliviousFiller};
use crate::error::{CupId, GameError, Result};
use crate::filler::common::RotatingPour;
use crate::guarantee::{min_n_for_delta, GuaranteeMap, Provenance};
use crate::moves::FillMove;
use crate::num::{rat, FillValue, Rat};
use crate::rng::SplitRng;
use num::bigint::BigUint;
use num::{One, Zero};
use std::collections::BTreeSet;
use std::sync::Arc;

/// One step of a subset-level oblivious strategy. Moves address local
/// indices `0..n` of the strategy's own view; parents map them outward.
pub enum ObStep<N: FillValue> {
    Move(FillMove<N>),
    Done { designated: Option<usize> },
}

pub trait ObliviousStrategy<N: FillValue>: Send {
    fn step(&mut self, rng: &mut SplitRng) -> Result<ObStep<N>>;
    /// Local indices of the current anchor set, if any (introspection for
    /// tracing; never an input to the strategy itself).
    fn anchors_local(&self) -> Option<Vec<usize>> {
        None
    }
}

pub trait ObliviousBuilder<N: FillValue>: Send + Sync {
    fn instantiate(&self, n: usize) -> Result<Box<dyn ObliviousStrategy<N>>>;
    fn guarantee(&self) -> &GuaranteeMap;
    fn label(&self) -> String;
}

/// The harmonic gain sum 1/2 + 1/3 + ... + 1/k.
pub fn harmonic_gain(k: usize) -> Rat {
    let mut d = Rat::zero();
    for i in 2..=k {
        d += rat(1, i as i64);
    }
    d
}

// ---------------------------------------------------------------------------
// flatalg
// ---------------------------------------------------------------------------

/// Even-split filling for a fixed round budget.
pub struct Flatalg {
    n: usize,
    left: u64,
}

impl Flatalg {
    pub fn new(n: usize, rounds: u64) -> Self {
        Flatalg { n, left: rounds }
    }

    /// The per-round even-split move on `n` cups: p = floor(n/2), each cup
    /// receives p/n. Returns `None` when n < 2 (a single cup is already
    /// flat and p = 0 is not a legal round).
    pub fn move_on<N: FillValue>(n: usize) -> Option<FillMove<N>> {
        if n < 2 {
            return None;
        }
        let p = n / 2;
        let share = N::from_int(p as i64).div_nat(n);
        Some(FillMove::new(p, (0..n).map(|c| (c, share.clone()))))
    }
}

impl<N: FillValue> ObliviousStrategy<N> for Flatalg {
    fn step(&mut self, _rng: &mut SplitRng) -> Result<ObStep<N>> {
        if self.left == 0 {
            return Ok(ObStep::Done { designated: None });
        }
        self.left -= 1;
        match Flatalg::move_on(self.n) {
            Some(mv) => Ok(ObStep::Move(mv)),
            None => Ok(ObStep::Done { designated: None }),
        }
    }
}

pub struct FlatalgBuilder {
    pub rounds: u64,
    map: GuaranteeMap,
}

impl FlatalgBuilder {
    pub fn new(rounds: u64, n_max: usize) -> Self {
        let f = vec![Rat::zero(); n_max + 1];
        let t = vec![BigUint::from(rounds); n_max + 1];
        FlatalgBuilder {
            rounds,
            map: GuaranteeMap { f, t, provenance: Arc::new(Provenance::Trivalg) },
        }
    }
}

impl<N: FillValue> ObliviousBuilder<N> for FlatalgBuilder {
    fn instantiate(&self, n: usize) -> Result<Box<dyn ObliviousStrategy<N>>> {
        Ok(Box::new(Flatalg::new(n, self.rounds)))
    }
    fn guarantee(&self) -> &GuaranteeMap {
        &self.map
    }
    fn label(&self) -> String {
        format!("flatalg:rounds={}", self.rounds)
    }
}

// ---------------------------------------------------------------------------
// randalg
// ---------------------------------------------------------------------------

/// The k-cup elimination strategy; runs exactly k - 1 rounds.
pub struct Randalg {
    active: Vec<usize>,
    evict_pending: bool,
}

impl Randalg {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(GameError::Config(format!("randalg needs 1 <= k <= n, got k={k}, n={n}")));
        }
        Ok(Randalg { active: (0..k).collect(), evict_pending: false })
    }
}

impl<N: FillValue> ObliviousStrategy<N> for Randalg {
    fn step(&mut self, rng: &mut SplitRng) -> Result<ObStep<N>> {
        if self.evict_pending {
            // The eviction happens after the emptier's response, i.e. at
            // the start of the next step.
            let i = rng.below(self.active.len() as u64) as usize;
            self.active.remove(i);
            self.evict_pending = false;
        }
        if self.active.len() == 1 {
            return Ok(ObStep::Done { designated: Some(self.active[0]) });
        }
        let share = N::one().div_nat(self.active.len());
        let mv = FillMove::new(1, self.active.iter().map(|&c| (c, share.clone())));
        self.evict_pending = true;
        Ok(ObStep::Move(mv))
    }
}

pub struct RandalgBuilder {
    pub k: usize,
    map: GuaranteeMap,
}

impl RandalgBuilder {
    pub fn new(k: usize, n_max: usize) -> Self {
        let f = vec![Rat::zero(); n_max + 1];
        let t = vec![BigUint::from(k.saturating_sub(1)); n_max + 1];
        RandalgBuilder { k, map: GuaranteeMap { f, t, provenance: Arc::new(Provenance::Trivalg) } }
    }
}

impl<N: FillValue> ObliviousBuilder<N> for RandalgBuilder {
    fn instantiate(&self, n: usize) -> Result<Box<dyn ObliviousStrategy<N>>> {
        Ok(Box::new(Randalg::new(self.k, n)?))
    }
    fn guarantee(&self) -> &GuaranteeMap {
        &self.map
    }
    fn label(&self) -> String {
        format!("randalg:k={}", self.k)
    }
}

// ---------------------------------------------------------------------------
// rep
// ---------------------------------------------------------------------------

enum RepPhase {
    PickM,
    Flatten { left: u64 },
    Inner,
    Done,
}

/// The repetition construction over an inner strategy. After `n_a`
/// donation-processes the anchor set holds the donated cups and the
/// strategy reports completion; the parent reads `anchor_set()` and the
/// shrunken `non_anchor_set()`.
pub struct Rep<N: FillValue> {
    a: Vec<usize>,
    b: Vec<usize>,
    donations_left: usize,
    m_cap: u64,
    flatten_rounds: u64,
    inner: Arc<dyn ObliviousBuilder<N>>,
    phase: RepPhase,
    m_left: u64,
    inner_inst: Option<Box<dyn ObliviousStrategy<N>>>,
}

impl<N: FillValue> Rep<N> {
    pub fn new(
        n: usize,
        delta: &Rat,
        m_cap: u64,
        flatten_rounds: u64,
        inner: Arc<dyn ObliviousBuilder<N>>,
    ) -> Result<Self> {
        if m_cap == 0 {
            return Err(GameError::Config("rep needs M >= 1".into()));
        }
        let (n_a, _) = GuaranteeMap::split(n, delta);
        if n_a == 0 || n_a >= n {
            return Err(GameError::Config(format!(
                "rep needs 1 <= ceil(delta n) < n, got {} of {}",
                n_a, n
            )));
        }
        Ok(Rep {
            a: Vec::new(),
            b: (0..n).collect(),
            donations_left: n_a,
            m_cap,
            flatten_rounds,
            inner,
            phase: RepPhase::PickM,
            m_left: 0,
            inner_inst: None,
        })
    }

    pub fn anchor_set(&self) -> &[usize] {
        &self.a
    }

    pub fn non_anchor_set(&self) -> &[usize] {
        &self.b
    }

    fn compose(&self, mv: FillMove<N>) -> FillMove<N> {
        let mut adds: std::collections::BTreeMap<usize, N> =
            mv.adds.into_iter().map(|(i, amt)| (self.b[i], amt)).collect();
        for &a in &self.a {
            adds.insert(a, N::one());
        }
        FillMove { p: mv.p + self.a.len(), adds }
    }
}

impl<N: FillValue> ObliviousStrategy<N> for Rep<N> {
    fn step(&mut self, rng: &mut SplitRng) -> Result<ObStep<N>> {
        loop {
            match self.phase {
                RepPhase::PickM => {
                    self.m_left = 1 + rng.below(self.m_cap);
                    let flatten = if self.b.len() >= 2 { self.flatten_rounds } else { 0 };
                    self.phase = RepPhase::Flatten { left: flatten };
                }
                RepPhase::Flatten { left } => {
                    if left == 0 {
                        self.inner_inst = Some(self.inner.instantiate(self.b.len())?);
                        self.phase = RepPhase::Inner;
                        continue;
                    }
                    self.phase = RepPhase::Flatten { left: left - 1 };
                    let flat = Flatalg::move_on::<N>(self.b.len()).expect("b has >= 2 cups");
                    return Ok(ObStep::Move(self.compose(flat)));
                }
                RepPhase::Inner => {
                    match self.inner_inst.as_mut().expect("inner instantiated").step(rng)? {
                        ObStep::Move(mv) => return Ok(ObStep::Move(self.compose(mv))),
                        ObStep::Done { designated } => {
                            self.inner_inst = None;
                            self.m_left -= 1;
                            if self.m_left > 0 {
                                let flatten =
                                    if self.b.len() >= 2 { self.flatten_rounds } else { 0 };
                                self.phase = RepPhase::Flatten { left: flatten };
                                continue;
                            }
                            let d = designated.ok_or_else(|| {
                                GameError::Strategy("rep's inner strategy must designate a cup".into())
                            })?;
                            let donated = self.b.remove(d);
                            self.a.push(donated);
                            self.donations_left -= 1;
                            if self.donations_left == 0 {
                                self.phase = RepPhase::Done;
                                return Ok(ObStep::Done { designated: None });
                            }
                            self.phase = RepPhase::PickM;
                        }
                    }
                }
                RepPhase::Done => {
                    return Err(GameError::Strategy("rep stepped after done".into()))
                }
            }
        }
    }

    fn anchors_local(&self) -> Option<Vec<usize>> {
        if self.a.is_empty() {
            None
        } else {
            Some(self.a.clone())
        }
    }
}

// ---------------------------------------------------------------------------
// oblivious base
// ---------------------------------------------------------------------------

/// Desk-scale knobs for the oblivious constructions. The asymptotic
/// parameterization these stand in for is recorded in provenance metadata
/// (h and the donation range M grow with polylog factors of the true cup
/// count) and is never instantiated.
#[derive(Debug, Clone)]
pub struct DeskParams {
    /// Elimination-set size for the embedded randalg.
    pub k: usize,
    /// Target gain of the base construction; the pump phase runs for
    /// ceil(5h/8) rounds and certifies h/8.
    pub h: Rat,
    /// Donation sampling range: applications per process ~ uniform[1, M].
    pub m_cap: u64,
    /// Rounds of flattening before each inner application.
    pub flatten_rounds: u64,
    /// Amplification split parameter.
    pub delta: Rat,
    /// Smallest subproblem the base accepts (also the scale unit in the
    /// certified power-law curve).
    pub n_b: usize,
}

impl Default for DeskParams {
    fn default() -> Self {
        DeskParams {
            k: 3,
            h: rat(2, 1),
            m_cap: 4,
            flatten_rounds: 32,
            delta: rat(1, 4),
            n_b: 8,
        }
    }
}

impl DeskParams {
    pub fn delta_base(&self) -> Rat {
        rat(1, 2 * self.k as i64)
    }

    /// Pump length: ceil(5 * h / 8) rounds.
    pub fn pump_rounds(&self) -> u64 {
        let five_h_over_8 = rat(5, 8) * self.h.clone();
        let c = five_h_over_8.ceil().to_integer();
        u64::try_from(c).unwrap_or(0)
    }

    /// Certified base gain H' = h / 8.
    pub fn base_gain(&self) -> Rat {
        self.h.clone() / rat(8, 1)
    }
}

enum BasePhase {
    InRep,
    Pump { left: u64 },
    Finished,
}

/// Rep over randalg, then a known-cup pump.
pub struct ObliviousBase<N: FillValue> {
    rep: Rep<N>,
    phase: BasePhase,
    c0: Option<usize>,
    pump_rounds: u64,
}

impl<N: FillValue> ObliviousBase<N> {
    pub fn new(n: usize, params: &DeskParams, n_max: usize) -> Result<Self> {
        if n < params.n_b.max(2 * params.k) {
            return Err(GameError::Config(format!(
                "oblivious base needs n >= {}, got {}",
                params.n_b.max(2 * params.k),
                n
            )));
        }
        let inner: Arc<dyn ObliviousBuilder<N>> =
            Arc::new(RandalgBuilder::new(params.k, n_max));
        let rep = Rep::new(n, &params.delta_base(), params.m_cap, params.flatten_rounds, inner)?;
        Ok(ObliviousBase { rep, phase: BasePhase::InRep, c0: None, pump_rounds: params.pump_rounds() })
    }
}

impl<N: FillValue> ObliviousStrategy<N> for ObliviousBase<N> {
    fn step(&mut self, rng: &mut SplitRng) -> Result<ObStep<N>> {
        loop {
            match self.phase {
                BasePhase::InRep => match self.rep.step(rng)? {
                    ObStep::Move(mv) => return Ok(ObStep::Move(mv)),
                    ObStep::Done { .. } => {
                        // Choose the first remaining non-anchor cup and pump
                        // it; greedy-likeness forces the emptier to chase
                        // the unknown high anchor cup first.
                        let c0 = *self.rep.non_anchor_set().first().ok_or_else(|| {
                            GameError::Strategy("no non-anchor cup left to pump".into())
                        })?;
                        self.c0 = Some(c0);
                        self.phase = BasePhase::Pump { left: self.pump_rounds };
                    }
                },
                BasePhase::Pump { left } => {
                    let c0 = self.c0.expect("pump target chosen");
                    if left == 0 {
                        self.phase = BasePhase::Finished;
                        return Ok(ObStep::Done { designated: Some(c0) });
                    }
                    self.phase = BasePhase::Pump { left: left - 1 };
                    return Ok(ObStep::Move(FillMove::new(1, [(c0, N::one())])));
                }
                BasePhase::Finished => {
                    return Err(GameError::Strategy("base stepped after done".into()))
                }
            }
        }
    }

    fn anchors_local(&self) -> Option<Vec<usize>> {
        match self.phase {
            BasePhase::InRep => self.rep.anchors_local(),
            _ => None,
        }
    }
}

pub struct ObliviousBaseBuilder {
    pub params: DeskParams,
    map: GuaranteeMap,
    n_max: usize,
}

impl ObliviousBaseBuilder {
    pub fn new(params: DeskParams, n_max: usize) -> Self {
        let gain = params.base_gain();
        let min_n = params.n_b.max(2 * params.k);
        let mut f = vec![Rat::zero(); n_max + 1];
        let mut t = vec![BigUint::zero(); n_max + 1];
        for k in 1..=n_max {
            if k >= min_n {
                f[k] = gain.clone();
            }
            let n_a = (k + 2 * params.k - 1) / (2 * params.k);
            let per_app = params.flatten_rounds + params.k.saturating_sub(1) as u64;
            t[k] = BigUint::from(n_a as u64)
                * BigUint::from(params.m_cap)
                * BigUint::from(per_app)
                + BigUint::from(params.pump_rounds());
        }
        let provenance = Arc::new(Provenance::ObliviousBase {
            h: params.h.clone(),
            k: params.k,
            m: params.m_cap,
            flatten_rounds: params.flatten_rounds,
            paper_scale: "h, k = ceil(e^(2h+1)), delta = 1/(2k), M = 2^Theta(log^4 N), flatten = Theta(N^2)".into(),
        });
        ObliviousBaseBuilder { params, map: GuaranteeMap { f, t, provenance }, n_max }
    }
}

impl<N: FillValue> ObliviousBuilder<N> for ObliviousBaseBuilder {
    fn instantiate(&self, n: usize) -> Result<Box<dyn ObliviousStrategy<N>>> {
        Ok(Box::new(ObliviousBase::new(n, &self.params, self.n_max)?))
    }
    fn guarantee(&self) -> &GuaranteeMap {
        &self.map
    }
    fn label(&self) -> String {
        format!(
            "oblivious-base:h={},k={},M={},flatten={}",
            self.params.h, self.params.k, self.params.m_cap, self.params.flatten_rounds
        )
    }
}

// ---------------------------------------------------------------------------
// oblivious amplification
// ---------------------------------------------------------------------------

enum ObAmpPhase {
    InRep,
    Step2Flatten,
    Step2Inner,
    Finished,
}

/// One oblivious amplification level: rep over the inner strategy, then
/// flatten the anchor set and run the inner strategy inside it.
pub struct ObliviousAmplify<N: FillValue> {
    rep: Rep<N>,
    inner: Arc<dyn ObliviousBuilder<N>>,
    flatten_rounds: u64,
    phase: ObAmpPhase,
    step2: Option<Box<dyn ObliviousStrategy<N>>>,
    step2_flat: Option<Flatalg>,
}

impl<N: FillValue> ObliviousAmplify<N> {
    fn compose_a(&self, mv: FillMove<N>) -> FillMove<N> {
        let a = self.rep.anchor_set();
        let adds = mv.adds.into_iter().map(|(i, amt)| (a[i], amt)).collect();
        FillMove { p: mv.p, adds }
    }
}

impl<N: FillValue> ObliviousStrategy<N> for ObliviousAmplify<N> {
    fn step(&mut self, rng: &mut SplitRng) -> Result<ObStep<N>> {
        loop {
            match self.phase {
                ObAmpPhase::InRep => match self.rep.step(rng)? {
                    ObStep::Move(mv) => return Ok(ObStep::Move(mv)),
                    ObStep::Done { .. } => {
                        let n_a = self.rep.anchor_set().len();
                        let flatten = if n_a >= 2 { self.flatten_rounds } else { 0 };
                        self.step2_flat = Some(Flatalg::new(n_a, flatten));
                        self.phase = ObAmpPhase::Step2Flatten;
                    }
                },
                ObAmpPhase::Step2Flatten => {
                    match self.step2_flat.as_mut().unwrap().step(rng)? {
                        ObStep::Move(mv) => return Ok(ObStep::Move(self.compose_a(mv))),
                        ObStep::Done { .. } => {
                            self.step2 =
                                Some(self.inner.instantiate(self.rep.anchor_set().len())?);
                            self.phase = ObAmpPhase::Step2Inner;
                        }
                    }
                }
                ObAmpPhase::Step2Inner => match self.step2.as_mut().unwrap().step(rng)? {
                    ObStep::Move(mv) => return Ok(ObStep::Move(self.compose_a(mv))),
                    ObStep::Done { designated } => {
                        self.phase = ObAmpPhase::Finished;
                        let mapped = designated.map(|d| self.rep.anchor_set()[d]);
                        return Ok(ObStep::Done { designated: mapped });
                    }
                },
                ObAmpPhase::Finished => {
                    return Err(GameError::Strategy("amplify stepped after done".into()))
                }
            }
        }
    }

    fn anchors_local(&self) -> Option<Vec<usize>> {
        match self.phase {
            ObAmpPhase::InRep => self.rep.anchors_local(),
            _ => None,
        }
    }
}

pub struct ObliviousAmplifyBuilder<N: FillValue> {
    inner: Arc<dyn ObliviousBuilder<N>>,
    delta: Rat,
    m_cap: u64,
    flatten_rounds: u64,
    map: GuaranteeMap,
}

impl<N: FillValue> ObliviousAmplifyBuilder<N> {
    pub fn new(
        inner: Arc<dyn ObliviousBuilder<N>>,
        delta: Rat,
        m_cap: u64,
        flatten_rounds: u64,
    ) -> Self {
        let map = inner.guarantee().amplify_oblivious(&delta, m_cap);
        ObliviousAmplifyBuilder { inner, delta, m_cap, flatten_rounds, map }
    }
}

impl<N: FillValue> ObliviousBuilder<N> for ObliviousAmplifyBuilder<N> {
    fn instantiate(&self, n: usize) -> Result<Box<dyn ObliviousStrategy<N>>> {
        let min_n = min_n_for_delta(&self.delta);
        if n < min_n {
            return Err(GameError::Config(format!(
                "oblivious amplification needs n >= ceil(4/delta^2) = {}, got {}",
                min_n, n
            )));
        }
        let (n_a, n_b) = GuaranteeMap::split(n, &self.delta);
        if n_a == 0 || n_b == 0 {
            return self.inner.instantiate(n);
        }
        let inner_f = self.inner.guarantee();
        let shrink = (Rat::one() - self.delta.clone()) * (Rat::one() - self.delta.clone());
        let combined = shrink * inner_f.f(n_b).clone() + inner_f.f(n_a).clone();
        if combined <= *inner_f.f(n) {
            return self.inner.instantiate(n);
        }
        let rep = Rep::new(n, &self.delta, self.m_cap, self.flatten_rounds, self.inner.clone())?;
        Ok(Box::new(ObliviousAmplify {
            rep,
            inner: self.inner.clone(),
            flatten_rounds: self.flatten_rounds,
            phase: ObAmpPhase::InRep,
            step2: None,
            step2_flat: None,
        }))
    }
    fn guarantee(&self) -> &GuaranteeMap {
        &self.map
    }
    fn label(&self) -> String {
        format!("oblivious-amplify[{}]({})", self.delta, self.inner.label())
    }
}

// ---------------------------------------------------------------------------
// the recursion
// ---------------------------------------------------------------------------

pub struct ObliviousChain<N: FillValue> {
    pub builder: Arc<dyn ObliviousBuilder<N>>,
    pub levels: Vec<GuaranteeMap>,
    /// Power-law thresholds: g_0 = n_b ceil(16/delta), g_i = floor(g_{i-1}/(1-delta)).
    pub g: Vec<BigUint>,
    pub delta: Rat,
}

/// Chain `levels` oblivious amplifications over the desk-scale base.
pub fn build_oblivious_poly<N: FillValue>(
    levels: usize,
    params: &DeskParams,
    n_max: usize,
) -> Result<ObliviousChain<N>> {
    if params.delta <= Rat::zero() || params.delta >= rat(1, 2) {
        return Err(GameError::Config("oblivious chain needs delta in (0, 1/2)".into()));
    }
    let mut builder: Arc<dyn ObliviousBuilder<N>> =
        Arc::new(ObliviousBaseBuilder::new(params.clone(), n_max));
    let mut maps = vec![builder.guarantee().clone()];
    for _ in 0..levels {
        builder = Arc::new(ObliviousAmplifyBuilder::new(
            builder,
            params.delta.clone(),
            params.m_cap,
            params.flatten_rounds,
        ));
        maps.push(builder.guarantee().clone());
    }
    let sixteen_over_delta = (rat(16, 1) / params.delta.clone()).ceil().to_integer();
    let g0 = BigUint::try_from(sixteen_over_delta).map_err(|_| {
        GameError::Config("bad delta for threshold sequence".into())
    })? * BigUint::from(params.n_b as u64);
    let mut g = vec![g0];
    // floor(g / (1 - delta)) computed exactly as g * den / (den - num).
    let num = params.delta.numer().clone();
    let den = params.delta.denom().clone();
    let shrink_den = BigUint::try_from(den.clone() - num).unwrap();
    let den_u = BigUint::try_from(den).unwrap();
    for _ in 0..levels {
        let prev = g.last().unwrap().clone();
        g.push(prev * den_u.clone() / shrink_den.clone());
    }
    Ok(ObliviousChain { builder, levels: maps, g, delta: params.delta.clone() })
}

// ---------------------------------------------------------------------------
// driver
// ---------------------------------------------------------------------------

/// Adapts a subset-level oblivious strategy to the engine's blind filler
/// interface on the full cup set.
pub struct ObliviousDriver<N: FillValue> {
    builder: Arc<dyn ObliviousBuilder<N>>,
    n: usize,
    rng: SplitRng,
    label: String,
    policy: FinishPolicy,
    strategy: Option<Box<dyn ObliviousStrategy<N>>>,
    runs_completed: u32,
    fallback: Option<RotatingPour>,
    pub first_designated: Option<CupId>,
}

impl<N: FillValue> ObliviousDriver<N> {
    pub fn new(
        builder: Arc<dyn ObliviousBuilder<N>>,
        n: usize,
        rng: SplitRng,
        policy: FinishPolicy,
    ) -> Self {
        let label = builder.label();
        ObliviousDriver {
            builder,
            n,
            rng,
            label,
            policy,
            strategy: None,
            runs_completed: 0,
            fallback: None,
            first_designated: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl<N: FillValue> ObliviousFiller<N> for ObliviousDriver<N> {
    fn next(&mut self) -> Result<FillerRound<N>> {
        if let Some(fb) = self.fallback.as_mut() {
            return ObliviousFiller::<N>::next(fb);
        }
        let mut attempts = 0u32;
        loop {
            if self.strategy.is_none() {
                self.strategy = Some(self.builder.instantiate(self.n)?);
            }
            match self.strategy.as_mut().unwrap().step(&mut self.rng)? {
                ObStep::Move(mv) => return Ok(FillerRound::Move(mv)),
                ObStep::Done { designated } => {
                    if self.first_designated.is_none() {
                        self.first_designated = designated;
                    }
                    self.strategy = None;
                    self.runs_completed += 1;
                    match self.policy {
                        FinishPolicy::Stop => {
                            return Ok(FillerRound::Finished { designated });
                        }
                        FinishPolicy::RestartThenRotate { restarts } => {
                            if self.runs_completed > restarts {
                                let mut fb = RotatingPour::new(self.n);
                                let r = ObliviousFiller::<N>::next(&mut fb);
                                self.fallback = Some(fb);
                                return r;
                            }
                            attempts += 1;
                            if attempts >= 3 {
                                return Err(GameError::Strategy(
                                    "oblivious strategy completes without moving".into(),
                                ));
                            }
                        }
                    }
                }
            }
        }
    }

    fn anchors(&self) -> Option<BTreeSet<CupId>> {
        self.strategy
            .as_ref()
            .and_then(|s| s.anchors_local())
            .map(|v| v.into_iter().collect())
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Rat;
    use crate::rng::{consumer, SplitRng};

    fn rng() -> SplitRng {
        SplitRng::new(42, 0, consumer::FILLER)
    }

    #[test]
    fn harmonic_gain_values() {
        assert_eq!(harmonic_gain(1), rat(0, 1));
        assert_eq!(harmonic_gain(2), rat(1, 2));
        assert_eq!(harmonic_gain(4), rat(13, 12));
    }

    #[test]
    fn flatalg_even_split() {
        let mv = Flatalg::move_on::<Rat>(8).unwrap();
        assert_eq!(mv.p, 4);
        assert!(mv.adds.values().all(|a| *a == rat(1, 2)));
        // Odd size: p = floor(n/2), share p/n < 1/2.
        let mv = Flatalg::move_on::<Rat>(5).unwrap();
        assert_eq!(mv.p, 2);
        assert!(mv.adds.values().all(|a| *a == rat(2, 5)));
        assert!(Flatalg::move_on::<Rat>(1).is_none());
    }

    #[test]
    fn randalg_runs_exactly_k_minus_one_rounds() {
        let mut r = Randalg::new(4, 10).unwrap();
        let mut g = rng();
        let mut rounds = 0;
        loop {
            match ObliviousStrategy::<Rat>::step(&mut r, &mut g).unwrap() {
                ObStep::Move(mv) => {
                    rounds += 1;
                    assert_eq!(mv.p, 1);
                    assert_eq!(mv.total(), rat(1, 1));
                    assert_eq!(mv.adds.len(), 4 - rounds + 1);
                }
                ObStep::Done { designated } => {
                    assert!(designated.unwrap() < 4);
                    break;
                }
            }
        }
        assert_eq!(rounds, 3);
    }

    #[test]
    fn randalg_k1_designates_without_moving() {
        let mut r = Randalg::new(1, 5).unwrap();
        let mut g = rng();
        match ObliviousStrategy::<Rat>::step(&mut r, &mut g).unwrap() {
            ObStep::Done { designated } => assert_eq!(designated, Some(0)),
            _ => panic!("k=1 must finish in zero rounds"),
        }
    }

    #[test]
    fn randalg_rejects_k_above_n() {
        assert!(Randalg::new(5, 4).is_err());
    }

    #[test]
    fn rep_donates_exactly_ceil_delta_n_cups() {
        // n = 10, delta = 1/5: two donation-processes.
        let inner: Arc<dyn ObliviousBuilder<Rat>> = Arc::new(RandalgBuilder::new(2, 10));
        let mut rep = Rep::new(10, &rat(1, 5), 3, 2, inner).unwrap();
        let mut g = rng();
        let mut rounds = 0u64;
        loop {
            match rep.step(&mut g).unwrap() {
                ObStep::Move(mv) => {
                    rounds += 1;
                    assert!(mv.p >= 1);
                    mv.validate(10).unwrap();
                }
                ObStep::Done { .. } => break,
            }
        }
        assert_eq!(rep.anchor_set().len(), 2);
        assert_eq!(rep.non_anchor_set().len(), 8);
        assert!(rounds > 0);
    }

    #[test]
    fn rep_with_m_one_is_deterministic_block_structure() {
        // M = 1 forces exactly one application per donation-process.
        let inner: Arc<dyn ObliviousBuilder<Rat>> = Arc::new(RandalgBuilder::new(2, 6));
        let mut rep = Rep::new(6, &rat(1, 3), 1, 1, inner).unwrap();
        let mut g = rng();
        // Per process: 1 flatten round + 1 randalg round; 2 donations.
        let mut moves = 0;
        loop {
            match rep.step(&mut g).unwrap() {
                ObStep::Move(_) => moves += 1,
                ObStep::Done { .. } => break,
            }
        }
        assert_eq!(moves, 4);
    }

    #[test]
    fn base_pump_length_follows_h() {
        let p = DeskParams { h: rat(2, 1), ..DeskParams::default() };
        assert_eq!(p.pump_rounds(), 2); // ceil(10/8)
        let p = DeskParams { h: rat(8, 1), ..DeskParams::default() };
        assert_eq!(p.pump_rounds(), 5);
        let p = DeskParams { h: rat(0, 1), ..DeskParams::default() };
        assert_eq!(p.pump_rounds(), 0);
    }

    #[test]
    fn base_with_zero_gain_skips_the_pump() {
        let params = DeskParams { h: rat(0, 1), ..DeskParams::default() };
        let mut base = ObliviousBase::<Rat>::new(16, &params, 16).unwrap();
        let mut g = rng();
        loop {
            match base.step(&mut g).unwrap() {
                ObStep::Move(mv) => {
                    // No pump rounds: every move is a rep move, whose p is
                    // never the bare single-cup pour of the pump phase.
                    mv.validate(16).unwrap();
                }
                ObStep::Done { designated } => {
                    assert!(designated.is_some());
                    break;
                }
            }
        }
    }

    #[test]
    fn amplify_builder_rejects_small_n() {
        let params = DeskParams::default();
        let base: Arc<dyn ObliviousBuilder<Rat>> =
            Arc::new(ObliviousBaseBuilder::new(params.clone(), 64));
        let amp = ObliviousAmplifyBuilder::new(base, rat(1, 4), 4, 8);
        // ceil(4 / (1/16)) = 64 > 32.
        assert!(ObliviousBuilder::<Rat>::instantiate(&amp, 32).is_err());
        assert!(ObliviousBuilder::<Rat>::instantiate(&amp, 64).is_ok());
    }

    #[test]
    fn chain_guarantee_and_thresholds() {
        let params = DeskParams::default();
        let chain = build_oblivious_poly::<Rat>(1, &params, 64).unwrap();
        // g_0 = 8 * 64 = 512, g_1 = floor(512 / (3/4)) = 682.
        assert_eq!(chain.g[0], BigUint::from(512u64));
        assert_eq!(chain.g[1], BigUint::from(682u64));
        // One level over the base: f1(64) = (9/16) f0(48) + f0(16).
        let f0 = &chain.levels[0];
        let expect = rat(9, 16) * f0.f(48).clone() + f0.f(16).clone();
        assert_eq!(*chain.levels[1].f(64), expect);
    }

    #[test]
    fn donation_mean_drop_identity() {
        // Donating a cup at mean + f from an s-cup set lowers the mean by
        // f / (s - 1), exactly.
        use crate::state::CupState;
        let f = rat(7, 3);
        let s = 6usize;
        let mut fills = vec![rat(1, 2); s];
        fills[0] = rat(1, 2) + f.clone(); // mean is now 1/2 + f/6
        let st = CupState::with_fills(fills);
        let all: Vec<usize> = (0..s).collect();
        let mu0 = st.mean_of(&all).unwrap();
        let donated_fill = st.fill(0).clone();
        assert_eq!(donated_fill, mu0.clone() + (f.clone() - f.clone() / rat(6, 1)));
        let rest: Vec<usize> = (1..s).collect();
        let mu1 = st.mean_of(&rest).unwrap();
        // mu1 = mu0 - (fill(0) - mu0) / (s - 1)
        let expected = mu0.clone() - (donated_fill - mu0) / rat((s - 1) as i64, 1);
        assert_eq!(mu1, expected);
    }
}
