//! Experiment specifications and strategy spec-string parsing.
//!
//! A spec plus the code version reproduces results bit-exactly: all
//! randomness is derived from (seed, trial, consumer) streams and every
//! strategy knob is part of the spec.

use anyhow::{anyhow, bail, Context, Result};
use cupgame::emptier::{
    Emptier, ExtraGreedy, GreedyEmptier, LazySkipper, PerturbedGreedy, UniformRandomEmptier,
};
use cupgame::filler::adaptive::{
    build_linear_strategy, build_poly_strategy, trivalg2_builder, AdaptiveBuilder, AdaptiveDriver,
    TrivalgBuilder,
};
use cupgame::filler::common::{PtOscillator, UniformFillNull, UniformRandomFiller};
use cupgame::filler::oblivious::{
    build_oblivious_poly, DeskParams, FlatalgBuilder, ObliviousBuilder, ObliviousDriver,
    RandalgBuilder,
};
use cupgame::filler::{AdaptiveFiller, FillerRef, FinishPolicy, ObliviousFiller};
use cupgame::guarantee::GuaranteeMap;
use cupgame::monitor::{
    ConservationMonitor, DeltaGreedyMonitor, FlatnessMonitor, GreedyInvariantMonitor,
    MassEscapeMonitor, Monitor, RangeStepMonitor,
};
use cupgame::num::{parse_rat, FillValue, Rat};
use cupgame::rng::{consumer, SplitRng};
use cupgame::{FillSemantics, GameConfig};
use num::bigint::BigUint;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::Arc;

/// Numeric mode for a run. Exact mode is the default and the only mode the
/// invariant-acceptance checks accept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ArithMode {
    #[default]
    Exact,
    Float,
}

/// A fully serializable experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub n: usize,
    #[serde(default = "default_semantics")]
    pub semantics: FillSemantics,
    pub filler: String,
    pub emptier: String,
    /// Round budget; `None` picks a default from the filler's certified
    /// running time when available.
    #[serde(default)]
    pub rounds: Option<u64>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub monitors: Vec<String>,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub mode: ArithMode,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Success predicate for runs and trials, e.g. `backlog>=3/2` or
    /// `untouched`.
    #[serde(default)]
    pub predicate: Option<String>,
    #[serde(default)]
    pub extra_budget: u64,
    /// Skip budget; `None` is unlimited (the regular game).
    #[serde(default)]
    pub skip_budget: Option<u64>,
    /// Restart the filler this many times before idling (0 = stop the game
    /// when the construction completes).
    #[serde(default)]
    pub restarts: u32,
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_semantics() -> FillSemantics {
    FillSemantics::Standard
}
fn default_trials() -> u64 {
    1
}
fn default_parallel() -> bool {
    true
}

impl ExperimentSpec {
    pub fn game_config(&self, trial: u64) -> GameConfig {
        GameConfig {
            n: self.n,
            semantics: self.semantics,
            extra_budget: self.extra_budget,
            skip_budget: self.skip_budget,
            seed: self.seed.wrapping_add(trial),
        }
    }

    pub fn finish_policy(&self) -> FinishPolicy {
        if self.restarts == 0 {
            FinishPolicy::Stop
        } else {
            FinishPolicy::RestartThenRotate { restarts: self.restarts }
        }
    }
}

fn split_spec(s: &str) -> (&str, Vec<(&str, &str)>) {
    match s.split_once(':') {
        None => (s, Vec::new()),
        Some((head, rest)) => {
            let kvs = rest
                .split(',')
                .filter(|p| !p.is_empty())
                .map(|p| p.split_once('=').unwrap_or((p, "")))
                .collect();
            (head, kvs)
        }
    }
}

fn want_rat(kvs: &[(&str, &str)], key: &str) -> Result<Option<Rat>> {
    for (k, v) in kvs {
        if *k == key {
            return Ok(Some(
                parse_rat(v).ok_or_else(|| anyhow!("bad rational for {key}: {v}"))?,
            ));
        }
    }
    Ok(None)
}

fn want_u64(kvs: &[(&str, &str)], key: &str) -> Result<Option<u64>> {
    for (k, v) in kvs {
        if *k == key {
            return Ok(Some(v.parse().with_context(|| format!("bad integer for {key}: {v}"))?));
        }
    }
    Ok(None)
}

fn eps_parts(kvs: &[(&str, &str)]) -> Result<(u64, u64)> {
    let eps = want_rat(kvs, "eps")?.ok_or_else(|| anyhow!("missing eps=<a/b>"))?;
    let num = u64::try_from(eps.numer().clone()).map_err(|_| anyhow!("eps must be positive"))?;
    let den = u64::try_from(eps.denom().clone()).map_err(|_| anyhow!("eps must be positive"))?;
    Ok((num, den))
}

fn desk_params(kvs: &[(&str, &str)]) -> Result<DeskParams> {
    let mut p = DeskParams::default();
    if let Some(k) = want_u64(kvs, "k")? {
        p.k = k as usize;
    }
    if let Some(h) = want_rat(kvs, "h")? {
        p.h = h;
    }
    if let Some(m) = want_u64(kvs, "M").transpose().or_else(|| want_u64(kvs, "m").transpose()).transpose()? {
        p.m_cap = m;
    }
    if let Some(fr) = want_u64(kvs, "flatten")? {
        p.flatten_rounds = fr;
    }
    if let Some(d) = want_rat(kvs, "delta")? {
        p.delta = d;
    }
    if let Some(nb) = want_u64(kvs, "nb")? {
        p.n_b = nb as usize;
    }
    Ok(p)
}

/// Parsed filler family, independent of the numeric mode.
#[derive(Debug, Clone)]
pub enum FillerSpec {
    Trivalg,
    Trivalg2,
    AdaptiveLinear,
    AdaptivePoly { eps_num: u64, eps_den: u64 },
    Flatalg { rounds: u64 },
    Randalg { k: usize },
    ObliviousBase { desk: DeskParams },
    ObliviousPoly { levels: usize, desk: DeskParams },
    UniformRandom,
    PtOscillate,
    UniformFill,
}

impl FillerSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (head, kvs) = split_spec(s);
        Ok(match head {
            "trivalg" => FillerSpec::Trivalg,
            "trivalg2" => FillerSpec::Trivalg2,
            "adaptive-linear" => FillerSpec::AdaptiveLinear,
            "adaptive-poly" => {
                let (a, b) = eps_parts(&kvs)?;
                FillerSpec::AdaptivePoly { eps_num: a, eps_den: b }
            }
            "flatalg" => {
                FillerSpec::Flatalg { rounds: want_u64(&kvs, "rounds")?.unwrap_or(200) }
            }
            "randalg" => {
                let k = want_u64(&kvs, "k")?.ok_or_else(|| anyhow!("randalg needs k="))?;
                FillerSpec::Randalg { k: k as usize }
            }
            "oblivious-base" => FillerSpec::ObliviousBase { desk: desk_params(&kvs)? },
            "oblivious-poly" => {
                let levels = want_u64(&kvs, "levels")?.unwrap_or(1) as usize;
                // eps is accepted and echoed in metadata; the desk-scale
                // split parameter is `delta`.
                FillerSpec::ObliviousPoly { levels, desk: desk_params(&kvs)? }
            }
            "uniform-random" => FillerSpec::UniformRandom,
            "pt-oscillate" => FillerSpec::PtOscillate,
            "uniform-fill" => FillerSpec::UniformFill,
            other => bail!("unknown filler spec: {other}"),
        })
    }

    pub fn is_oblivious(&self) -> bool {
        !matches!(
            self,
            FillerSpec::Trivalg
                | FillerSpec::Trivalg2
                | FillerSpec::AdaptiveLinear
                | FillerSpec::AdaptivePoly { .. }
        )
    }

    /// Certified guarantee curves, for the strategies that carry them.
    /// Returns the per-level maps (base first) plus the power-law
    /// thresholds for the chains that define them.
    pub fn certificates(&self, n: usize) -> Result<Option<CertBundle>> {
        Ok(match self {
            FillerSpec::Trivalg => Some(CertBundle {
                levels: vec![GuaranteeMap::trivalg(n)],
                g: None,
                closed_form: None,
            }),
            FillerSpec::Trivalg2 => {
                let b = trivalg2_builder::<Rat>(n);
                Some(CertBundle { levels: vec![b.guarantee().clone()], g: None, closed_form: None })
            }
            FillerSpec::AdaptiveLinear => {
                let chain = build_linear_strategy::<Rat>(n)?;
                let closed: Vec<(usize, Rat)> = (0..=chain.i_star)
                    .map(|i| {
                        ((i + 1) * 8, Rat::from_ratio(i as i64, 2) + Rat::from_int(1))
                    })
                    .collect();
                Some(CertBundle { levels: chain.levels, g: None, closed_form: Some(closed) })
            }
            FillerSpec::AdaptivePoly { eps_num, eps_den } => {
                let chain = build_poly_strategy::<Rat>(*eps_num, *eps_den, n)?;
                Some(CertBundle { levels: chain.levels, g: Some(chain.g), closed_form: None })
            }
            FillerSpec::ObliviousBase { desk } => {
                let b = cupgame::filler::oblivious::ObliviousBaseBuilder::new(desk.clone(), n);
                Some(CertBundle {
                    levels: vec![ObliviousBuilder::<Rat>::guarantee(&b).clone()],
                    g: None,
                    closed_form: None,
                })
            }
            FillerSpec::ObliviousPoly { levels, desk } => {
                let chain = build_oblivious_poly::<Rat>(*levels, desk, n)?;
                Some(CertBundle { levels: chain.levels, g: Some(chain.g), closed_form: None })
            }
            _ => None,
        })
    }

    /// Default round budget: twice the certified worst case plus slack for
    /// constructive strategies, otherwise a plain constant.
    pub fn default_rounds(&self, n: usize) -> u64 {
        let cert = self
            .certificates(n)
            .ok()
            .flatten()
            .and_then(|c| c.levels.last().map(|m| m.t_u64(n)));
        match cert {
            Some(t) => t.saturating_mul(2).saturating_add(8).min(10_000_000),
            None => 10_000,
        }
    }
}

/// Certified curves for one strategy chain.
pub struct CertBundle {
    /// Per-level guarantee maps, base level first.
    pub levels: Vec<GuaranteeMap>,
    /// Power-law thresholds, where the chain defines them.
    pub g: Option<Vec<BigUint>>,
    /// Closed-form certified rows (cup count, backlog), where the chain
    /// states one.
    pub closed_form: Option<Vec<(usize, Rat)>>,
}

/// A constructed filler ready to hand to the engine.
pub enum FillerBox<N: FillValue> {
    Adaptive(Box<dyn AdaptiveFiller<N>>),
    Oblivious(Box<dyn ObliviousFiller<N>>),
}

impl<N: FillValue> FillerBox<N> {
    pub fn as_ref(&mut self) -> FillerRef<'_, N> {
        match self {
            FillerBox::Adaptive(f) => FillerRef::Adaptive(f.as_mut()),
            FillerBox::Oblivious(f) => FillerRef::Oblivious(f.as_mut()),
        }
    }

    pub fn first_designated(&self) -> Option<usize> {
        match self {
            FillerBox::Adaptive(_) => None,
            FillerBox::Oblivious(_) => None,
        }
    }
}

/// Instantiate the filler for one trial.
pub fn make_filler<N: FillValue>(
    spec: &FillerSpec,
    label: &str,
    n: usize,
    seed: u64,
    trial: u64,
    policy: FinishPolicy,
) -> Result<FillerBox<N>> {
    let rng = SplitRng::new(seed, trial, consumer::FILLER);
    Ok(match spec {
        FillerSpec::Trivalg => {
            let b: Arc<dyn AdaptiveBuilder<N>> = Arc::new(TrivalgBuilder::new(n));
            FillerBox::Adaptive(Box::new(AdaptiveDriver::new(b, n, policy).with_label(label)))
        }
        FillerSpec::Trivalg2 => {
            let b = trivalg2_builder::<N>(n);
            FillerBox::Adaptive(Box::new(AdaptiveDriver::new(b, n, policy).with_label(label)))
        }
        FillerSpec::AdaptiveLinear => {
            let chain = build_linear_strategy::<N>(n)?;
            FillerBox::Adaptive(Box::new(
                AdaptiveDriver::new(chain.builder, n, policy).with_label(label),
            ))
        }
        FillerSpec::AdaptivePoly { eps_num, eps_den } => {
            let chain = build_poly_strategy::<N>(*eps_num, *eps_den, n)?;
            FillerBox::Adaptive(Box::new(
                AdaptiveDriver::new(chain.builder, n, policy).with_label(label),
            ))
        }
        FillerSpec::Flatalg { rounds } => {
            let b: Arc<dyn ObliviousBuilder<N>> = Arc::new(FlatalgBuilder::new(*rounds, n));
            FillerBox::Oblivious(Box::new(
                ObliviousDriver::new(b, n, rng, policy).with_label(label),
            ))
        }
        FillerSpec::Randalg { k } => {
            let b: Arc<dyn ObliviousBuilder<N>> = Arc::new(RandalgBuilder::new(*k, n));
            FillerBox::Oblivious(Box::new(
                ObliviousDriver::new(b, n, rng, policy).with_label(label),
            ))
        }
        FillerSpec::ObliviousBase { desk } => {
            let b: Arc<dyn ObliviousBuilder<N>> =
                Arc::new(cupgame::filler::oblivious::ObliviousBaseBuilder::new(desk.clone(), n));
            FillerBox::Oblivious(Box::new(
                ObliviousDriver::new(b, n, rng, policy).with_label(label),
            ))
        }
        FillerSpec::ObliviousPoly { levels, desk } => {
            let chain = build_oblivious_poly::<N>(*levels, desk, n)?;
            FillerBox::Oblivious(Box::new(
                ObliviousDriver::new(chain.builder, n, rng, policy).with_label(label),
            ))
        }
        FillerSpec::UniformRandom => {
            FillerBox::Oblivious(Box::new(UniformRandomFiller::new(n, rng)))
        }
        FillerSpec::PtOscillate => FillerBox::Oblivious(Box::new(PtOscillator::new(n))),
        FillerSpec::UniformFill => FillerBox::Oblivious(Box::new(UniformFillNull::new(n))),
    })
}

/// Instantiate the emptier for one trial.
pub fn make_emptier<N: FillValue>(s: &str, seed: u64, trial: u64) -> Result<Box<dyn Emptier<N>>> {
    let (head, kvs) = split_spec(s);
    let rng = SplitRng::new(seed, trial, consumer::EMPTIER);
    Ok(match head {
        "greedy" => Box::new(GreedyEmptier),
        "perturbed" => {
            let delta = want_rat(&kvs, "delta")?.ok_or_else(|| anyhow!("perturbed needs delta="))?;
            Box::new(PerturbedGreedy::new(N::from_rat(&delta), rng))
        }
        "uniform-random" => Box::new(UniformRandomEmptier::new(rng)),
        "lazy" => {
            let p = want_rat(&kvs, "skip")?.ok_or_else(|| anyhow!("lazy needs skip=<prob>"))?;
            let num = u64::try_from(p.numer().clone()).map_err(|_| anyhow!("bad skip prob"))?;
            let den = u64::try_from(p.denom().clone()).map_err(|_| anyhow!("bad skip prob"))?;
            Box::new(LazySkipper::new(num, den, rng))
        }
        "extra-greedy" => {
            let x = want_u64(&kvs, "x")?.unwrap_or(1);
            Box::new(ExtraGreedy { per_round: x })
        }
        other => bail!("unknown emptier spec: {other}"),
    })
}

/// Instantiate the monitor list.
pub fn make_monitors<N: FillValue>(
    specs: &[String],
    n: usize,
    strict: bool,
) -> Result<Vec<Box<dyn Monitor<N>>>> {
    let mut out: Vec<Box<dyn Monitor<N>>> = Vec::new();
    for s in specs {
        let (head, kvs) = split_spec(s);
        match head {
            "greedy-invariant" => out.push(Box::new(GreedyInvariantMonitor::new(strict))),
            "flatness" => {
                let r = want_rat(&kvs, "R")?.ok_or_else(|| anyhow!("flatness needs R="))?;
                out.push(Box::new(FlatnessMonitor::new(N::from_rat(&r), strict)));
            }
            "range-step" => {
                let r = want_rat(&kvs, "R")?.ok_or_else(|| anyhow!("range-step needs R="))?;
                out.push(Box::new(RangeStepMonitor::new(N::from_rat(&r), strict)));
            }
            "conservation" => out.push(Box::new(ConservationMonitor::new(strict))),
            "mass-escape" => {
                let big_n = want_u64(&kvs, "N")?.unwrap_or(n as u64);
                let threshold = N::from_int((big_n * big_n) as i64);
                out.push(Box::new(MassEscapeMonitor::new(threshold)));
            }
            "delta-greedy" => {
                let d = want_rat(&kvs, "delta")?.ok_or_else(|| anyhow!("delta-greedy needs delta="))?;
                out.push(Box::new(DeltaGreedyMonitor::new(N::from_rat(&d), strict)));
            }
            other => bail!("unknown monitor spec: {other}"),
        }
    }
    Ok(out)
}

/// Success predicate over a finished game.
#[derive(Debug, Clone)]
pub enum Predicate {
    /// Final backlog at least the threshold.
    BacklogAtLeast(Rat),
    /// The designated cup was never emptied during the run.
    Untouched,
    /// The designated cup's final fill is at least the threshold.
    DesignatedFillAtLeast(Rat),
}

impl Predicate {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "untouched" {
            return Ok(Predicate::Untouched);
        }
        if let Some(v) = s.strip_prefix("backlog>=") {
            return Ok(Predicate::BacklogAtLeast(
                parse_rat(v).ok_or_else(|| anyhow!("bad threshold: {v}"))?,
            ));
        }
        if let Some(v) = s.strip_prefix("designated-fill>=") {
            return Ok(Predicate::DesignatedFillAtLeast(
                parse_rat(v).ok_or_else(|| anyhow!("bad threshold: {v}"))?,
            ));
        }
        bail!("unknown predicate: {s} (expected backlog>=R, designated-fill>=R, or untouched)")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filler_spec_round_trips() {
        assert!(matches!(FillerSpec::parse("trivalg").unwrap(), FillerSpec::Trivalg));
        assert!(matches!(
            FillerSpec::parse("adaptive-poly:eps=1/4").unwrap(),
            FillerSpec::AdaptivePoly { eps_num: 1, eps_den: 4 }
        ));
        match FillerSpec::parse("oblivious-base:h=2,M=32,flatten=256").unwrap() {
            FillerSpec::ObliviousBase { desk } => {
                assert_eq!(desk.h, cupgame::rat(2, 1));
                assert_eq!(desk.m_cap, 32);
                assert_eq!(desk.flatten_rounds, 256);
                assert_eq!(desk.k, 3);
            }
            _ => panic!(),
        }
        match FillerSpec::parse("oblivious-poly:eps=1/4,levels=2").unwrap() {
            FillerSpec::ObliviousPoly { levels, .. } => assert_eq!(levels, 2),
            _ => panic!(),
        }
        assert!(FillerSpec::parse("randalg:k=3").is_ok());
        assert!(FillerSpec::parse("bogus").is_err());
    }

    #[test]
    fn predicate_parsing() {
        assert!(matches!(Predicate::parse("untouched").unwrap(), Predicate::Untouched));
        match Predicate::parse("backlog>=3/2").unwrap() {
            Predicate::BacklogAtLeast(r) => assert_eq!(r, cupgame::rat(3, 2)),
            _ => panic!(),
        }
        assert!(Predicate::parse("nonsense").is_err());
    }

    #[test]
    fn emptier_specs_build() {
        assert!(make_emptier::<Rat>("greedy", 0, 0).is_ok());
        assert!(make_emptier::<Rat>("perturbed:delta=1/2", 0, 0).is_ok());
        assert!(make_emptier::<Rat>("lazy:skip=1/3", 0, 0).is_ok());
        assert!(make_emptier::<Rat>("uniform-random", 0, 0).is_ok());
        assert!(make_emptier::<Rat>("what", 0, 0).is_err());
    }
}
