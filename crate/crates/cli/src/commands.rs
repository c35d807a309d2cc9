//! The three harness commands: single runs, Monte-Carlo sweeps, and
//! guarantee certification.

use crate::spec::{
    make_emptier, make_filler, make_monitors, ArithMode, CertBundle, ExperimentSpec, FillerSpec,
    Predicate,
};
use anyhow::{Context, Result};
use cupgame::engine::{run_game, write_trace_csv, GameOutcome, Termination, TraceOpts};
use cupgame::monitor::{InvariantVerdict, MonitorStatus};
use cupgame::num::{FillValue, Rat, F64};
use cupgame::stats::{clopper_pearson, median_sorted, quantile_sorted, run_trials};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

#[derive(Debug, Serialize)]
pub struct FinalMetrics {
    pub backlog: String,
    pub anti_backlog: String,
    pub mass: String,
    pub mean: String,
    pub fill_range: String,
}

#[derive(Debug, Serialize)]
pub struct DesignatedOut {
    pub cup: usize,
    pub final_fill: String,
}

#[derive(Debug, Serialize)]
pub struct PredicateOut {
    pub expr: String,
    pub success: bool,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub spec: ExperimentSpec,
    pub filler: String,
    pub emptier: String,
    pub rounds_used: u64,
    pub termination: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub designated: Option<DesignatedOut>,
    pub final_metrics: FinalMetrics,
    pub max_backlog: String,
    pub max_fill_range: String,
    pub monitors: Vec<InvariantVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicate: Option<PredicateOut>,
}

/// Output of one harness command: the summary JSON, files written, and
/// whether the process should exit nonzero.
pub struct CmdOutput {
    pub summary_json: String,
    pub failed: bool,
}

fn termination_str(t: &Termination) -> String {
    match t {
        Termination::RoundsExhausted => "rounds-exhausted".into(),
        Termination::Finished { designated } => match designated {
            Some(c) => format!("finished:designated={}", c),
            None => "finished".into(),
        },
        Termination::MonitorAbort { monitor } => format!("monitor-abort:{}", monitor),
    }
}

fn eval_predicate<N: FillValue>(
    pred: &Predicate,
    out: &GameOutcome<N>,
) -> bool {
    match pred {
        Predicate::BacklogAtLeast(r) => out.final_state.backlog() >= N::from_rat(r),
        Predicate::Untouched => match &out.termination {
            Termination::Finished { designated: Some(c) } => {
                out.moves.iter().all(|(_, em)| !em.contains(*c))
            }
            _ => false,
        },
        Predicate::DesignatedFillAtLeast(r) => match &out.termination {
            Termination::Finished { designated: Some(c) } => {
                *out.final_state.fill(*c) >= N::from_rat(r)
            }
            _ => false,
        },
    }
}

fn run_one_trial<N: FillValue>(
    spec: &ExperimentSpec,
    fspec: &FillerSpec,
    trial: u64,
    rounds: u64,
    opts: TraceOpts,
) -> Result<GameOutcome<N>> {
    let cfg = spec.game_config(trial);
    let mut filler =
        make_filler::<N>(fspec, &spec.filler, spec.n, spec.seed, trial, spec.finish_policy())?;
    let mut emptier = make_emptier::<N>(&spec.emptier, spec.seed, trial)?;
    let mut monitors = make_monitors::<N>(&spec.monitors, spec.n, spec.strict)?;
    let out = run_game(&cfg, filler.as_ref(), emptier.as_mut(), rounds, &mut monitors, opts)?;
    Ok(out)
}

fn run_summary<N: FillValue>(
    spec: &ExperimentSpec,
    out: &GameOutcome<N>,
    pred: Option<(&Predicate, bool)>,
) -> RunSummary {
    let st = &out.final_state;
    let designated = match &out.termination {
        Termination::Finished { designated: Some(c) } => Some(DesignatedOut {
            cup: *c,
            final_fill: format!("{}", st.fill(*c)),
        }),
        _ => None,
    };
    RunSummary {
        spec: spec.clone(),
        filler: spec.filler.clone(),
        emptier: spec.emptier.clone(),
        rounds_used: out.rounds_used,
        termination: termination_str(&out.termination),
        designated,
        final_metrics: FinalMetrics {
            backlog: format!("{}", st.backlog()),
            anti_backlog: format!("{}", st.anti_backlog()),
            mass: format!("{}", st.mass_all()),
            mean: format!("{}", st.mean_all()),
            fill_range: format!("{}", st.fill_range()),
        },
        max_backlog: format!("{}", out.max_backlog),
        max_fill_range: format!("{}", out.max_fill_range),
        monitors: out.verdicts.clone(),
        predicate: pred.map(|(p, success)| PredicateOut { expr: format!("{:?}", p), success }),
    }
}

fn write_outputs(dir: &Option<PathBuf>, files: &[(&str, &str)]) -> Result<()> {
    if let Some(d) = dir {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        for (name, contents) in files {
            fs::write(d.join(name), contents).with_context(|| format!("writing {name}"))?;
        }
    }
    Ok(())
}

/// Execute one game and emit trace.csv + summary.json.
pub fn cmd_run(spec: &ExperimentSpec) -> Result<CmdOutput> {
    match spec.mode {
        ArithMode::Exact => cmd_run_typed::<Rat>(spec),
        ArithMode::Float => cmd_run_typed::<F64>(spec),
    }
}

fn cmd_run_typed<N: FillValue>(spec: &ExperimentSpec) -> Result<CmdOutput> {
    let fspec = FillerSpec::parse(&spec.filler)?;
    let rounds = spec.rounds.unwrap_or_else(|| fspec.default_rounds(spec.n));
    let out = run_one_trial::<N>(spec, &fspec, 0, rounds, TraceOpts::default())?;

    let pred = spec.predicate.as_deref().map(Predicate::parse).transpose()?;
    let pred_eval = pred.as_ref().map(|p| (p, eval_predicate(p, &out)));
    let summary = run_summary(spec, &out, pred_eval);

    let mut csv = Vec::new();
    write_trace_csv(&mut csv, &out.trace)?;
    let csv = String::from_utf8(csv).expect("csv is utf8");
    let json = serde_json::to_string_pretty(&summary)?;
    write_outputs(&spec.out_dir, &[("trace.csv", &csv), ("summary.json", &json)])?;

    let strict_violated = spec.strict
        && summary.monitors.iter().any(|v| v.status == MonitorStatus::Violated);
    let pred_failed = summary.predicate.as_ref().map(|p| !p.success).unwrap_or(false);
    Ok(CmdOutput { summary_json: json, failed: strict_violated || pred_failed })
}

#[derive(Debug, Serialize)]
pub struct Ci99 {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Serialize)]
pub struct BacklogQuantiles {
    pub min: String,
    pub p25: String,
    pub median: String,
    pub p75: String,
    pub max: String,
}

#[derive(Debug, Serialize)]
pub struct McSummary {
    pub spec: ExperimentSpec,
    pub trials: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub successes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci99: Option<Ci99>,
    pub backlog: BacklogQuantiles,
    pub rounds_median: u64,
    pub rounds_max: u64,
    pub strict_violations: u64,
}

struct TrialOut<N: FillValue> {
    trial: u64,
    rounds: u64,
    backlog: N,
    success: Option<bool>,
    designated: Option<usize>,
    designated_fill: Option<N>,
    violated: bool,
}

/// Run independent seeded trials (parallel by default) and aggregate.
pub fn cmd_montecarlo(spec: &ExperimentSpec) -> Result<CmdOutput> {
    match spec.mode {
        ArithMode::Exact => cmd_mc_typed::<Rat>(spec),
        ArithMode::Float => cmd_mc_typed::<F64>(spec),
    }
}

fn cmd_mc_typed<N: FillValue>(spec: &ExperimentSpec) -> Result<CmdOutput> {
    anyhow::ensure!(spec.trials >= 1, "montecarlo needs trials >= 1");
    let fspec = FillerSpec::parse(&spec.filler)?;
    let rounds = spec.rounds.unwrap_or_else(|| fspec.default_rounds(spec.n));
    let pred = spec.predicate.as_deref().map(Predicate::parse).transpose()?;
    let keep_moves = matches!(pred, Some(Predicate::Untouched));
    let opts = TraceOpts { keep_trace: false, keep_moves };

    let results: Vec<Result<TrialOut<N>>> = run_trials(spec.trials, spec.parallel, |trial| {
        let out = run_one_trial::<N>(spec, &fspec, trial, rounds, opts)?;
        let success = pred.as_ref().map(|p| eval_predicate(p, &out));
        let designated = match &out.termination {
            Termination::Finished { designated } => *designated,
            _ => None,
        };
        Ok(TrialOut {
            trial,
            rounds: out.rounds_used,
            backlog: out.final_state.backlog(),
            success,
            designated,
            designated_fill: designated.map(|c| out.final_state.fill(c).clone()),
            violated: out.verdicts.iter().any(|v| v.status == MonitorStatus::Violated),
        })
    });
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }

    let mut csv = String::from("trial,rounds,backlog,success,designated,designated_fill\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.trial,
            r.rounds,
            r.backlog,
            r.success.map(|b| if b { "1" } else { "0" }).unwrap_or(""),
            r.designated.map(|c| c.to_string()).unwrap_or_default(),
            r.designated_fill.as_ref().map(|f| f.to_string()).unwrap_or_default(),
        )
        .expect("string write");
    }

    let mut backlogs: Vec<N> = rows.iter().map(|r| r.backlog.clone()).collect();
    backlogs.sort();
    let mut rounds_v: Vec<u64> = rows.iter().map(|r| r.rounds).collect();
    rounds_v.sort_unstable();
    let successes = pred
        .as_ref()
        .map(|_| rows.iter().filter(|r| r.success == Some(true)).count() as u64);
    let ci = successes.map(|s| {
        let (lower, upper) = clopper_pearson(s, spec.trials, 0.99);
        Ci99 { lower, upper }
    });
    let strict_violations = rows.iter().filter(|r| r.violated).count() as u64;

    let summary = McSummary {
        spec: spec.clone(),
        trials: spec.trials,
        successes,
        success_rate: successes.map(|s| s as f64 / spec.trials as f64),
        ci99: ci,
        backlog: BacklogQuantiles {
            min: format!("{}", backlogs[0]),
            p25: format!("{}", quantile_sorted(&backlogs, 0.25)),
            median: format!("{}", median_sorted(&backlogs)),
            p75: format!("{}", quantile_sorted(&backlogs, 0.75)),
            max: format!("{}", backlogs[backlogs.len() - 1]),
        },
        rounds_median: median_sorted(&rounds_v),
        rounds_max: *rounds_v.last().unwrap(),
        strict_violations,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    write_outputs(&spec.out_dir, &[("trials.csv", &csv), ("summary.json", &json)])?;
    let failed = spec.strict && strict_violations > 0;
    Ok(CmdOutput { summary_json: json, failed })
}

#[derive(Debug, Serialize)]
pub struct CertifyLevel {
    pub level: usize,
    pub provenance: String,
    /// f(k) for k = 0..=n, as exact rationals.
    pub f: Vec<String>,
    /// t(k) worst-case rounds.
    pub t: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct CertifySummary {
    pub filler: String,
    pub n: usize,
    pub levels: Vec<CertifyLevel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_thresholds: Option<Vec<String>>,
    /// Closed-form certified rows (k, backlog) where the chain states one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<Vec<(usize, String)>>,
}

/// Print the certified f and T tables for a constructed chain.
pub fn cmd_certify(filler: &str, n: usize) -> Result<(CertifySummary, String)> {
    let fspec = FillerSpec::parse(filler)?;
    let bundle: CertBundle = fspec
        .certificates(n)?
        .ok_or_else(|| anyhow::anyhow!("{filler} carries no certified guarantee"))?;
    let levels: Vec<CertifyLevel> = bundle
        .levels
        .iter()
        .enumerate()
        .map(|(i, m)| CertifyLevel {
            level: i,
            provenance: format!("{}", m.provenance),
            f: m.f.iter().map(|x| x.to_string()).collect(),
            t: m.t.iter().map(|x| x.to_string()).collect(),
        })
        .collect();
    let summary = CertifySummary {
        filler: filler.to_string(),
        n,
        levels,
        g_thresholds: bundle.g.as_ref().map(|g| g.iter().map(|x| x.to_string()).collect()),
        closed_form: bundle
            .closed_form
            .as_ref()
            .map(|rows| rows.iter().map(|(k, f)| (*k, f.to_string())).collect()),
    };

    let top = bundle.levels.last().expect("at least one level");
    let mut table = String::new();
    writeln!(table, "certified guarantees for {filler} (n = {n})").unwrap();
    writeln!(table, "construction: {}", top.provenance).unwrap();
    writeln!(table, "{:>4} {:>12} {:>16}", "k", "f(k)", "T(k)").unwrap();
    for k in 1..=n {
        writeln!(table, "{:>4} {:>12} {:>16}", k, top.f(k).to_string(), top.t(k).to_string())
            .unwrap();
    }
    if let Some(g) = &bundle.g {
        let gs: Vec<String> = g.iter().map(|x| x.to_string()).collect();
        writeln!(table, "thresholds g_i: {}", gs.join(", ")).unwrap();
    }
    if let Some(rows) = &bundle.closed_form {
        writeln!(table, "closed-form certified rows:").unwrap();
        for (k, f) in rows {
            writeln!(table, "  f({k}) >= {f}").unwrap();
        }
    }
    Ok((summary, table))
}
