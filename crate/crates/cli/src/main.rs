use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cupgame_cli::commands::{cmd_certify, cmd_montecarlo, cmd_run};
use cupgame_cli::spec::{ArithMode, ExperimentSpec};
use cupgame::FillSemantics;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cupgame", about = "Variable-processor cup game simulator", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one game and write trace.csv + summary.json.
    Run(GameArgs),
    /// Run independent seeded trials and aggregate statistics.
    Montecarlo(GameArgs),
    /// Print the certified backlog/time tables for a strategy chain.
    Certify(CertifyArgs),
}

#[derive(Args)]
struct GameArgs {
    /// JSON file with an experiment spec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Filler spec, e.g. trivalg, adaptive-linear, adaptive-poly:eps=1/4,
    /// flatalg:rounds=200, randalg:k=3, oblivious-base:h=2,M=32,flatten=256,
    /// oblivious-poly:eps=1/4,levels=2, uniform-random, pt-oscillate,
    /// uniform-fill.
    #[arg(long)]
    filler: Option<String>,
    /// Emptier spec: greedy, perturbed:delta=1/2, uniform-random,
    /// lazy:skip=1/2, extra-greedy:x=1.
    #[arg(long)]
    emptier: Option<String>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// standard | negative
    #[arg(long)]
    semantics: Option<String>,
    /// Comma-separated monitors: greedy-invariant, flatness:R=4,
    /// range-step:R=5, conservation, mass-escape:N=64, delta-greedy:delta=1/2.
    #[arg(long)]
    monitor: Option<String>,
    /// Abort the game on the first monitor violation.
    #[arg(long)]
    strict: bool,
    /// exact | float
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Success predicate: backlog>=R, designated-fill>=R, untouched.
    #[arg(long)]
    predicate: Option<String>,
    #[arg(long)]
    extra_budget: Option<u64>,
    #[arg(long)]
    skip_budget: Option<u64>,
    /// Restart the filler this many times before idling.
    #[arg(long)]
    restarts: Option<u32>,
    /// Run trials serially instead of on the thread pool.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    filler: String,
    #[arg(long)]
    n: usize,
    /// Emit JSON instead of the table.
    #[arg(long)]
    json: bool,
}

fn parse_semantics(s: &str) -> Result<FillSemantics> {
    match s {
        "standard" => Ok(FillSemantics::Standard),
        "negative" => Ok(FillSemantics::Negative),
        other => anyhow::bail!("unknown semantics: {other}"),
    }
}

fn parse_mode(s: &str) -> Result<ArithMode> {
    match s {
        "exact" => Ok(ArithMode::Exact),
        "float" => Ok(ArithMode::Float),
        other => anyhow::bail!("unknown mode: {other}"),
    }
}

fn build_spec(a: &GameArgs) -> Result<ExperimentSpec> {
    let mut spec: ExperimentSpec = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentSpec {
            n: 0,
            semantics: FillSemantics::Standard,
            filler: String::new(),
            emptier: String::new(),
            rounds: None,
            trials: 1,
            seed: 0,
            monitors: Vec::new(),
            strict: false,
            mode: ArithMode::Exact,
            out_dir: None,
            predicate: None,
            extra_budget: 0,
            skip_budget: None,
            restarts: 0,
            parallel: true,
        },
    };
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(f) = &a.filler {
        spec.filler = f.clone();
    }
    if let Some(e) = &a.emptier {
        spec.emptier = e.clone();
    }
    if a.rounds.is_some() {
        spec.rounds = a.rounds;
    }
    if let Some(t) = a.trials {
        spec.trials = t;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(s) = &a.semantics {
        spec.semantics = parse_semantics(s)?;
    }
    if let Some(m) = &a.monitor {
        spec.monitors = m.split(',').filter(|x| !x.is_empty()).map(String::from).collect();
    }
    if a.strict {
        spec.strict = true;
    }
    if let Some(m) = &a.mode {
        spec.mode = parse_mode(m)?;
    }
    if a.out.is_some() {
        spec.out_dir = a.out.clone();
    }
    if a.predicate.is_some() {
        spec.predicate = a.predicate.clone();
    }
    if let Some(x) = a.extra_budget {
        spec.extra_budget = x;
    }
    if a.skip_budget.is_some() {
        spec.skip_budget = a.skip_budget;
    }
    if let Some(r) = a.restarts {
        spec.restarts = r;
    }
    if a.serial {
        spec.parallel = false;
    }
    anyhow::ensure!(spec.n >= 1, "--n is required (>= 1)");
    anyhow::ensure!(!spec.filler.is_empty(), "--filler is required");
    anyhow::ensure!(!spec.emptier.is_empty(), "--emptier is required");
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> Result<bool> {
        match &cli.cmd {
            Cmd::Run(a) => {
                let spec = build_spec(a)?;
                let out = cmd_run(&spec)?;
                println!("{}", out.summary_json);
                Ok(out.failed)
            }
            Cmd::Montecarlo(a) => {
                let spec = build_spec(a)?;
                let out = cmd_montecarlo(&spec)?;
                println!("{}", out.summary_json);
                Ok(out.failed)
            }
            Cmd::Certify(a) => {
                let (summary, table) = cmd_certify(&a.filler, a.n)?;
                if a.json {
                    println!("{}", serde_json::to_string_pretty(&summary)?);
                } else {
                    print!("{table}");
                }
                Ok(false)
            }
        }
    })();
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
