//! `avoid`: plan, build, simulate and verify avoidance couplings.
//!
//! Exit codes: 0 success or every check passed, 1 a check failed or a
//! simulation collided, 2 bad input or I/O failure, 3 no plan found.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use avoidance::hypercube::Variant;
use avoidance::planner::{evaluate, guaranteed_walkers, max_walkers, plan, Plan};
use avoidance::prob::parse_rational;
use avoidance::process::run;
use avoidance::verifier::{self, VerificationReport, DEFAULT_ALPHA};
use avoidance::{Error, Process, TrajectoryLog};

#[derive(Parser, Debug)]
#[command(name = "avoid", version, about = "Avoidance couplings of random walkers on complete graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a plan for k walkers on n vertices.
    Plan(PlanArgs),
    /// Write the plan of a single named construction.
    Build(BuildArgs),
    /// Simulate a plan and write a JSON Lines trajectory.
    Simulate(SimulateArgs),
    /// Run verifier checks on a plan or a trajectory log.
    Verify(VerifyArgs),
    /// Threshold and walker-count scans.
    Scan(ScanArgs),
    /// Continuous-time transform check on a plan.
    CtCheck(CtArgs),
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    /// Plan on K_n* (one loop per vertex) instead of K_n.
    #[arg(long)]
    looped: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BuildArgs {
    /// One of k3-markovian, k3-nonmarkovian, composite, composite-min-entropy, hypercube.
    #[arg(long)]
    construction: String,
    /// Hold probability for the K3 constructions, e.g. 1/2 or 0.75.
    #[arg(long)]
    s: Option<String>,
    /// Cluster size of a composite.
    #[arg(long)]
    a: Option<usize>,
    /// Cluster count of a composite.
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    looped: bool,
    /// Hypercube dimension.
    #[arg(long)]
    d: Option<u32>,
    /// Hypercube variant: unlooped_plus1, looped_pow2 or looped_plus1.
    #[arg(long)]
    variant: Option<String>,
    /// Kept hypercube walkers, comma separated.
    #[arg(long, value_delimiter = ',')]
    walkers: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    rounds: usize,
    #[arg(long, env = "AVOID_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, conflicts_with = "log", required_unless_present = "log")]
    plan: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    /// Comma-separated checks: collisions, collisions-exhaustive, faithfulness-exact,
    /// faithfulness-empirical, markov, stationary, waves, entropy, time-reversal, events.
    #[arg(long, value_delimiter = ',', required = true)]
    checks: Vec<String>,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Rounds for checks that simulate a plan.
    #[arg(long, default_value_t = 100_000)]
    rounds: usize,
    #[arg(long, env = "AVOID_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long, conflicts_with = "max_walkers")]
    k3_threshold: bool,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    max_walkers: bool,
    /// Inclusive range `a..b`.
    #[arg(long)]
    n_range: Option<String>,
    #[arg(long)]
    looped: bool,
}

#[derive(Args, Debug)]
struct CtArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    rounds: usize,
    #[arg(long, env = "AVOID_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
}

/// Failure modes mapped to exit codes.
enum Failure {
    Usage(String),
    Infeasible(String),
    Check,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InfeasibleWithMethod { .. } => Failure::Infeasible(e.to_string()),
            e => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn invocation() -> Value {
    json!(std::env::args().collect::<Vec<_>>())
}

fn print_json(v: &Value) -> Outcome {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn write_plan(p: &Plan, out: Option<&Path>) -> Outcome {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, &p.to_json())?;
            writeln!(w)?;
            eprintln!("wrote {}: {}", path.display(), p.summary());
            print_json(&json!({ "invocation": invocation(), "plan": path, "annotations": p.annotations, "summary": p.summary() }))
        }
        None => print_json(&p.to_json()),
    }
}

fn read_plan(path: &Path) -> Result<Plan, Failure> {
    let v: Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    Ok(Plan::from_json(&v)?)
}

fn cmd_plan(a: &PlanArgs) -> Outcome {
    if a.n < 2 || a.k < 1 {
        return Err(Failure::Usage(format!("need n >= 2 and k >= 1, got n = {}, k = {}", a.n, a.k)));
    }
    let p = plan(a.n, a.k, a.looped)?;
    write_plan(&p, a.out.as_deref())
}

fn cmd_build(a: &BuildArgs) -> Outcome {
    let need = |v: Option<usize>, name: &str| v.ok_or_else(|| Failure::Usage(format!("--{name} is required")));
    let hold = || {
        let s = a.s.as_deref().ok_or_else(|| Failure::Usage("--s is required".into()))?;
        parse_rational(s).ok_or_else(|| Failure::Usage(format!("cannot parse s = {s}")))
    };
    let p = match a.construction.as_str() {
        "k3-markovian" => Plan::k3(&hold()?, true)?,
        "k3-nonmarkovian" => Plan::k3(&hold()?, false)?,
        "composite" => Plan::composite(need(a.a, "a")?, need(a.b, "b")?, a.looped)?,
        "composite-min-entropy" => Plan::composite_min_entropy(need(a.a, "a")?, need(a.b, "b")?)?,
        "hypercube" => {
            let d = a.d.ok_or_else(|| Failure::Usage("--d is required".into()))?;
            let v = Variant::parse(a.variant.as_deref().unwrap_or("looped_plus1"))?;
            Plan::hypercube(d, v, a.walkers.clone())?
        }
        other => return Err(Failure::Usage(format!("unknown construction `{other}`"))),
    };
    evaluate(&p)?;
    write_plan(&p, a.out.as_deref())
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome {
    let p = evaluate(&read_plan(&a.plan)?)?;
    let log = match run(p.as_ref(), a.rounds, a.seed) {
        Ok(log) => log,
        Err(e @ Error::Collision { .. }) => {
            eprintln!("{e}");
            return Err(Failure::Check);
        }
        Err(e) => return Err(e.into()),
    };
    let mut w = BufWriter::new(File::create(&a.out)?);
    log.write_jsonl(&mut w)?;
    w.flush()?;
    let collisions = verifier::check_collisions(&log);
    print_json(&json!({
        "invocation": invocation(),
        "construction": p.descriptor(),
        "rounds": a.rounds,
        "seed": a.seed,
        "out": a.out,
        "collisions": collisions.numbers["collisions"],
    }))?;
    if collisions.passed() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

const PLAN_CHECKS: &[&str] = &[
    "collisions",
    "collisions-exhaustive",
    "faithfulness-exact",
    "faithfulness-empirical",
    "markov",
    "stationary",
    "waves",
    "entropy",
    "time-reversal",
    "events",
];
const LOG_CHECKS: &[&str] = &["collisions", "faithfulness-empirical", "events"];

fn log_check(name: &str, log: &TrajectoryLog, alpha: f64) -> Result<VerificationReport, Error> {
    match name {
        "collisions" => Ok(verifier::check_collisions(log)),
        "faithfulness-empirical" => verifier::check_faithfulness_empirical(log, alpha),
        "events" => Ok(verifier::event_stats(log)?.1),
        _ => unreachable!("validated before running"),
    }
}

fn plan_check(name: &str, p: &Process, a: &VerifyArgs, log: &mut Option<TrajectoryLog>) -> Result<VerificationReport, Error> {
    let bound = avoidance::process::DEFAULT_STATE_BOUND;
    match name {
        "collisions-exhaustive" => verifier::check_collisions_exhaustive(p.as_ref(), bound),
        "faithfulness-exact" => verifier::check_faithfulness_exact(p.as_ref(), a.depth),
        "markov" => verifier::check_markov(p.as_ref(), a.depth),
        "stationary" => verifier::check_stationary(p.as_ref()),
        "waves" => verifier::check_waves(p.as_ref(), bound),
        "entropy" => verifier::entropy_report(p.as_ref(), a.rounds, a.seed),
        "time-reversal" => verifier::check_time_reversal(p.as_ref()),
        _ => {
            if log.is_none() {
                *log = Some(run(p.as_ref(), a.rounds, a.seed)?);
            }
            log_check(name, log.as_ref().expect("simulated above"), a.alpha)
        }
    }
}

fn cmd_verify(a: &VerifyArgs) -> Outcome {
    let allowed = if a.plan.is_some() { PLAN_CHECKS } else { LOG_CHECKS };
    if let Some(bad) = a.checks.iter().find(|c| !allowed.contains(&c.as_str())) {
        return Err(Failure::Usage(format!("unknown check `{bad}` for this input; expected one of {}", allowed.join(", "))));
    }
    let mut reports = Vec::new();
    if let Some(path) = &a.plan {
        let p = evaluate(&read_plan(path)?)?;
        let mut log = None;
        for c in &a.checks {
            reports.push(plan_check(c, &p, a, &mut log)?);
        }
    } else if let Some(path) = &a.log {
        let log = TrajectoryLog::read_jsonl(BufReader::new(File::open(path)?))?;
        for c in &a.checks {
            reports.push(log_check(c, &log, a.alpha)?);
        }
    }
    let all = reports.iter().all(VerificationReport::passed);
    for r in &reports {
        eprintln!("{:?} {}", r.verdict, r.check);
    }
    print_json(&json!({
        "invocation": invocation(),
        "verdict": if all { "PASS" } else { "FAIL" },
        "reports": reports.iter().map(VerificationReport::to_json).collect::<Vec<_>>(),
    }))?;
    if all {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn parse_range(s: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::Usage(format!("bad range `{s}`; expected a..b"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
    if a > b || a < 2 {
        return Err(Failure::Usage(format!("empty or invalid range {a}..{b}")));
    }
    Ok((a, b))
}

fn cmd_scan(a: &ScanArgs) -> Outcome {
    if a.k3_threshold {
        if !(a.tol > 0.0 && a.tol < 0.5) {
            return Err(Failure::Usage(format!("tolerance {} out of range", a.tol)));
        }
        println!("{:.6}", verifier::k3_threshold(a.tol));
        return Ok(());
    }
    if !a.max_walkers {
        return Err(Failure::Usage("choose --k3-threshold or --max-walkers".into()));
    }
    let (lo, hi) = parse_range(a.n_range.as_deref().ok_or_else(|| Failure::Usage("--n-range is required".into()))?)?;
    let graph = if a.looped { "K_n*" } else { "K_n" };
    println!("{:>6} {:>6} {:>10} {:>6}  {graph} plan", "n", "k", "guarantee", "ok");
    let mut all = true;
    for n in lo..=hi {
        let (k, p) = max_walkers(n, a.looped)?;
        let g = guaranteed_walkers(n, a.looped);
        let ok = g < 2 || k >= g;
        all &= ok;
        let summary = p.map(|p| p.summary()).unwrap_or_else(|| "-".into());
        println!("{n:>6} {k:>6} {g:>10} {:>6}  {summary}", if ok { "yes" } else { "NO" });
    }
    if all {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn cmd_ct(a: &CtArgs) -> Outcome {
    let p = evaluate(&read_plan(&a.plan)?)?;
    let r = verifier::continuous_time_check(p.as_ref(), a.rounds, a.seed, a.alpha)?;
    print_json(&json!({ "invocation": invocation(), "report": r.to_json() }))?;
    if r.passed() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    let result = match &cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Build(a) => cmd_build(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Scan(a) => cmd_scan(a),
        Command::CtCheck(a) => cmd_ct(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}
