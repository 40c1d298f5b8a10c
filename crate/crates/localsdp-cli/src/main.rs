use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use localsdp::harness::{
    bench, bench_csv, brute_force, check_transcript, round_transcript, run_experiment, summarize_relaxation,
    CspRelation, Mode, ProblemSpec, RunConfig, RunResult,
};
use localsdp::lasserre::format_program;
use localsdp::seeding::SamplingMode;
use localsdp::{Error, Result};

#[derive(Parser)]
#[command(name = "localsdp", version, about = "Local partial solutions of Lasserre relaxations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the sizes of an instance's relaxation, optionally writing its program file.
    BuildRelaxation(ProblemArgs),
    /// Solve, replay, round and evaluate; writes a run result.
    Solve(ProblemArgs),
    /// Round the transcript of an earlier run again.
    Round(ResultArgs),
    /// Exhaustive optimum of a small instance.
    Bruteforce(ProblemArgs),
    /// Replay the transcript of an earlier run; fails when any check fails.
    Check(ResultArgs),
    /// Time the fast solver against the full relaxation; writes CSV.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct ProblemArgs {
    #[arg(long, value_parser = parse_mode)]
    mode: Mode,
    /// Edge list, 1-indexed `u v [w]` per line.
    #[arg(long, conflicts_with = "program")]
    graph: Option<PathBuf>,
    /// Polynomial program file for raw-polynomial mode.
    #[arg(long)]
    program: Option<PathBuf>,
    /// Labels for coloring and 2-CSP.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_parser = parse_relation, default_value = "equal")]
    relation: CspRelation,
    #[command(flatten)]
    run: RunArgs,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Hierarchy round r.
    #[arg(long)]
    rounds: Option<usize>,
    /// Seeds added per stage.
    #[arg(long)]
    seed_size: Option<usize>,
    /// Seed stages.
    #[arg(long)]
    stages: Option<usize>,
    /// Target covariance for 2-CSP seeding.
    #[arg(long)]
    eps: Option<f64>,
    /// Volume threshold of the solver.
    #[arg(long)]
    eps0: Option<f64>,
    /// Slack of the objective constraint (defaults to eps0).
    #[arg(long)]
    objective_slack: Option<f64>,
    /// Fixed objective guess; bisection when absent.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    rng_seed: Option<u64>,
    /// Rounding repetitions.
    #[arg(long)]
    repeats: Option<usize>,
    /// Use greedy maximum-volume seed selection instead of sampling.
    #[arg(long)]
    greedy: bool,
    #[arg(long)]
    tau_psd: Option<f64>,
    #[arg(long)]
    tau_zero: Option<f64>,
    /// Largest chart dimension a level may have.
    #[arg(long)]
    max_dim: Option<usize>,
    /// Bisection stops once the bracket is this narrow.
    #[arg(long)]
    resolution: Option<f64>,
    /// Seconds one bisection guess may take before it counts as infeasible.
    #[arg(long)]
    step_seconds: Option<f64>,
}

#[derive(Args)]
struct ResultArgs {
    /// Run result written by `solve`.
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_parser = parse_mode)]
    mode: Mode,
    /// One or more edge lists; one CSV row each.
    #[arg(long, required = true, num_args = 1..)]
    graph: Vec<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_parser = parse_relation, default_value = "equal")]
    relation: CspRelation,
    #[command(flatten)]
    run: RunArgs,
    /// Seconds each solve may take.
    #[arg(long, default_value_t = 600.0)]
    budget: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_relation(s: &str) -> std::result::Result<CspRelation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        let mut c = RunConfig::default();
        if let Some(v) = self.rounds {
            c.rounds = v;
        }
        if let Some(v) = self.seed_size {
            c.seed_size = v;
        }
        if let Some(v) = self.stages {
            c.stages = v;
        }
        if let Some(v) = self.eps {
            c.eps = v;
        }
        if let Some(v) = self.eps0 {
            c.eps0 = v;
        }
        c.objective_slack = self.objective_slack;
        c.q = self.q;
        if let Some(v) = self.rng_seed {
            c.rng_seed = v;
        }
        if let Some(v) = self.repeats {
            c.repeats = v;
        }
        if self.greedy {
            c.sampling = SamplingMode::Greedy;
        }
        if let Some(v) = self.tau_psd {
            c.tolerances.psd = v;
        }
        if let Some(v) = self.tau_zero {
            c.tolerances.zero = v;
        }
        if let Some(v) = self.max_dim {
            c.max_dim = v;
        }
        if let Some(v) = self.resolution {
            c.bisection.resolution = v;
        }
        c.bisection.step_seconds = self.step_seconds;
        c
    }
}

impl ProblemArgs {
    fn spec(&self) -> Result<ProblemSpec> {
        let input = match (self.mode, &self.graph, &self.program) {
            (Mode::RawPolynomial, _, Some(p)) => p.clone(),
            (Mode::RawPolynomial, _, None) => return Err(Error::InvalidInput("raw-polynomial mode needs --program".into())),
            (_, Some(g), _) => g.clone(),
            (mode, None, _) => return Err(Error::InvalidInput(format!("mode {mode} needs --graph"))),
        };
        let config = self.run.config();
        config.validate()?;
        Ok(ProblemSpec { mode: self.mode, input: Some(input), k: self.k, relation: self.relation, config })
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

fn load_result(args: &ResultArgs) -> Result<RunResult> {
    let path = &args.result;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut result = RunResult::from_json(&text)?;
    if let Some(s) = args.rng_seed {
        result.spec.config.rng_seed = s;
    }
    if let Some(r) = args.repeats {
        result.spec.config.repeats = r;
    }
    Ok(result)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::BuildRelaxation(args) => {
            let spec = args.spec()?;
            let instance = spec.instance()?;
            let summary = summarize_relaxation(&instance, &spec.config)?;
            eprintln!("{}", json(&summary).trim_end());
            emit(args.out.as_deref(), &format_program(&instance.program, Some(spec.config.rounds)))?;
        }
        Command::Solve(args) => {
            let result = run_experiment(&args.spec()?)?;
            if let Some(r) = &result.rounding {
                eprintln!(
                    "q = {:?}, feasible = {}, best objective = {:?}, optimum = {:?}",
                    result.q, result.feasible, r.report.objective, r.report.optimum
                );
            } else {
                eprintln!("q = {:?}, feasible = {}", result.q, result.feasible);
            }
            emit(args.out.as_deref(), &(result.to_json() + "\n"))?;
        }
        Command::Round(args) => {
            let result = load_result(&args)?;
            let transcript =
                result.transcript.as_ref().ok_or_else(|| Error::InvalidInput("run result has no transcript".into()))?;
            let instance = result.spec.instance()?;
            let summary = round_transcript(&instance, &result.spec.config, transcript)?;
            emit(args.out.as_deref(), &json(&summary))?;
        }
        Command::Bruteforce(args) => {
            let instance = args.spec()?.instance()?;
            let best = brute_force(&instance)?;
            if best.is_none() {
                eprintln!("no feasible labeling");
            }
            emit(args.out.as_deref(), &json(&best))?;
        }
        Command::Check(args) => {
            let result = load_result(&args)?;
            let transcript =
                result.transcript.as_ref().ok_or_else(|| Error::InvalidInput("run result has no transcript".into()))?;
            let instance = result.spec.instance()?;
            let report = check_transcript(&instance, &result.spec.config, result.q, transcript)?;
            eprintln!("replay {}", if report.passed { "passed" } else { "FAILED" });
            emit(args.out.as_deref(), &json(&report))?;
            return Ok(report.passed);
        }
        Command::Bench(args) => {
            let config = args.run.config();
            config.validate()?;
            let budget = Duration::from_secs_f64(args.budget);
            let rows = args
                .graph
                .iter()
                .map(|g| {
                    let spec =
                        ProblemSpec { mode: args.mode, input: Some(g.clone()), k: args.k, relation: args.relation, config: config.clone() };
                    bench(&spec.instance()?, &config, budget)
                })
                .collect::<Result<Vec<_>>>()?;
            emit(args.out.as_deref(), &bench_csv(&rows))?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
