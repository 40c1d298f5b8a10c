use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::graph::ingest_graph;
use crate::harness::instance::{CspRelation, Instance, Mode};
use crate::lasserre::{parse_program, LevelRelaxation, Relaxation, SeedFamily, Sense};
use crate::rounding::{
    csp_round, evaluate, measure, propagation_round, threshold_color, transcript_vectors, Assignment, QualityReport,
};
use crate::scalar::Tolerances;
use crate::seeding::{run_csp_stages, ColorSeeds, CspStageOptions, QipSeeds, SamplingMode, SeedStageState};
use crate::solver::{
    fast_solve, replay_report, seed_rng, FixedLevel, InfeasibleAssertion, LasserreFamily, ReplayReport, SeedRule,
    SolveOutcome, SolverOptions, Transcript,
};

pub const RUN_RESULT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionOptions {
    /// Stop once the bracket is at most this wide.
    pub resolution: f64,
    pub max_iterations: usize,
    /// Wall-clock seconds one guess may take before it counts as not
    /// feasible. Unlimited by default; a limit makes runs machine dependent.
    #[serde(default)]
    pub step_seconds: Option<f64>,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        BisectionOptions { resolution: 1e-3, max_iterations: 30, step_seconds: None }
    }
}

/// Solver and rounding settings of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Hierarchy round `r` of the full relaxation used by `bench`.
    pub rounds: usize,
    /// Variables added per seed stage.
    pub seed_size: usize,
    /// Seed stages `ℓ`.
    pub stages: usize,
    /// 2-CSP target for `ε_f`.
    pub eps: f64,
    pub eps0: f64,
    /// Slack on the objective constraint; `eps0` when unset.
    pub objective_slack: Option<f64>,
    /// Objective guess; found by bisection when unset.
    pub q: Option<f64>,
    pub rng_seed: u64,
    /// Rounding repetitions; the best is kept.
    pub repeats: usize,
    pub sampling: SamplingMode,
    pub tolerances: Tolerances,
    pub max_dim: usize,
    pub bisection: BisectionOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rounds: 2,
            seed_size: 1,
            stages: 1,
            eps: 0.1,
            eps0: 1e-4,
            objective_slack: None,
            q: None,
            rng_seed: 0,
            repeats: 100,
            sampling: SamplingMode::Exact,
            tolerances: Tolerances::default(),
            max_dim: 2048,
            bisection: BisectionOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return Err(Error::InvalidInput(format!("eps0 must lie in (0, 1), got {}", self.eps0)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {}", self.eps)));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidInput("repeats must be at least 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidInput("rounds must be at least 1".into()));
        }
        if self.stages > 0 && self.seed_size == 0 {
            return Err(Error::InvalidInput("seed size must be at least 1 when stages > 0".into()));
        }
        if let Some(s) = self.bisection.step_seconds {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidInput(format!("step seconds must be positive, got {s}")));
            }
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        let mut options = SolverOptions::new(self.stages, self.eps0).with_rng_seed(self.rng_seed);
        options.tolerances = self.tolerances.clone();
        options.certify.tolerances = self.tolerances.clone();
        options.max_dim = self.max_dim;
        options
    }
}

/// Where an instance comes from and how to run it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub mode: Mode,
    /// Edge list, or program file in raw-polynomial mode.
    pub input: Option<PathBuf>,
    /// Labels for coloring (default 3) and 2-CSP (default 2).
    pub k: Option<usize>,
    pub relation: CspRelation,
    pub config: RunConfig,
}

impl ProblemSpec {
    pub fn new(mode: Mode, input: impl Into<PathBuf>) -> Self {
        ProblemSpec { mode, input: Some(input.into()), k: None, relation: CspRelation::Equal, config: RunConfig::default() }
    }

    pub fn labels(&self) -> usize {
        self.k.unwrap_or(match self.mode {
            Mode::Coloring => 3,
            _ => 2,
        })
    }

    pub fn instance(&self) -> Result<Instance> {
        let path = self
            .input
            .as_ref()
            .ok_or_else(|| Error::InvalidInput(format!("mode {} needs an input file", self.mode)))?;
        if self.mode == Mode::RawPolynomial {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            return Ok(Instance::raw(parse_program(&text)?));
        }
        Instance::build(self.mode, ingest_graph(path)?, self.labels(), self.relation)
    }
}

/// The seed rule a mode uses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModeSeeds {
    Qip(QipSeeds),
    Color(ColorSeeds),
}

impl ModeSeeds {
    pub fn for_mode(mode: Mode, size: usize, sampling: SamplingMode) -> Self {
        match mode {
            Mode::Coloring => ModeSeeds::Color(ColorSeeds { size, mode: sampling }),
            _ => ModeSeeds::Qip(QipSeeds { size, mode: sampling }),
        }
    }
}

impl SeedRule<f64> for ModeSeeds {
    fn select(&self, level: &LevelRelaxation<f64>, y: &DVector<f64>, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        match self {
            ModeSeeds::Qip(r) => r.select(level, y, rng),
            ModeSeeds::Color(r) => r.select(level, y, rng),
        }
    }

    fn growth(&self) -> usize {
        match self {
            ModeSeeds::Qip(r) => SeedRule::<f64>::growth(r),
            ModeSeeds::Color(r) => SeedRule::<f64>::growth(r),
        }
    }
}

/// The relaxation of `instance` with objective guess `q`.
pub fn relaxation(instance: &Instance, config: &RunConfig, q: Option<f64>) -> Result<Relaxation<f64>> {
    Ok(Relaxation::new(instance.program.clone(), q)?
        .with_tolerances(config.tolerances.clone())
        .with_objective_slack(config.objective_slack.unwrap_or(config.eps0)))
}

pub fn family(instance: &Instance, config: &RunConfig, q: Option<f64>) -> Result<LasserreFamily<f64, ModeSeeds>> {
    Ok(LasserreFamily::new(
        relaxation(instance, config, q)?,
        ModeSeeds::for_mode(instance.mode, config.seed_size, config.sampling),
    ))
}

/// Whether the objective constraint is used at all.
fn has_objective(instance: &Instance) -> bool {
    !instance.program.objective.is_zero()
}

/// One solve during the search for `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub q: f64,
    pub feasible: bool,
    pub oracle_calls: usize,
}

/// Result of a search for the best objective guess.
#[derive(Clone, Debug, PartialEq)]
pub struct Bisection {
    /// Best guess with a transcript; `None` when even the trivial guess failed.
    pub q: Option<f64>,
    pub steps: Vec<BisectionStep>,
    pub transcript: Option<Transcript>,
    pub infeasible: Option<InfeasibleAssertion>,
}

/// Bisects the objective guess over `[lo, hi]`.
///
/// `solve(q)` reports whether the body with guess `q` is nonempty. For
/// maximization the guess `lo` is tried first and the bracket moves up; for
/// minimization `hi` is tried first and the bracket moves down.
pub fn bisect_objective<F>(sense: Sense, lo: f64, hi: f64, options: &BisectionOptions, mut solve: F) -> Result<Bisection>
where
    F: FnMut(f64) -> Result<SolveOutcome>,
{
    let mut steps = Vec::new();
    let mut run = |q: f64, steps: &mut Vec<BisectionStep>| -> Result<SolveOutcome> {
        let outcome = solve(q)?;
        let oracle_calls = match &outcome {
            SolveOutcome::Transcript(t) => t.total_oracle_calls,
            SolveOutcome::Infeasible(a) => a.total_oracle_calls,
        };
        steps.push(BisectionStep { q, feasible: outcome.is_feasible(), oracle_calls });
        Ok(outcome)
    };
    let (mut good, mut bad) = match sense {
        Sense::Maximize => (lo, hi),
        Sense::Minimize => (hi, lo),
    };
    let mut best = match run(good, &mut steps)? {
        SolveOutcome::Transcript(t) => t,
        SolveOutcome::Infeasible(a) => {
            return Ok(Bisection { q: None, steps, transcript: None, infeasible: Some(a) });
        }
    };
    let mut last_infeasible = None;
    for _ in 0..options.max_iterations {
        if (good - bad).abs() <= options.resolution {
            break;
        }
        let mid = 0.5 * (good + bad);
        match run(mid, &mut steps)? {
            SolveOutcome::Transcript(t) => {
                good = mid;
                best = t;
            }
            SolveOutcome::Infeasible(a) => {
                bad = mid;
                last_infeasible = Some(a);
            }
        }
    }
    Ok(Bisection { q: Some(good), steps, transcript: Some(best), infeasible: last_infeasible })
}

/// A solve in which a near-flat or too thin body, or one that used up its
/// time budget, reads as empty.
fn solve_or_flat<P: crate::solver::ProblemFamily<f64>>(problem: &P, options: &SolverOptions) -> Result<SolveOutcome> {
    match fast_solve(problem, options) {
        Err(e) if matches!(e.root(), Error::DegenerateShape { .. } | Error::ThinBody { .. } | Error::TimeBudget { .. }) => {
            Ok(SolveOutcome::Infeasible(InfeasibleAssertion {
                eps0: options.eps0,
                cut_rows: 0,
                stats: Vec::new(),
                touched_coordinates: 0,
                total_oracle_calls: 0,
            }))
        }
        other => other,
    }
}

/// Runs the fast solver at the configured `q`, or bisects for it.
pub fn solve_instance(instance: &Instance, config: &RunConfig) -> Result<Bisection> {
    config.validate()?;
    let options = config.solver_options();
    let fixed = if has_objective(instance) { config.q.map(Some) } else { Some(None) };
    if let Some(q) = fixed {
        let problem = family(instance, config, q)?;
        let outcome = fast_solve(&problem, &options)?;
        let calls = match &outcome {
            SolveOutcome::Transcript(t) => t.total_oracle_calls,
            SolveOutcome::Infeasible(a) => a.total_oracle_calls,
        };
        let steps = q.map(|q| BisectionStep { q, feasible: outcome.is_feasible(), oracle_calls: calls });
        let steps: Vec<BisectionStep> = steps.into_iter().collect();
        return Ok(match outcome {
            SolveOutcome::Transcript(t) => Bisection { q, steps, transcript: Some(t), infeasible: None },
            SolveOutcome::Infeasible(a) => Bisection { q: None, steps, transcript: None, infeasible: Some(a) },
        });
    }
    let (lo, hi) = instance.objective_range();
    let options = match config.bisection.step_seconds {
        Some(s) => options.with_time_budget(Duration::from_secs_f64(s)),
        None => options,
    };
    bisect_objective(instance.program.sense, lo, hi, &config.bisection, |q| {
        solve_or_flat(&family(instance, config, Some(q))?, &options)
    })
}

/// Value of an assignment used to pick the best repetition: fewer broken hard
/// constraints first, then the objective (smaller is better).
fn score(instance: &Instance, report: &QualityReport, assignment: &Assignment) -> (usize, f64) {
    let infeasible = match assignment.full() {
        Some(l) if instance.mode == Mode::RawPolynomial => usize::from(!instance.program.feasible(&l, 1e-9)),
        Some(_) => 0,
        None => 0,
    };
    let penalty = report.violations + report.imbalance.unwrap_or(0) + infeasible;
    let value = match instance.mode {
        Mode::Coloring => report.uncolored_fraction.unwrap_or(1.0),
        _ => {
            let v = report.objective.unwrap_or(f64::INFINITY);
            match instance.program.sense {
                Sense::Minimize => v,
                Sense::Maximize => -v,
            }
        }
    };
    (penalty, value)
}

/// Best-of-`R` rounding of a transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundingSummary {
    pub repeats: usize,
    pub best_repeat: usize,
    pub assignment: Assignment,
    pub report: QualityReport,
    /// Objective of every repetition, in order.
    pub objectives: Vec<Option<f64>>,
    /// Seed stages of the 2-CSP pipeline.
    pub csp: Option<SeedStageState>,
}

/// Per-repetition rounding seeds derived from the run seed.
pub fn repeat_seeds(base: u64, repeats: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(u64::MAX);
    (0..repeats).map(|_| rng.random()).collect()
}

/// Rounds `transcript` `config.repeats` times and evaluates the best result.
pub fn round_transcript(instance: &Instance, config: &RunConfig, transcript: &Transcript) -> Result<RoundingSummary> {
    config.validate()?;
    let (seeds, x) = transcript_vectors::<f64>(transcript, &instance.program.space, &config.tolerances)?;
    let csp = if instance.mode == Mode::TwoCsp {
        let mut options = CspStageOptions::new(config.seed_size.max(1), config.eps);
        options.mode = config.sampling;
        options.candidates = Some(seeds.clone());
        Some(run_csp_stages(&x, &instance.demands(), &options, &mut seed_rng(config.rng_seed, usize::MAX))?)
    } else {
        None
    };
    let mut best: Option<(usize, Assignment, QualityReport, (usize, f64))> = None;
    let mut objectives = Vec::with_capacity(config.repeats);
    for (i, s) in repeat_seeds(config.rng_seed, config.repeats).into_iter().enumerate() {
        let assignment = match (&csp, instance.mode) {
            (Some(state), _) => csp_round(&x, &state.assignment, s)?,
            (None, Mode::Coloring) => threshold_color(&x, &seeds, s)?,
            (None, _) => propagation_round(&x, &seeds, s)?,
        };
        let report = measure(&assignment, instance)?;
        objectives.push(report.objective);
        let key = score(instance, &report, &assignment);
        if best.as_ref().is_none_or(|b| key.0 < b.3 .0 || (key.0 == b.3 .0 && key.1 < b.3 .1)) {
            best = Some((i, assignment, report, key));
        }
    }
    let (best_repeat, assignment, _, _) = best.expect("at least one repetition");
    let report = evaluate(&assignment, instance)?;
    Ok(RoundingSummary { repeats: config.repeats, best_repeat, assignment, report, objectives, csp })
}

/// Re-checks a transcript against the family it was solved on.
pub fn check_transcript(instance: &Instance, config: &RunConfig, q: Option<f64>, transcript: &Transcript) -> Result<ReplayReport> {
    let problem = family(instance, config, q)?;
    replay_report(transcript, &problem, &config.tolerances)
}

/// Everything one run produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub version: u32,
    pub spec: ProblemSpec,
    pub q: Option<f64>,
    pub bisection: Vec<BisectionStep>,
    pub feasible: bool,
    pub transcript: Option<Transcript>,
    pub infeasible: Option<InfeasibleAssertion>,
    pub replay: Option<ReplayReport>,
    pub rounding: Option<RoundingSummary>,
}

impl RunResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run results serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }
}

/// Loads the instance of `spec` and runs it.
pub fn run_experiment(spec: &ProblemSpec) -> Result<RunResult> {
    let instance = spec.instance()?;
    run_instance(spec, &instance)
}

/// Solves (bisecting `q` when needed), replays, rounds best-of-`R` and evaluates.
pub fn run_instance(spec: &ProblemSpec, instance: &Instance) -> Result<RunResult> {
    let config = &spec.config;
    let solved = solve_instance(instance, config)?;
    let (replay, rounding) = match &solved.transcript {
        Some(t) => (
            Some(check_transcript(instance, config, solved.q, t)?),
            Some(round_transcript(instance, config, t)?),
        ),
        None => (None, None),
    };
    Ok(RunResult {
        version: RUN_RESULT_VERSION,
        spec: spec.clone(),
        q: solved.q,
        bisection: solved.steps,
        feasible: solved.transcript.is_some(),
        transcript: solved.transcript,
        infeasible: solved.infeasible,
        replay,
        rounding,
    })
}

/// Sizes of an instance's relaxation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSummary {
    pub mode: Mode,
    pub vars: usize,
    pub labels: usize,
    pub degree: usize,
    pub rounds: usize,
    /// Coordinates of the root level `{∅}`.
    pub root_coordinates: usize,
    /// Coordinates of the full level-`r` relaxation.
    pub full_coordinates: usize,
    /// Equality rows of the root level.
    pub root_equalities: usize,
}

pub fn summarize_relaxation(instance: &Instance, config: &RunConfig) -> Result<RelaxationSummary> {
    let relax = relaxation(instance, config, None)?;
    let root = relax.level(&SeedFamily::root())?;
    Ok(RelaxationSummary {
        mode: instance.mode,
        vars: instance.vars(),
        labels: instance.labels(),
        degree: relax.degree(),
        rounds: config.rounds,
        root_coordinates: root.dim(),
        full_coordinates: relax.coordinates(&SeedFamily::Bounded(config.rounds - 1)).len(),
        root_equalities: root.equalities().matrix.nrows(),
    })
}

/// How a timed solve ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "detail")]
pub enum BenchStatus {
    Feasible,
    Infeasible,
    DidNotFinish(String),
}

impl BenchStatus {
    pub fn label(&self) -> &'static str {
        match self {
            BenchStatus::Feasible => "feasible",
            BenchStatus::Infeasible => "infeasible",
            BenchStatus::DidNotFinish(_) => "did-not-finish",
        }
    }
}

/// Fast solve against the full level-`r` solve on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: Mode,
    pub vars: usize,
    pub rounds: usize,
    pub stages: usize,
    pub seed_size: usize,
    pub q: Option<f64>,
    pub fast_status: BenchStatus,
    pub fast_touched: usize,
    pub fast_oracle_calls: usize,
    pub fast_seconds: f64,
    /// Coordinates the full relaxation has.
    pub full_coordinates: usize,
    pub full_status: BenchStatus,
    pub full_oracle_calls: usize,
    pub full_seconds: f64,
}

fn timed(problem: &impl crate::solver::ProblemFamily<f64>, options: &SolverOptions) -> (BenchStatus, usize, usize, f64) {
    let start = Instant::now();
    let result = fast_solve(problem, options);
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(SolveOutcome::Transcript(t)) => (BenchStatus::Feasible, t.touched_coordinates, t.total_oracle_calls, seconds),
        Ok(SolveOutcome::Infeasible(a)) => {
            (BenchStatus::Infeasible, a.touched_coordinates, a.total_oracle_calls, seconds)
        }
        Err(e) => (BenchStatus::DidNotFinish(e.to_string()), 0, 0, seconds),
    }
}

/// Times the fast solver and the full level-`r` solve with the same guess
/// `q` (the trivial bound when unset). Each gets `budget`.
pub fn bench(instance: &Instance, config: &RunConfig, budget: Duration) -> Result<BenchRow> {
    config.validate()?;
    let q = match config.q {
        Some(q) => Some(q),
        None if has_objective(instance) => {
            let (lo, hi) = instance.objective_range();
            Some(if instance.program.sense == Sense::Maximize { lo } else { hi })
        }
        None => None,
    };
    let options = config.solver_options().with_time_budget(budget);
    let fast = family(instance, config, q)?;
    let (fast_status, fast_touched, fast_oracle_calls, fast_seconds) = timed(&fast, &options);

    let full = FixedLevel::full(relaxation(instance, config, q)?, config.rounds);
    let full_coordinates = full.relaxation().coordinates(&SeedFamily::Bounded(config.rounds - 1)).len();
    let mut full_options = options.clone();
    full_options.stages = 0;
    let (full_status, _, full_oracle_calls, full_seconds) = timed(&full, &full_options);
    Ok(BenchRow {
        mode: instance.mode,
        vars: instance.vars(),
        rounds: config.rounds,
        stages: config.stages,
        seed_size: config.seed_size,
        q,
        fast_status,
        fast_touched,
        fast_oracle_calls,
        fast_seconds,
        full_coordinates,
        full_status,
        full_oracle_calls,
        full_seconds,
    })
}

pub const BENCH_CSV_HEADER: &str = "mode,vars,rounds,stages,seed_size,q,fast_status,fast_touched,fast_oracle_calls,\
fast_seconds,full_coordinates,full_status,full_oracle_calls,full_seconds";

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.3},{},{},{},{:.3}",
            self.mode,
            self.vars,
            self.rounds,
            self.stages,
            self.seed_size,
            self.q.map(|q| q.to_string()).unwrap_or_default(),
            self.fast_status.label(),
            self.fast_touched,
            self.fast_oracle_calls,
            self.fast_seconds,
            self.full_coordinates,
            self.full_status.label(),
            self.full_oracle_calls,
            self.full_seconds
        )
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    std::iter::once(BENCH_CSV_HEADER.to_string()).chain(rows.iter().map(BenchRow::csv)).collect::<Vec<_>>().join("\n") + "\n"
}
