//! Nested separation oracles that find the local part of a hierarchy solution.
//!
//! Level `i` of a solve owns a seed family `S(i)` and the body `K_{S(i)}` over
//! the coordinates `ex(S(i), D)`. A query at level `i` first runs the level's
//! own membership test; if it passes and deeper levels remain, the next seed
//! family is selected and the point is either extended to level `i + 1` or
//! refuted by a certificate supported on the coordinates of level `i`.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certify::{certify_e_with, CertifyOptions, CertifyOutcome};
use crate::ellipsoid::{ccut_e_with, CcutOptions, CcutOutcome};
use crate::error::{Error, Result};
use crate::geometry::{ln_ball_volume, AffineSlice, OrthoProjection, SliceConstruction};
use crate::lasserre::{LevelRelaxation, Relaxation, SeedFamily, SubsetIndex};
use crate::oracle::{SeparationOracle, SeparationResponse};
use crate::scalar::{Scalar, Tolerances};

/// Version written into every transcript.
pub const TRANSCRIPT_VERSION: u32 = 1;

/// Largest allowed cut leaking outside the fixed coordinates.
pub const SUPPORT_TOLERANCE: f64 = 1e-8;

/// Largest allowed drift of a level's values away from the previous level.
pub const RESTRICTION_TOLERANCE: f64 = 1e-8;

/// Deterministic generator for the seed selection at `depth`.
pub fn seed_rng(base: u64, depth: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(depth as u64);
    rng
}

/// A family of nested convex bodies indexed by seed families.
pub trait ProblemFamily<T: Scalar> {
    /// Seed family of level 0, `{∅}` unless overridden.
    fn root_seed(&self) -> SeedFamily {
        SeedFamily::root()
    }

    /// The body `K_S` with its coordinates and membership test.
    fn level(&self, seed: &SeedFamily) -> Result<LevelRelaxation<T>>;

    /// Seed family of the next level given a point of `level`. Must contain the
    /// current family and depend only on `y` and `rng`.
    fn next_seed(&self, level: &LevelRelaxation<T>, y: &DVector<T>, rng: &mut ChaCha8Rng) -> Result<SeedFamily>;

    /// Most variables one call to [`ProblemFamily::next_seed`] adds.
    fn growth(&self) -> usize;
}

/// How a [`LasserreFamily`] picks the variables of the next level.
pub trait SeedRule<T: Scalar> {
    /// New seed variables to add; the current ones are kept regardless.
    fn select(&self, level: &LevelRelaxation<T>, y: &DVector<T>, rng: &mut ChaCha8Rng) -> Result<Vec<usize>>;

    fn growth(&self) -> usize;
}

/// Adds fixed variable groups in order, one group per level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedSeeds(pub Vec<Vec<usize>>);

impl<T: Scalar> SeedRule<T> for FixedSeeds {
    fn select(&self, level: &LevelRelaxation<T>, _y: &DVector<T>, _rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        let current: BTreeSet<usize> = level.seed().seed_vars().unwrap_or(&[]).iter().copied().collect();
        Ok(self
            .0
            .iter()
            .find(|g| !g.iter().all(|v| current.contains(v)))
            .cloned()
            .unwrap_or_default())
    }

    fn growth(&self) -> usize {
        self.0.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Lasserre relaxation levels over variable seed families.
#[derive(Clone, Debug)]
pub struct LasserreFamily<T: Scalar, R> {
    relaxation: Relaxation<T>,
    rule: R,
}

impl<T: Scalar, R: SeedRule<T>> LasserreFamily<T, R> {
    pub fn new(relaxation: Relaxation<T>, rule: R) -> Self {
        LasserreFamily { relaxation, rule }
    }

    pub fn relaxation(&self) -> &Relaxation<T> {
        &self.relaxation
    }

    pub fn rule(&self) -> &R {
        &self.rule
    }
}

impl<T: Scalar, R: SeedRule<T>> ProblemFamily<T> for LasserreFamily<T, R> {
    fn level(&self, seed: &SeedFamily) -> Result<LevelRelaxation<T>> {
        self.relaxation.level(seed)
    }

    fn next_seed(&self, level: &LevelRelaxation<T>, y: &DVector<T>, rng: &mut ChaCha8Rng) -> Result<SeedFamily> {
        let current = level
            .seed()
            .seed_vars()
            .ok_or_else(|| Error::InvalidInput("seed selection needs a variable seed family".into()))?;
        let added = self.rule.select(level, y, rng)?;
        let n = level.space().vars();
        if let Some(v) = added.iter().find(|&&v| v >= n) {
            return Err(Error::InvalidInput(format!("seed variable {v} out of range")));
        }
        Ok(SeedFamily::vars(current.iter().copied().chain(added)))
    }

    fn growth(&self) -> usize {
        self.rule.growth()
    }
}

/// A single level with a fixed seed family, solved with zero stages. With
/// `SeedFamily::Bounded(r − 1)` this is the full level-`r` relaxation.
#[derive(Clone, Debug)]
pub struct FixedLevel<T: Scalar> {
    relaxation: Relaxation<T>,
    seed: SeedFamily,
}

impl<T: Scalar> FixedLevel<T> {
    pub fn new(relaxation: Relaxation<T>, seed: SeedFamily) -> Self {
        FixedLevel { relaxation, seed }
    }

    /// The level-`rounds` relaxation over every atom set of size at most `2·rounds`.
    pub fn full(relaxation: Relaxation<T>, rounds: usize) -> Self {
        FixedLevel::new(relaxation, SeedFamily::Bounded(rounds.saturating_sub(1)))
    }

    pub fn relaxation(&self) -> &Relaxation<T> {
        &self.relaxation
    }
}

impl<T: Scalar> ProblemFamily<T> for FixedLevel<T> {
    fn root_seed(&self) -> SeedFamily {
        self.seed.clone()
    }

    fn level(&self, seed: &SeedFamily) -> Result<LevelRelaxation<T>> {
        self.relaxation.level(seed)
    }

    fn next_seed(&self, level: &LevelRelaxation<T>, _y: &DVector<T>, _rng: &mut ChaCha8Rng) -> Result<SeedFamily> {
        Ok(level.seed().clone())
    }

    fn growth(&self) -> usize {
        0
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Number of seed stages `ℓ`.
    pub stages: usize,
    pub eps0: f64,
    pub rng_seed: u64,
    pub tolerances: Tolerances,
    pub certify: CertifyOptions,
    /// Refuse levels with more coordinates than this.
    pub max_dim: usize,
    pub time_budget: Option<Duration>,
}

impl SolverOptions {
    pub fn new(stages: usize, eps0: f64) -> Self {
        SolverOptions {
            stages,
            eps0,
            rng_seed: 0,
            tolerances: Tolerances::default(),
            certify: CertifyOptions::default(),
            max_dim: 2048,
            time_budget: None,
        }
    }

    pub fn with_rng_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_time_budget(mut self, budget: Duration) -> Self {
        self.time_budget = Some(budget);
        self
    }
}

/// Counters for one level of a solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    /// Membership tests run at this level.
    pub oracle_calls: usize,
    /// Cuts produced by the membership test itself.
    pub feasibility_cuts: usize,
    /// Extensions to the next level attempted.
    pub certify_calls: usize,
    pub certificates: usize,
    /// Distinct seed families whose level was built.
    pub seed_families: usize,
    /// Largest coordinate count among those levels.
    pub max_dim: usize,
    /// Largest `‖Π^⊥ c‖` among certificates forwarded from this level.
    pub max_support_leak: f64,
}

/// One level of a transcript: its seed family and the committed point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLevel {
    pub seed: SeedFamily,
    pub coordinates: Vec<SubsetIndex>,
    pub values: Vec<f64>,
}

impl TranscriptLevel {
    pub fn value(&self, s: SubsetIndex) -> Option<f64> {
        if s.is_empty() {
            return Some(1.0);
        }
        self.coordinates.binary_search(&s).ok().map(|i| self.values[i])
    }

    pub fn vector<T: Scalar>(&self) -> DVector<T> {
        DVector::from_iterator(self.values.len(), self.values.iter().map(|v| T::lit(*v)))
    }
}

/// The seed families and partial solutions a local rounding algorithm reads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub version: u32,
    pub stages: usize,
    pub eps0: f64,
    pub rng_seed: u64,
    pub levels: Vec<TranscriptLevel>,
    pub stats: Vec<LevelStats>,
    /// Number of distinct moment coordinates that appeared in any level built.
    pub touched_coordinates: usize,
    pub total_oracle_calls: usize,
}

impl Transcript {
    /// The deepest level, holding `y*`.
    pub fn last(&self) -> &TranscriptLevel {
        self.levels.last().expect("transcripts have at least one level")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcripts serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }
}

/// The ellipsoid ran out of volume: the body has volume at most about `ε₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleAssertion {
    pub eps0: f64,
    pub cut_rows: usize,
    pub stats: Vec<LevelStats>,
    pub touched_coordinates: usize,
    pub total_oracle_calls: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolveOutcome {
    Transcript(Transcript),
    Infeasible(InfeasibleAssertion),
}

impl SolveOutcome {
    pub fn transcript(&self) -> Option<&Transcript> {
        match self {
            SolveOutcome::Transcript(t) => Some(t),
            SolveOutcome::Infeasible(_) => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.transcript().is_some()
    }
}

struct Run<'p, T: Scalar, P> {
    problem: &'p P,
    options: &'p SolverOptions,
    started: Instant,
    cache: HashMap<SeedFamily, Rc<LevelRelaxation<T>>>,
    commits: Vec<Option<(SeedFamily, DVector<T>)>>,
    stats: Vec<LevelStats>,
    touched: BTreeSet<SubsetIndex>,
}

const CACHE_LIMIT: usize = 256;

impl<T: Scalar, P: ProblemFamily<T>> Run<'_, T, P> {
    fn level(&mut self, depth: usize, seed: &SeedFamily) -> Result<Rc<LevelRelaxation<T>>> {
        if let Some(l) = self.cache.get(seed) {
            return Ok(l.clone());
        }
        let level = self.problem.level(seed)?;
        if level.dim() > self.options.max_dim {
            return Err(Error::TooLarge(format!(
                "level with {} coordinates exceeds {}",
                level.dim(),
                self.options.max_dim
            )));
        }
        self.touched.extend(level.coordinates().iter().copied());
        let stats = &mut self.stats[depth];
        stats.seed_families += 1;
        stats.max_dim = stats.max_dim.max(level.dim());
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        let level = Rc::new(level);
        self.cache.insert(seed.clone(), level.clone());
        Ok(level)
    }

    fn check_budget(&self) -> Result<()> {
        match self.options.time_budget {
            Some(b) if self.started.elapsed() > b => Err(Error::TimeBudget { seconds: b.as_secs_f64() }),
            _ => Ok(()),
        }
    }
}

/// The separation oracle of level `depth`.
struct LevelOracle<'r, 'p, T: Scalar, P> {
    run: &'r RefCell<Run<'p, T, P>>,
    depth: usize,
    level: Rc<LevelRelaxation<T>>,
}

impl<T: Scalar, P: ProblemFamily<T>> SeparationOracle<T> for LevelOracle<'_, '_, T, P> {
    fn dim(&self) -> usize {
        self.level.dim()
    }

    fn separate(&mut self, y: &DVector<T>, slack: T) -> Result<SeparationResponse<T>> {
        self.separate_at(y, slack).map_err(|e| e.at_level(self.depth))
    }
}

impl<T: Scalar, P: ProblemFamily<T>> LevelOracle<'_, '_, T, P> {
    fn separate_at(&mut self, y: &DVector<T>, slack: T) -> Result<SeparationResponse<T>> {
        let (stages, eps0, base, certify) = {
            let run = self.run.borrow();
            run.check_budget()?;
            (run.options.stages, run.options.eps0, run.options.rng_seed, run.options.certify.clone())
        };
        self.run.borrow_mut().stats[self.depth].oracle_calls += 1;
        let response = self.level.separate(y, slack)?;
        if !response.is_feasible() {
            self.run.borrow_mut().stats[self.depth].feasibility_cuts += 1;
            return Ok(response);
        }
        if self.depth >= stages {
            self.commit(y);
            return Ok(SeparationResponse::Feasible);
        }

        let problem = self.run.borrow().problem;
        let mut rng = seed_rng(base, self.depth);
        let next_seed = problem.next_seed(&self.level, y, &mut rng)?;
        let next = self.run.borrow_mut().level(self.depth + 1, &next_seed)?;
        let positions = self
            .level
            .coordinates()
            .iter()
            .map(|s| {
                next.position(*s)
                    .ok_or_else(|| Error::InvalidInput(format!("coordinate {s} missing from the next level")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let projection = OrthoProjection::coordinates(next.dim(), &positions)?;
        let mut y0 = DVector::zeros(next.dim());
        for (i, &p) in positions.iter().enumerate() {
            y0[p] = y[i];
        }
        self.run.borrow_mut().stats[self.depth].certify_calls += 1;
        let mut inner = LevelOracle { run: self.run, depth: self.depth + 1, level: next.clone() };
        let report =
            certify_e_with(&mut inner, &projection, &y0, next.equalities(), T::lit(eps0), &certify)?;
        match report.outcome {
            CertifyOutcome::Point(_) => {
                self.commit(y);
                Ok(SeparationResponse::Feasible)
            }
            CertifyOutcome::Certificate { normal, bound } => {
                let leak = projection.apply_perp(&normal)?.norm().as_f64();
                let restricted = DVector::from_iterator(positions.len(), positions.iter().map(|&p| normal[p]));
                let mut run = self.run.borrow_mut();
                let stats = &mut run.stats[self.depth];
                stats.certificates += 1;
                stats.max_support_leak = stats.max_support_leak.max(leak);
                SeparationResponse::cut(restricted, bound).ok_or(Error::ZeroDirection { norm: 0.0 })
            }
        }
    }

    fn commit(&self, y: &DVector<T>) {
        self.run.borrow_mut().commits[self.depth] = Some((self.level.seed().clone(), y.clone()));
    }
}

/// Finds a transcript of `stages + 1` nested levels, or asserts that the
/// body has volume below about `eps0`.
pub fn fast_solve<T: Scalar, P: ProblemFamily<T>>(problem: &P, options: &SolverOptions) -> Result<SolveOutcome> {
    if !(options.eps0 > 0.0 && options.eps0 < 1.0) {
        return Err(Error::InvalidInput(format!("eps0 must lie in (0, 1), got {}", options.eps0)));
    }
    let run = RefCell::new(Run {
        problem,
        options,
        started: Instant::now(),
        cache: HashMap::new(),
        commits: vec![None; options.stages + 1],
        stats: vec![LevelStats::default(); options.stages + 1],
        touched: BTreeSet::new(),
    });
    let root = problem.root_seed();
    let level = run.borrow_mut().level(0, &root).map_err(|e| e.at_level(0))?;
    let n = level.dim();
    let slice = match AffineSlice::with_equalities(OrthoProjection::zero(n), DVector::zeros(n), level.equalities())
        .map_err(|e| e.at_level(0))?
    {
        SliceConstruction::Slice(s) => Some(s),
        SliceConstruction::Inconsistent { .. } => None,
    };
    let outcome = match slice {
        None => None,
        Some(slice) => {
            let mut ccut = CcutOptions::with_ln_volume(ln_ball_volume(slice.chart_dim(), options.eps0 / 2.0));
            ccut.tolerances = options.tolerances.clone();
            ccut.query_slack = options.tolerances.query_slack;
            let mut oracle = LevelOracle { run: &run, depth: 0, level };
            Some(ccut_e_with(&mut oracle, &slice, &ccut).map_err(|e| e.at_level(0))?)
        }
    };
    let run = run.into_inner();
    let total_oracle_calls = run.stats.iter().map(|s| s.oracle_calls).sum();
    match outcome {
        Some(CcutOutcome::Point { .. }) => {
            let levels = run
                .commits
                .into_iter()
                .enumerate()
                .map(|(i, c)| {
                    let (seed, y) = c.ok_or_else(|| Error::InvalidInput(format!("level {i} was never committed")))?;
                    let level = problem.level(&seed)?;
                    Ok(TranscriptLevel {
                        seed,
                        coordinates: level.coordinates().to_vec(),
                        values: y.iter().map(|v| v.as_f64()).collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SolveOutcome::Transcript(Transcript {
                version: TRANSCRIPT_VERSION,
                stages: options.stages,
                eps0: options.eps0,
                rng_seed: options.rng_seed,
                levels,
                stats: run.stats,
                touched_coordinates: run.touched.len(),
                total_oracle_calls,
            }))
        }
        Some(CcutOutcome::CutPolytope { polytope, .. }) => Ok(SolveOutcome::Infeasible(InfeasibleAssertion {
            eps0: options.eps0,
            cut_rows: polytope.len(),
            stats: run.stats,
            touched_coordinates: run.touched.len(),
            total_oracle_calls,
        })),
        None => Ok(SolveOutcome::Infeasible(InfeasibleAssertion {
            eps0: options.eps0,
            cut_rows: 0,
            stats: run.stats,
            touched_coordinates: run.touched.len(),
            total_oracle_calls,
        })),
    }
}

/// Outcome of re-checking one transcript level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelCheck {
    pub feasible: bool,
    pub min_eigenvalue: f64,
    /// Whether selecting a seed from this level reproduces the next level's family.
    /// Always true on the last level.
    pub seed_replayed: bool,
    /// Largest difference between this level's values and the next level's on
    /// shared coordinates; `None` when a coordinate is missing.
    pub restriction_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub levels: Vec<LevelCheck>,
    pub root_matches: bool,
    pub passed: bool,
}

/// Re-checks every property a local rounding algorithm relies on: each level
/// passes its membership test, seed selection replays, and consecutive levels
/// agree on shared coordinates.
pub fn replay_report<T: Scalar, P: ProblemFamily<T>>(
    transcript: &Transcript,
    problem: &P,
    tolerances: &Tolerances,
) -> Result<ReplayReport> {
    let root_matches = transcript.levels.first().map(|l| l.seed == problem.root_seed()).unwrap_or(false);
    let mut levels = Vec::with_capacity(transcript.levels.len());
    for (i, entry) in transcript.levels.iter().enumerate() {
        let level = problem.level(&entry.seed)?;
        let shape_ok = level.coordinates() == entry.coordinates.as_slice();
        let y: DVector<T> = entry.vector();
        let (feasible, min_eigenvalue) = if shape_ok {
            let feasible = level.separate(&y, T::lit(tolerances.query_slack))?.is_feasible();
            (feasible, level.report(&y)?.min_eigenvalue().as_f64())
        } else {
            (false, f64::NAN)
        };
        let (seed_replayed, restriction_error) = match transcript.levels.get(i + 1) {
            None => (true, Some(0.0)),
            Some(next) => {
                let replayed = shape_ok
                    && problem.next_seed(&level, &y, &mut seed_rng(transcript.rng_seed, i))? == next.seed;
                let err = entry.coordinates.iter().zip(&entry.values).try_fold(0.0f64, |acc, (s, v)| {
                    next.value(*s).map(|w| acc.max((w - v).abs()))
                });
                (replayed, err)
            }
        };
        levels.push(LevelCheck { feasible, min_eigenvalue, seed_replayed, restriction_error });
    }
    let passed = root_matches
        && !levels.is_empty()
        && levels.iter().all(|l| {
            l.feasible && l.seed_replayed && l.restriction_error.is_some_and(|e| e <= RESTRICTION_TOLERANCE)
        });
    Ok(ReplayReport { levels, root_matches, passed })
}

/// [`replay_report`] reduced to pass or fail; errors count as failure.
pub fn replay_check<T: Scalar, P: ProblemFamily<T>>(transcript: &Transcript, problem: &P) -> bool {
    replay_report::<T, P>(transcript, problem, &Tolerances::default()).is_ok_and(|r| r.passed)
}
