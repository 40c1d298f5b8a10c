//! Rounding a vector solution to labels, and scoring the result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{brute_force, laplacian_spectrum, CspRelation, Instance, Mode};
use crate::lasserre::{seed_vectors, AtomSpace, ConditionedVectors, LabelVectors, Labeling, PseudoMoments};
use crate::scalar::{Scalar, Tolerances};
use crate::seeding::{pick, Demand};
use crate::solver::Transcript;

/// Labels per variable; `None` marks a vertex left uncolored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub labels: Vec<Option<usize>>,
    pub rng_seed: u64,
    /// The seed labeling the other variables were conditioned on.
    pub conditioning: Labeling,
}

impl Assignment {
    pub fn complete(labels: Vec<usize>, rng_seed: u64, conditioning: Labeling) -> Self {
        Assignment { labels: labels.into_iter().map(Some).collect(), rng_seed, conditioning }
    }

    /// All labels, or `None` if some variable is uncolored.
    pub fn full(&self) -> Option<Vec<usize>> {
        self.labels.iter().copied().collect()
    }

    pub fn uncolored(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// Vectors of the deepest transcript level, over its seed variables.
pub fn transcript_vectors<T: Scalar>(
    transcript: &Transcript,
    space: &AtomSpace,
    tolerances: &Tolerances,
) -> Result<(Vec<usize>, LabelVectors<T>)> {
    let last = transcript.last();
    let seeds = last
        .seed
        .seed_vars()
        .ok_or_else(|| Error::InvalidInput("rounding needs a variable seed family".into()))?
        .to_vec();
    let y = PseudoMoments::from_vector(space.clone(), &last.coordinates, &last.vector())?;
    Ok((seeds.clone(), seed_vectors(&y, &seeds, tolerances)?))
}

/// Conditional label probabilities `‖x_{u|f}(i)‖²`, clipped at zero.
pub fn conditional_marginals<T: Scalar>(c: &ConditionedVectors<'_, T>, u: usize) -> Result<Vec<f64>> {
    Ok(c.marginals(u)?.into_iter().map(|p| p.as_f64().max(0.0)).collect())
}

/// Draws `f` on `seeds` with probability `‖x_S(f)‖²`.
pub fn sample_seed_labeling<T: Scalar>(x: &LabelVectors<T>, seeds: &[usize], rng: &mut ChaCha8Rng) -> Result<Labeling> {
    let all = Labeling::all(seeds, x.space().labels());
    let zero = x.tolerances().zero;
    let weights = all
        .iter()
        .map(|f| {
            let v = x.label_vector(f)?;
            let n = v.norm().as_f64();
            Ok(if n > zero { n * n } else { 0.0 })
        })
        .collect::<Result<Vec<f64>>>()?;
    let i = pick(&weights, rng).ok_or(Error::ZeroConditioning { norm: 0.0 })?;
    Ok(all[i].clone())
}

fn label_rest<T: Scalar>(
    c: &ConditionedVectors<'_, T>,
    f: &Labeling,
    rng: &mut ChaCha8Rng,
    mut choose: impl FnMut(&[f64], &mut ChaCha8Rng) -> Option<usize>,
) -> Result<Vec<Option<usize>>> {
    let n = c.base().space().vars();
    (0..n)
        .map(|u| match f.label(u) {
            Some(l) => Ok(Some(l)),
            None => Ok(choose(&conditional_marginals(c, u)?, rng)),
        })
        .collect()
}

/// Samples `f` on the seeds, then labels every other variable independently
/// from its conditional marginals.
pub fn propagation_round<T: Scalar>(x: &LabelVectors<T>, seeds: &[usize], rng_seed: u64) -> Result<Assignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let f = sample_seed_labeling(x, seeds, &mut rng)?;
    let c = x.condition(&f)?;
    let labels = label_rest(&c, &f, &mut rng, |p, r| Some(pick(p, r).unwrap_or(0)))?;
    Ok(Assignment { labels, rng_seed, conditioning: f })
}

/// How far above one half a probability must be to count as a majority, so
/// that exact ties computed with round-off stay uncolored.
pub const THRESHOLD_MARGIN: f64 = 1e-9;

/// The color whose conditional probability exceeds one half, if any.
pub fn threshold_label(marginals: &[f64]) -> Option<usize> {
    marginals.iter().position(|&p| p > 0.5 + THRESHOLD_MARGIN)
}

/// Partial coloring: after sampling `f` on the seeds, a vertex takes the color
/// whose conditional probability is above one half and stays uncolored otherwise.
pub fn threshold_color<T: Scalar>(x: &LabelVectors<T>, seeds: &[usize], rng_seed: u64) -> Result<Assignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let f = sample_seed_labeling(x, seeds, &mut rng)?;
    let c = x.condition(&f)?;
    let labels = label_rest(&c, &f, &mut rng, |p, _| threshold_label(p))?;
    Ok(Assignment { labels, rng_seed, conditioning: f })
}

/// Independent rounding from the marginals conditioned on a fixed `f`.
pub fn csp_round<T: Scalar>(x: &LabelVectors<T>, f: &Labeling, rng_seed: u64) -> Result<Assignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let c = x.condition(f)?;
    let labels = label_rest(&c, f, &mut rng, |p, r| Some(pick(p, r).unwrap_or(0)))?;
    Ok(Assignment { labels, rng_seed, conditioning: f.clone() })
}

/// `(ε_f, δ_f)`: the average absolute covariance over weighted edges and the
/// average total variance over variables.
pub fn variance_functionals<T: Scalar>(c: &ConditionedVectors<'_, T>, edges: &[Demand]) -> Result<(T, T)> {
    let space = c.base().space();
    let (n, k) = (space.vars(), space.labels());
    let centered = (0..n)
        .map(|u| (0..k).map(|i| Ok(c.perp(&c.vector(&Labeling::single(u, i))?))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = edges.iter().map(|e| e.2).sum();
    let mut eps = T::zero();
    if total > 0.0 {
        for &(u, v, w) in edges {
            let mut s = T::zero();
            for a in &centered[u] {
                for b in &centered[v] {
                    s += a.dot(b).abs();
                }
            }
            eps += s * T::lit(w / total);
        }
    }
    let mut delta = T::zero();
    for u in 0..n {
        for i in 0..k {
            delta += c.variance(&Labeling::single(u, i))?;
        }
    }
    let delta = if n == 0 { T::zero() } else { delta / T::from_usize(n).expect("count fits scalar") };
    Ok((eps, delta))
}

/// Quality of one assignment on an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub mode: Mode,
    /// Objective value; `None` when the assignment leaves variables uncolored.
    pub objective: Option<f64>,
    /// Whether a complete assignment meets every constraint of the program.
    pub feasible: Option<bool>,
    /// Exhaustive optimum when the instance is small enough.
    pub optimum: Option<f64>,
    /// Why the optimum is missing.
    pub optimum_note: Option<String>,
    /// Normalized-Laplacian eigenvalues, ascending.
    pub spectrum: Vec<f64>,
    pub isolated_vertices: Vec<usize>,
    /// Total weight of edges cut.
    pub cut_weight: Option<f64>,
    /// `|#label-1 − ⌊n/2⌋|` for bisection.
    pub imbalance: Option<usize>,
    /// Edges breaking a hard constraint (both endpoints in an independent set,
    /// or both endpoints with the same color).
    pub violations: usize,
    pub uncolored_fraction: Option<f64>,
    /// Weighted fraction of satisfied 2-CSP constraints.
    pub satisfied_fraction: Option<f64>,
}

/// Largest binary instance whose optimum [`evaluate`] attaches.
pub const EVALUATE_BINARY_VARS: usize = 18;

/// Scores `assignment` exactly and attaches the brute-force optimum when the
/// instance is small enough.
pub fn evaluate(assignment: &Assignment, instance: &Instance) -> Result<QualityReport> {
    let mut report = measure(assignment, instance)?;
    let n = instance.vars();
    let search = if instance.labels() == 2 && n > EVALUATE_BINARY_VARS {
        Err(Error::TooLarge(format!("{n} binary variables exceed {EVALUATE_BINARY_VARS}")))
    } else {
        brute_force(instance)
    };
    match search {
        Ok(Some(b)) => report.optimum = Some(b.value),
        Ok(None) => report.optimum_note = Some("no feasible labeling".to_string()),
        Err(Error::TooLarge(msg)) => report.optimum_note = Some(msg),
        Err(e) => return Err(e),
    }
    Ok(report)
}

/// [`evaluate`] without the exhaustive optimum.
pub fn measure(assignment: &Assignment, instance: &Instance) -> Result<QualityReport> {
    let n = instance.program.space.vars();
    if assignment.labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: assignment.labels.len() });
    }
    let full = assignment.full();
    let objective = full.as_ref().map(|l| instance.program.value(l));
    let feasible = full.as_ref().map(|l| instance.program.feasible(l, 1e-9));
    let (spectrum, isolated) = match &instance.graph {
        Some(g) => {
            let s = laplacian_spectrum(g);
            (s.values, s.isolated)
        }
        None => (Vec::new(), Vec::new()),
    };
    let mut report = QualityReport {
        mode: instance.mode,
        objective,
        feasible,
        optimum: None,
        optimum_note: None,
        spectrum,
        isolated_vertices: isolated,
        cut_weight: None,
        imbalance: None,
        violations: 0,
        uncolored_fraction: None,
        satisfied_fraction: None,
    };
    let Some(g) = &instance.graph else { return Ok(report) };
    let labels = &assignment.labels;
    match instance.mode {
        Mode::MaxCut | Mode::MinBisection => {
            report.cut_weight = Some(g.edges().iter().filter(|e| labels[e.0] != labels[e.1]).map(|e| e.2).sum());
            if instance.mode == Mode::MinBisection {
                let ones = labels.iter().filter(|l| **l == Some(1)).count();
                report.imbalance = Some(ones.abs_diff(n / 2));
            }
        }
        Mode::IndependentSet => {
            report.violations = g.edges().iter().filter(|e| labels[e.0] == Some(1) && labels[e.1] == Some(1)).count();
        }
        Mode::Coloring => {
            report.violations =
                g.edges().iter().filter(|e| labels[e.0].is_some() && labels[e.0] == labels[e.1]).count();
            report.uncolored_fraction = Some(if n == 0 { 0.0 } else { assignment.uncolored() as f64 / n as f64 });
        }
        Mode::TwoCsp => {
            let total: f64 = g.edges().iter().map(|e| e.2).sum();
            let sat: f64 = g
                .edges()
                .iter()
                .filter(|e| match (labels[e.0], labels[e.1]) {
                    (Some(a), Some(b)) => instance.relation.holds(a, b),
                    _ => false,
                })
                .map(|e| e.2)
                .sum();
            report.satisfied_fraction = Some(if total > 0.0 { sat / total } else { 1.0 });
        }
        Mode::RawPolynomial => {}
    }
    Ok(report)
}

impl CspRelation {
    pub fn holds(&self, a: usize, b: usize) -> bool {
        match self {
            CspRelation::Equal => a == b,
            CspRelation::Unequal => a != b,
        }
    }
}
