//! Volume-sampled seed selection.
//!
//! Every selector builds a set of columns from a level's vector solution and
//! picks a few of them with probability proportional to the squared volume they
//! span. Ensembles of lower rank than requested are padded with the longest
//! remaining columns and flagged.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::symmetric_eigen;
use crate::lasserre::{seed_vectors, ConditionedVectors, LabelVectors, Labeling, LevelRelaxation};
use crate::rounding::variance_functionals;
use crate::scalar::{Scalar, Tolerances};
use crate::solver::SeedRule;

/// Relative size below which a Gram eigenvalue counts as zero.
const RANK_TOLERANCE: f64 = 1e-9;

/// Columns identified by ids, kept through their Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnEnsemble<T: Scalar> {
    ids: Vec<usize>,
    gram: DMatrix<T>,
}

impl<T: Scalar> ColumnEnsemble<T> {
    pub fn from_columns(ids: Vec<usize>, columns: &[DVector<T>]) -> Result<Self> {
        if ids.len() != columns.len() {
            return Err(Error::DimensionMismatch { expected: ids.len(), found: columns.len() });
        }
        if let Some(first) = columns.first() {
            if let Some(c) = columns.iter().find(|c| c.len() != first.len()) {
                return Err(Error::DimensionMismatch { expected: first.len(), found: c.len() });
            }
        }
        let m = columns.len();
        let gram = DMatrix::from_fn(m, m, |i, j| columns[i].dot(&columns[j]));
        Ok(ColumnEnsemble { ids, gram })
    }

    /// Ensemble given only by inner products. The matrix must be symmetric
    /// positive semidefinite up to `τ_psd`.
    pub fn from_gram(ids: Vec<usize>, gram: DMatrix<T>, tolerances: &Tolerances) -> Result<Self> {
        let m = ids.len();
        if gram.nrows() != m || gram.ncols() != m {
            return Err(Error::DimensionMismatch { expected: m, found: gram.nrows() });
        }
        let asym = (&gram - gram.transpose()).amax();
        let scale = T::one().max(gram.amax());
        if asym > T::lit(tolerances.psd) * scale {
            return Err(Error::InvalidInput(format!("Gram matrix is not symmetric (gap {asym})")));
        }
        if m > 0 {
            let min = symmetric_eigen(gram.clone())?.eigenvalues.min();
            if min < -T::lit(tolerances.psd) * scale {
                return Err(Error::NotPsd { min_eigenvalue: min.as_f64() });
            }
        }
        Ok(ColumnEnsemble { ids, gram })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    pub fn norm_squared(&self, i: usize) -> T {
        self.gram[(i, i)]
    }

    /// Squared volume spanned by the columns at `positions`.
    pub fn volume_squared(&self, positions: &[usize]) -> T {
        let k = positions.len();
        let minor = DMatrix::from_fn(k, k, |a, b| self.gram[(positions[a], positions[b])]);
        minor.determinant()
    }

    fn gram_f64(&self) -> DMatrix<f64> {
        self.gram.map(|v| v.as_f64())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingMode {
    /// Exact sampling proportional to Gram minors.
    #[default]
    Exact,
    /// Deterministic greedy maximum-volume selection.
    Greedy,
}

/// Chosen column ids, sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeSample {
    pub ids: Vec<usize>,
    /// Set when the ensemble had rank below the request and the longest
    /// remaining columns filled the gap.
    pub padded: bool,
}

/// Picks `k` columns with probability proportional to the determinant of their Gram minor.
pub fn volume_sample<T: Scalar>(cols: &ColumnEnsemble<T>, k: usize, rng: &mut ChaCha8Rng) -> Result<VolumeSample> {
    select_columns(cols, k, SamplingMode::Exact, rng)
}

/// Greedy maximum-volume choice: repeatedly takes the column farthest from
/// the span of those already taken.
pub fn greedy_volume<T: Scalar>(cols: &ColumnEnsemble<T>, k: usize) -> Result<VolumeSample> {
    check_request(cols, k)?;
    let g = cols.gram_f64();
    let m = cols.len();
    let tol = rank_cutoff(&g);
    let mut residual: Vec<f64> = (0..m).map(|i| g[(i, i)]).collect();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < k {
        let best = (0..m)
            .filter(|i| !chosen.contains(i))
            .fold(None, |acc: Option<usize>, i| match acc {
                Some(b) if residual[b] >= residual[i] => Some(b),
                _ => Some(i),
            });
        let Some(i) = best else { break };
        if residual[i] <= tol {
            break;
        }
        // Pivoted Cholesky step on the Gram matrix.
        let mut row = DVector::from_fn(m, |j, _| g[(i, j)]);
        for b in &basis {
            row.axpy(-b[i], b, 1.0);
        }
        let pivot = residual[i].sqrt();
        let col = row / pivot;
        for j in 0..m {
            residual[j] -= col[j] * col[j];
        }
        basis.push(col);
        chosen.push(i);
    }
    Ok(finish(cols, chosen, k))
}

pub fn select_columns<T: Scalar>(
    cols: &ColumnEnsemble<T>,
    k: usize,
    mode: SamplingMode,
    rng: &mut ChaCha8Rng,
) -> Result<VolumeSample> {
    match mode {
        SamplingMode::Greedy => greedy_volume(cols, k),
        SamplingMode::Exact => {
            check_request(cols, k)?;
            let g = cols.gram_f64();
            let chosen = if cols.is_empty() { Vec::new() } else { sample_dpp(&g, k, rng)? };
            Ok(finish(cols, chosen, k))
        }
    }
}

fn check_request<T: Scalar>(cols: &ColumnEnsemble<T>, k: usize) -> Result<()> {
    if k > cols.len() {
        return Err(Error::InvalidInput(format!("cannot choose {k} of {} columns", cols.len())));
    }
    Ok(())
}

fn rank_cutoff(g: &DMatrix<f64>) -> f64 {
    let scale = (0..g.nrows()).map(|i| g[(i, i)]).fold(0.0, f64::max);
    RANK_TOLERANCE * scale.max(1e-300)
}

/// Pads with the longest unchosen columns (lowest position first on ties).
fn finish<T: Scalar>(cols: &ColumnEnsemble<T>, mut chosen: Vec<usize>, k: usize) -> VolumeSample {
    let padded = chosen.len() < k;
    if padded {
        let mut rest: Vec<usize> = (0..cols.len()).filter(|i| !chosen.contains(i)).collect();
        rest.sort_by(|&a, &b| {
            cols.norm_squared(b).partial_cmp(&cols.norm_squared(a)).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        chosen.extend(rest.into_iter().take(k - chosen.len()));
    }
    let mut ids: Vec<usize> = chosen.into_iter().map(|i| cols.ids[i]).collect();
    ids.sort_unstable();
    VolumeSample { ids, padded }
}

pub(crate) fn pick(weights: &[f64], rng: &mut ChaCha8Rng) -> Option<usize> {
    let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = Some(i);
            if u < w {
                return Some(i);
            }
            u -= w;
        }
    }
    last
}

/// Exact `k`-DPP draw for the kernel `g`, reduced to its numerical rank.
fn sample_dpp(g: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let eig = symmetric_eigen(g.clone())?;
    let tol = rank_cutoff(g);
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|&l| if l > tol { l } else { 0.0 }).collect();
    let rank = lam.iter().filter(|l| **l > 0.0).count();
    let k = k.min(rank);
    if k == 0 {
        return Ok(Vec::new());
    }
    let top = lam.iter().fold(0.0f64, |a, &b| a.max(b));
    let lam: Vec<f64> = lam.iter().map(|l| l / top).collect();
    let n = lam.len();

    // e[l][j]: elementary symmetric polynomial of degree l in the first j eigenvalues.
    let mut e = vec![vec![0.0f64; n + 1]; k + 1];
    e[0].iter_mut().for_each(|v| *v = 1.0);
    for l in 1..=k {
        for j in 1..=n {
            e[l][j] = e[l][j - 1] + lam[j - 1] * e[l - 1][j - 1];
        }
    }
    let mut picked = Vec::with_capacity(k);
    let mut l = k;
    for j in (1..=n).rev() {
        if l == 0 {
            break;
        }
        if e[l][j] <= 0.0 {
            continue;
        }
        let p = lam[j - 1] * e[l - 1][j - 1] / e[l][j];
        if rng.random::<f64>() < p {
            picked.push(j - 1);
            l -= 1;
        }
    }

    let mut v: Vec<DVector<f64>> = picked.iter().map(|&j| eig.eigenvectors.column(j).into_owned()).collect();
    let mut chosen = Vec::with_capacity(k);
    while !v.is_empty() {
        let weights: Vec<f64> = (0..n)
            .map(|i| if chosen.contains(&i) { 0.0 } else { v.iter().map(|c| c[i] * c[i]).sum() })
            .collect();
        let Some(i) = pick(&weights, rng) else { break };
        chosen.push(i);
        let (jmax, _) = v.iter().enumerate().fold((0, 0.0f64), |acc, (j, c)| {
            if c[i].abs() > acc.1 {
                (j, c[i].abs())
            } else {
                acc
            }
        });
        let pivot = v.swap_remove(jmax);
        for c in v.iter_mut() {
            let f = c[i] / pivot[i];
            c.axpy(-f, &pivot, 1.0);
        }
        // Re-orthonormalize what is left.
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(v.len());
        for c in v.drain(..) {
            let mut r = c;
            for _ in 0..2 {
                for b in &basis {
                    let d = b.dot(&r);
                    r.axpy(-d, b, 1.0);
                }
            }
            let norm = r.norm();
            if norm > 1e-12 {
                basis.push(r / norm);
            }
        }
        v = basis;
    }
    Ok(chosen)
}

/// Variables added by a seed selector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedChoice {
    pub vars: Vec<usize>,
    pub padded: bool,
}

fn level_vectors<T: Scalar>(level: &LevelRelaxation<T>, y: &DVector<T>, tol: &Tolerances) -> Result<(Vec<usize>, LabelVectors<T>)> {
    let seed = level
        .seed()
        .seed_vars()
        .ok_or_else(|| Error::InvalidInput("seed selection needs a variable seed family".into()))?
        .to_vec();
    let moments = level.moments(y)?;
    let x = seed_vectors(&moments, &seed, tol)?;
    Ok((seed, x))
}

fn sample_vars<T: Scalar>(
    cols: &ColumnEnsemble<T>,
    size: usize,
    mode: SamplingMode,
    rng: &mut ChaCha8Rng,
) -> Result<SeedChoice> {
    let s = select_columns(cols, size.min(cols.len()), mode, rng)?;
    Ok(SeedChoice { vars: s.ids, padded: s.padded || size > cols.len() })
}

/// Partitioning seeds: columns are the label-1 vectors with their component in
/// the span of the current seed events removed.
pub fn seed_qip<T: Scalar>(
    level: &LevelRelaxation<T>,
    y: &DVector<T>,
    size: usize,
    mode: SamplingMode,
    rng: &mut ChaCha8Rng,
) -> Result<SeedChoice> {
    let tol = Tolerances::default();
    let (seed, x) = level_vectors(level, y, &tol)?;
    let space = level.space();
    let proj = x.conditional_projection(&Labeling::empty(), &seed)?;
    let ids: Vec<usize> = (0..space.vars()).filter(|u| !seed.contains(u)).collect();
    let columns = ids
        .iter()
        .map(|&u| proj.apply_perp(&x.label_vector(&Labeling::single(u, 1))?))
        .collect::<Result<Vec<_>>>()?;
    let cols = ColumnEnsemble::from_columns(ids, &columns)?;
    sample_vars(&cols, size, mode, rng)
}

/// `Σ_i e_i ⊗ x^⊥_{∅|f} x_{u|f}(i)`: the per-label centered vectors stacked.
pub fn color_embedding<T: Scalar>(c: &ConditionedVectors<'_, T>, u: usize) -> Result<DVector<T>> {
    let k = c.base().space().labels();
    let d = c.base().ambient_dim();
    let mut out = DVector::zeros(k * d);
    for i in 0..k {
        let v = c.perp(&c.vector(&Labeling::single(u, i))?);
        out.rows_mut(i * d, d).copy_from(&v);
    }
    Ok(out)
}

/// Coloring seeds sampled from the stacked centered label vectors.
pub fn seed_color<T: Scalar>(
    level: &LevelRelaxation<T>,
    y: &DVector<T>,
    size: usize,
    mode: SamplingMode,
    rng: &mut ChaCha8Rng,
) -> Result<SeedChoice> {
    let tol = Tolerances::default();
    let (seed, x) = level_vectors(level, y, &tol)?;
    let c = x.condition(&Labeling::empty())?;
    let ids: Vec<usize> = (0..level.space().vars()).filter(|u| !seed.contains(u)).collect();
    let columns = ids.iter().map(|&u| color_embedding(&c, u)).collect::<Result<Vec<_>>>()?;
    let cols = ColumnEnsemble::from_columns(ids, &columns)?;
    sample_vars(&cols, size, mode, rng)
}

/// A weighted pair of variables.
pub type Demand = (usize, usize, f64);

/// Sparsest-cut seeds: sample pairs by the weighted differences `√w (x_u − x_v)`
/// and return their endpoints.
pub fn seed_sparsest_cut<T: Scalar>(
    level: &LevelRelaxation<T>,
    y: &DVector<T>,
    demand: &[Demand],
    size: usize,
    mode: SamplingMode,
    rng: &mut ChaCha8Rng,
) -> Result<SeedChoice> {
    let pairs: Vec<(usize, &Demand)> = demand.iter().enumerate().filter(|(_, d)| d.2 > 0.0).collect();
    if pairs.is_empty() {
        return Err(Error::NoDemand);
    }
    let tol = Tolerances::default();
    let (_, x) = level_vectors(level, y, &tol)?;
    let columns = pairs
        .iter()
        .map(|(_, &(u, v, w))| {
            let xu = x.label_vector(&Labeling::single(u, 1))?;
            let xv = x.label_vector(&Labeling::single(v, 1))?;
            Ok((xu - xv) * T::lit(w.sqrt()))
        })
        .collect::<Result<Vec<_>>>()?;
    let cols = ColumnEnsemble::from_columns(pairs.iter().map(|(i, _)| *i).collect(), &columns)?;
    let s = select_columns(&cols, size.min(cols.len()), mode, rng)?;
    let mut vars: Vec<usize> = s.ids.iter().flat_map(|&i| [demand[i].0, demand[i].1]).collect();
    vars.sort_unstable();
    vars.dedup();
    Ok(SeedChoice { vars, padded: s.padded || size > cols.len() })
}

/// [`seed_qip`] as a solver seed rule adding `size` variables per level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QipSeeds {
    pub size: usize,
    pub mode: SamplingMode,
}

impl<T: Scalar> SeedRule<T> for QipSeeds {
    fn select(&self, level: &LevelRelaxation<T>, y: &DVector<T>, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        Ok(seed_qip(level, y, self.size, self.mode, rng)?.vars)
    }

    fn growth(&self) -> usize {
        self.size
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorSeeds {
    pub size: usize,
    pub mode: SamplingMode,
}

impl<T: Scalar> SeedRule<T> for ColorSeeds {
    fn select(&self, level: &LevelRelaxation<T>, y: &DVector<T>, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        Ok(seed_color(level, y, self.size, self.mode, rng)?.vars)
    }

    fn growth(&self) -> usize {
        self.size
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsestCutSeeds {
    pub demand: Vec<Demand>,
    pub size: usize,
    pub mode: SamplingMode,
}

impl<T: Scalar> SeedRule<T> for SparsestCutSeeds {
    fn select(&self, level: &LevelRelaxation<T>, y: &DVector<T>, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        Ok(seed_sparsest_cut(level, y, &self.demand, self.size, self.mode, rng)?.vars)
    }

    fn growth(&self) -> usize {
        2 * self.size
    }
}

/// Centered conditional label vectors `x^⊥_{∅|f} x_{u|f}(j)` of `u` with nonzero norm.
fn centered<T: Scalar>(c: &ConditionedVectors<'_, T>, u: usize) -> Result<Vec<DVector<T>>> {
    let k = c.base().space().labels();
    let tol = T::lit(c.base().tolerances().zero);
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let w = c.perp(&c.vector(&Labeling::single(u, j))?);
        if w.norm() > tol {
            out.push(w);
        }
    }
    Ok(out)
}

/// The 2-CSP embedding `X_u(f) = k^{-1/2} Σ_j w_j ⊗ w_j / ‖w_j‖` with
/// `w_j = x^⊥_{∅|f} x_{u|f}(j)`, kept as its Gram matrix
/// `⟨X_u, X_v⟩ = k⁻¹ Σ_{ij} ⟨w_i, w′_j⟩² / (‖w_i‖ ‖w′_j‖)`.
pub fn csp_embedding<T: Scalar>(c: &ConditionedVectors<'_, T>, vars: &[usize]) -> Result<ColumnEnsemble<T>> {
    let k = T::from_usize(c.base().space().labels()).expect("label count fits scalar");
    let parts = vars.iter().map(|&u| centered(c, u)).collect::<Result<Vec<_>>>()?;
    let m = vars.len();
    let mut gram = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let mut s = T::zero();
            for wi in &parts[a] {
                for wj in &parts[b] {
                    let d = wi.dot(wj);
                    s += d * d / (wi.norm() * wj.norm());
                }
            }
            gram[(a, b)] = s / k;
            gram[(b, a)] = s / k;
        }
    }
    ColumnEnsemble::from_gram(vars.to_vec(), gram, c.base().tolerances())
}

/// Stage cap `⌈C k² / ε²⌉`.
pub fn stage_cap(labels: usize, eps: f64, constant: f64) -> usize {
    (constant * (labels * labels) as f64 / (eps * eps)).ceil() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CspStageOptions {
    /// Columns sampled per stage.
    pub seed_size: usize,
    /// Target `ε`: stop once `ε_f ≤ ε`.
    pub eps: f64,
    /// Constant `C` of the stage cap.
    pub cap_constant: f64,
    pub mode: SamplingMode,
    /// Enumerate all labelings of a stage's seeds up to this many.
    pub enumerate_limit: usize,
    /// Draws taken instead when enumeration is too large.
    pub samples: usize,
    /// Variables seeds may come from; all of them when `None`.
    #[serde(default)]
    pub candidates: Option<Vec<usize>>,
}

impl CspStageOptions {
    pub fn new(seed_size: usize, eps: f64) -> Self {
        CspStageOptions {
            seed_size,
            eps,
            cap_constant: 8.0,
            mode: SamplingMode::Exact,
            enumerate_limit: 1_000_000,
            samples: 1000,
            candidates: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seeds: Vec<usize>,
    pub committed: Labeling,
    /// `δ` before and after the stage.
    pub delta_before: f64,
    pub delta_after: f64,
    pub eps_before: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedStageState {
    pub assignment: Labeling,
    pub eps_f: f64,
    pub delta_f: f64,
    pub stage: usize,
    pub cap: usize,
    pub history: Vec<StageRecord>,
}

impl SeedStageState {
    pub fn start(labels: usize, options: &CspStageOptions) -> Self {
        SeedStageState {
            assignment: Labeling::empty(),
            eps_f: f64::INFINITY,
            delta_f: f64::INFINITY,
            stage: 0,
            cap: stage_cap(labels, options.eps, options.cap_constant),
            history: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StageStep {
    Continue(SeedStageState),
    Done(SeedStageState),
}

/// One stage of the 2-CSP seeding loop on constraint graph `edges`.
///
/// Returns `Done` once `ε_f ≤ ε` or no candidate variable is left. Otherwise samples seeds from the embedding,
/// and commits the first labeling `g` of them whose `δ_{f∘g}` is at most the
/// average over `g`.
pub fn csp_stage<T: Scalar>(
    state: SeedStageState,
    x: &LabelVectors<T>,
    edges: &[Demand],
    options: &CspStageOptions,
    rng: &mut ChaCha8Rng,
) -> Result<StageStep> {
    let c = x.condition(&state.assignment)?;
    let (eps_f, delta_f) = variance_functionals(&c, edges)?;
    let (eps_f, delta_f) = (eps_f.as_f64(), delta_f.as_f64());
    let mut state = SeedStageState { eps_f, delta_f, ..state };
    if eps_f <= options.eps {
        return Ok(StageStep::Done(state));
    }
    if state.stage >= state.cap {
        return Err(Error::StageCapExceeded { cap: state.cap, eps_f, target: options.eps });
    }
    let space = x.space();
    let k = space.labels();
    let fixed: Vec<usize> = state.assignment.vars().collect();
    let candidates: Vec<usize> = match &options.candidates {
        Some(c) => c.iter().copied().filter(|u| !fixed.contains(u)).collect(),
        None => (0..space.vars()).filter(|u| !fixed.contains(u)).collect(),
    };
    if candidates.is_empty() {
        return Ok(StageStep::Done(state));
    }
    let cols = csp_embedding(&c, &candidates)?;
    let seeds = select_columns(&cols, options.seed_size.min(cols.len()), options.mode, rng)?.ids;

    let delta_of = |g: &Labeling| -> Result<Option<(f64, f64)>> {
        let p = c.vector(g)?.norm_squared().as_f64();
        let Some(fg) = state.assignment.compose(g) else { return Ok(None) };
        match x.condition(&fg) {
            Ok(cg) => Ok(Some((p, variance_functionals(&cg, edges)?.1.as_f64()))),
            Err(Error::ZeroConditioning { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let count = (k as f64).powi(seeds.len() as i32);
    let chosen = if count <= options.enumerate_limit as f64 {
        let scored: Vec<(Labeling, f64, f64)> = Labeling::all(&seeds, k)
            .into_iter()
            .filter_map(|g| delta_of(&g).transpose().map(|r| r.map(|(p, d)| (g, p, d))))
            .collect::<Result<Vec<_>>>()?;
        let mass: f64 = scored.iter().map(|s| s.1).sum();
        let average = scored.iter().map(|s| s.1 * s.2).sum::<f64>() / mass;
        scored.into_iter().find(|s| s.2 <= average + 1e-12).map(|s| (s.0, s.2))
    } else {
        let mut best: Option<(Labeling, f64)> = None;
        for _ in 0..options.samples {
            let g = sample_labeling(&c, &seeds, rng)?;
            if let Some((_, d)) = delta_of(&g)? {
                if best.as_ref().is_none_or(|b| d < b.1) {
                    best = Some((g, d));
                }
            }
        }
        best
    };
    let (g, delta_after) =
        chosen.ok_or_else(|| Error::InvalidInput("no labeling of the stage seeds has positive probability".into()))?;
    let committed = state.assignment.compose(&g).expect("seeds avoid fixed variables");
    state.history.push(StageRecord { seeds, committed: g, delta_before: delta_f, delta_after, eps_before: eps_f });
    state.assignment = committed;
    state.stage += 1;
    Ok(StageStep::Continue(state))
}

/// Draws `g` on `vars` from the conditional distribution one variable at a time.
fn sample_labeling<T: Scalar>(c: &ConditionedVectors<'_, T>, vars: &[usize], rng: &mut ChaCha8Rng) -> Result<Labeling> {
    let k = c.base().space().labels();
    let mut g = Labeling::empty();
    for &u in vars {
        let weights = (0..k)
            .map(|i| {
                let h = g.compose(&Labeling::single(u, i)).expect("fresh variable");
                Ok(c.vector(&h)?.norm_squared().as_f64().max(0.0))
            })
            .collect::<Result<Vec<f64>>>()?;
        let i = pick(&weights, rng).unwrap_or(0);
        g = g.compose(&Labeling::single(u, i)).expect("fresh variable");
    }
    Ok(g)
}

/// Runs [`csp_stage`] until it reports `Done`.
pub fn run_csp_stages<T: Scalar>(
    x: &LabelVectors<T>,
    edges: &[Demand],
    options: &CspStageOptions,
    rng: &mut ChaCha8Rng,
) -> Result<SeedStageState> {
    let mut state = SeedStageState::start(x.space().labels(), options);
    loop {
        match csp_stage(state, x, edges, options, rng)? {
            StageStep::Done(s) => return Ok(s),
            StageStep::Continue(s) => state = s,
        }
    }
}
