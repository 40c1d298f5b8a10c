use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{symmetric_eigen, LinearEqualities};
use crate::lasserre::index::{extend_index_family, AtomSpace, SubsetIndex};
use crate::lasserre::moments::{moment_matrix, PseudoMoments};
use crate::lasserre::polynomial::{shift_at, ConstraintKind, Polynomial, PolynomialConstraint};
use crate::lasserre::program::{PolynomialProgram, Sense};
use crate::oracle::{SeparationOracle, SeparationResponse};
use crate::scalar::{Scalar, Tolerances};

/// Relative residual above which an equality counts as violated.
const EQUALITY_TOL: f64 = 1e-7;

/// A seed family: the index sets a level's blocks are built around.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeedFamily {
    /// Every consistent atom set over these variables.
    Vars(Vec<usize>),
    /// Every consistent atom set with at most this many atoms.
    Bounded(usize),
}

impl SeedFamily {
    /// `{∅}`.
    pub fn root() -> Self {
        SeedFamily::Vars(Vec::new())
    }

    pub fn vars(vars: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = vars.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        SeedFamily::Vars(v)
    }

    pub fn seed_vars(&self) -> Option<&[usize]> {
        match self {
            SeedFamily::Vars(v) => Some(v),
            SeedFamily::Bounded(_) => None,
        }
    }

    pub fn sets(&self, space: &AtomSpace) -> Vec<SubsetIndex> {
        match self {
            SeedFamily::Vars(v) => space.subsets_within(space.atoms_of_vars(v), v.len()),
            SeedFamily::Bounded(m) => space.all_subsets(*m),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockId {
    Moment,
    Constraint(usize),
    Objective,
}

/// One diagonal block of the relaxation evaluated at a moment vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T: Scalar> {
    pub id: BlockId,
    pub index: Vec<SubsetIndex>,
    pub matrix: DMatrix<T>,
}

/// `[(P ∗ y)_{A∪B}]_{A,B ∈ family}`.
pub fn localizing_matrix<T: Scalar>(
    p: &Polynomial<T>,
    y: &PseudoMoments<T>,
    family: &[SubsetIndex],
) -> Result<DMatrix<T>> {
    let n = family.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = shift_at(p, y, family[i] | family[j])?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Blocks of the local relaxation on one index family.
///
/// The base moment block comes first, then one localizing block per
/// nonnegativity constraint, then the scalar `q − ⟨Q, y⟩` when an objective is
/// given. Equality constraints are linear in `y` and produce no block.
pub fn local_block_matrix<T: Scalar>(
    y: &PseudoMoments<T>,
    family: &[SubsetIndex],
    constraints: &[PolynomialConstraint<T>],
    objective: Option<(&Polynomial<T>, T)>,
) -> Result<Vec<Block<T>>> {
    let mut blocks = vec![Block { id: BlockId::Moment, index: family.to_vec(), matrix: moment_matrix(y, family)? }];
    for (i, c) in constraints.iter().enumerate() {
        if c.kind == ConstraintKind::NonNegative {
            blocks.push(Block {
                id: BlockId::Constraint(i),
                index: family.to_vec(),
                matrix: localizing_matrix(&c.poly, y, family)?,
            });
        }
    }
    if let Some((q_poly, q)) = objective {
        let v = q - q_poly.pair(y)?;
        blocks.push(Block { id: BlockId::Objective, index: vec![SubsetIndex::EMPTY], matrix: DMatrix::from_element(1, 1, v) });
    }
    Ok(blocks)
}

/// The relaxation of a polynomial program, optionally with an objective bound.
///
/// With a bound `q`, the objective becomes the constraint `value ≤ q` when
/// minimizing and `value ≥ q` when maximizing. A positive objective slack `s`
/// loosens it to `value ≤ q + s` or `value ≥ q − s`, which gives the optimal
/// face some volume.
#[derive(Clone, Debug)]
pub struct Relaxation<T: Scalar> {
    program: PolynomialProgram<T>,
    bound: Option<T>,
    objective_slack: T,
    degree: usize,
    tolerances: Tolerances,
}

impl<T: Scalar> Relaxation<T> {
    pub fn new(program: PolynomialProgram<T>, bound: Option<T>) -> Result<Self> {
        let degree = program.degree().max(2);
        for c in &program.constraints {
            if c.poly.is_zero() {
                return Err(Error::InvalidInput("constraint polynomial is identically zero".into()));
            }
        }
        Ok(Relaxation { program, bound, objective_slack: T::zero(), degree, tolerances: Tolerances::default() })
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn with_bound(&self, bound: Option<T>) -> Self {
        Relaxation { bound, ..self.clone() }
    }

    pub fn with_objective_slack(mut self, slack: T) -> Self {
        self.objective_slack = slack;
        self
    }

    pub fn objective_slack(&self) -> T {
        self.objective_slack
    }

    pub fn program(&self) -> &PolynomialProgram<T> {
        &self.program
    }

    pub fn space(&self) -> &AtomSpace {
        &self.program.space
    }

    pub fn bound(&self) -> Option<T> {
        self.bound
    }

    /// Degree `D` of the coordinate closure `ex(S, D)`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tolerances
    }

    /// Free moment coordinates of a level: `ex(S, D) \ {∅}`, sorted.
    pub fn coordinates(&self, seed: &SeedFamily) -> Vec<SubsetIndex> {
        let sets = seed.sets(self.space());
        let mut out = extend_index_family(self.space(), &sets, self.degree);
        out.retain(|s| !s.is_empty());
        out
    }

    /// `{A ∪ C : A ∈ S, |C| ≤ width}` restricted to consistent sets.
    pub fn block_family(&self, seed: &SeedFamily, width: usize) -> Vec<SubsetIndex> {
        let space = self.space();
        let small = space.all_subsets(width);
        let mut out: Vec<SubsetIndex> = seed
            .sets(space)
            .into_iter()
            .flat_map(|a| small.iter().map(move |c| a | *c))
            .filter(|s| space.admissible(*s))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Objective in minimization form `(Q, q)` meaning `⟨Q, y⟩ ≤ q`.
    pub fn objective_bound(&self) -> Option<(Polynomial<T>, T)> {
        let q = self.bound?;
        let s = self.objective_slack;
        Some(match self.program.sense {
            Sense::Minimize => (self.program.objective.clone(), q + s),
            Sense::Maximize => (self.program.objective.scale(-T::one()), s - q),
        })
    }

    /// Precomputes the blocks and equalities of the level with seed family `seed`.
    pub fn level(&self, seed: &SeedFamily) -> Result<LevelRelaxation<T>> {
        LevelRelaxation::build(self, seed.clone())
    }
}

const CONSTANT: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Entry {
    row: u32,
    col: u32,
    start: u32,
    end: u32,
}

/// A symmetric matrix whose entries are affine in the coordinates.
#[derive(Clone, Debug)]
struct AffineBlock<T: Scalar> {
    id: BlockId,
    index: Vec<SubsetIndex>,
    entries: Vec<Entry>,
    terms: Vec<(u32, T)>,
}

impl<T: Scalar> AffineBlock<T> {
    fn localizing(
        id: BlockId,
        index: Vec<SubsetIndex>,
        poly: &Polynomial<T>,
        space: &AtomSpace,
        lookup: &HashMap<SubsetIndex, usize>,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        let mut terms = Vec::new();
        for i in 0..index.len() {
            for j in i..index.len() {
                let u = index[i] | index[j];
                if !space.admissible(u) {
                    continue;
                }
                let start = terms.len() as u32;
                for (t, c) in poly.terms() {
                    let v = t | u;
                    if !space.admissible(v) {
                        continue;
                    }
                    let slot = if v.is_empty() {
                        CONSTANT
                    } else {
                        *lookup.get(&v).ok_or_else(|| Error::MissingMoment(v.to_string()))? as u32
                    };
                    terms.push((slot, c));
                }
                let end = terms.len() as u32;
                if end > start {
                    entries.push(Entry { row: i as u32, col: j as u32, start, end });
                }
            }
        }
        Ok(AffineBlock { id, index, entries, terms })
    }

    fn scalar(id: BlockId, constant: T, linear: Vec<(usize, T)>) -> Self {
        let mut terms = vec![(CONSTANT, constant)];
        terms.extend(linear.into_iter().map(|(i, c)| (i as u32, c)));
        let end = terms.len() as u32;
        AffineBlock { id, index: vec![SubsetIndex::EMPTY], entries: vec![Entry { row: 0, col: 0, start: 0, end }], terms }
    }

    fn size(&self) -> usize {
        self.index.len()
    }

    fn matrix(&self, y: &DVector<T>) -> DMatrix<T> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        for e in &self.entries {
            let mut v = T::zero();
            for &(slot, c) in &self.terms[e.start as usize..e.end as usize] {
                v += if slot == CONSTANT { c } else { c * y[slot as usize] };
            }
            m[(e.row as usize, e.col as usize)] = v;
            m[(e.col as usize, e.row as usize)] = v;
        }
        m
    }

    /// Adds to `out` the coordinate coefficients of `−xᵀM(y)x`.
    fn accumulate_cut(&self, x: &DVector<T>, out: &mut DVector<T>) {
        let two = T::lit(2.0);
        for e in &self.entries {
            let (r, c) = (e.row as usize, e.col as usize);
            let w = if r == c { x[r] * x[r] } else { two * x[r] * x[c] };
            for &(slot, coef) in &self.terms[e.start as usize..e.end as usize] {
                if slot != CONSTANT {
                    out[slot as usize] -= coef * w;
                }
            }
        }
    }
}

/// Smallest eigenvalue of one block at a query point.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport<T: Scalar> {
    pub id: BlockId,
    pub size: usize,
    pub min_eigenvalue: T,
}

/// Constraint residuals of a query point.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelReport<T: Scalar> {
    pub blocks: Vec<BlockReport<T>>,
    /// Largest distance outside `[0, 1]` over the coordinates.
    pub box_violation: T,
    /// Largest relative equality residual.
    pub equality_residual: T,
}

impl<T: Scalar> LevelReport<T> {
    pub fn min_eigenvalue(&self) -> T {
        self.blocks.iter().map(|b| b.min_eigenvalue).fold(T::max_value().unwrap_or(T::one()), |a, b| a.min(b))
    }

    pub fn feasible(&self, tol: &Tolerances) -> bool {
        self.min_eigenvalue().as_f64() >= -tol.psd
            && self.box_violation.as_f64() <= tol.psd
            && self.equality_residual.as_f64() <= EQUALITY_TOL
    }
}

/// A level of the relaxation with its blocks precomputed over a coordinate list.
#[derive(Clone, Debug)]
pub struct LevelRelaxation<T: Scalar> {
    seed: SeedFamily,
    space: AtomSpace,
    coords: Vec<SubsetIndex>,
    lookup: HashMap<SubsetIndex, usize>,
    blocks: Vec<AffineBlock<T>>,
    equalities: LinearEqualities<T>,
    equality_norms: Vec<T>,
    tolerances: Tolerances,
}

impl<T: Scalar> LevelRelaxation<T> {
    fn build(relax: &Relaxation<T>, seed: SeedFamily) -> Result<Self> {
        let space = relax.space().clone();
        let coords = relax.coordinates(&seed);
        let lookup: HashMap<SubsetIndex, usize> = coords.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let d = relax.degree();
        let one = Polynomial::constant(T::one());

        let mut blocks = vec![AffineBlock::localizing(
            BlockId::Moment,
            relax.block_family(&seed, d / 2),
            &one,
            &space,
            &lookup,
        )?];
        let mut eq_rows: Vec<Vec<T>> = Vec::new();
        let mut eq_rhs: Vec<T> = Vec::new();
        for (i, c) in relax.program.constraints.iter().enumerate() {
            match c.kind {
                ConstraintKind::NonNegative => {
                    let width = (d - c.poly.degree()) / 2;
                    blocks.push(AffineBlock::localizing(
                        BlockId::Constraint(i),
                        relax.block_family(&seed, width),
                        &c.poly,
                        &space,
                        &lookup,
                    )?);
                }
                ConstraintKind::Zero => {
                    for u in std::iter::once(SubsetIndex::EMPTY).chain(coords.iter().copied()) {
                        let Some((row, constant)) = shifted_row(&c.poly, u, &space, &lookup, coords.len()) else {
                            continue;
                        };
                        if row.iter().all(|v| *v == T::zero()) {
                            if constant.abs() > T::lit(EQUALITY_TOL) {
                                return Err(Error::InvalidInput(format!(
                                    "equality constraint {i} cannot hold: it forces {constant} = 0"
                                )));
                            }
                            continue;
                        }
                        eq_rows.push(row);
                        eq_rhs.push(-constant);
                    }
                }
            }
        }
        if let Some((q_poly, q)) = relax.objective_bound() {
            let mut linear = Vec::new();
            for (s, c) in q_poly.terms() {
                if s.is_empty() || !space.admissible(s) {
                    continue;
                }
                let slot = *lookup.get(&s).ok_or_else(|| Error::MissingMoment(s.to_string()))?;
                linear.push((slot, -c));
            }
            blocks.push(AffineBlock::scalar(BlockId::Objective, q - q_poly.coefficient(SubsetIndex::EMPTY), linear));
        }

        let n = coords.len();
        let equalities = if eq_rows.is_empty() {
            LinearEqualities::none(n)
        } else {
            let matrix = DMatrix::from_fn(eq_rows.len(), n, |i, j| eq_rows[i][j]);
            LinearEqualities::new(matrix, DVector::from_vec(eq_rhs))?
        };
        let equality_norms = (0..equalities.matrix.nrows()).map(|i| equalities.matrix.row(i).norm()).collect();
        Ok(LevelRelaxation {
            seed,
            space,
            coords,
            lookup,
            blocks,
            equalities,
            equality_norms,
            tolerances: relax.tolerances.clone(),
        })
    }

    pub fn seed(&self) -> &SeedFamily {
        &self.seed
    }

    pub fn space(&self) -> &AtomSpace {
        &self.space
    }

    pub fn coordinates(&self) -> &[SubsetIndex] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn position(&self, s: SubsetIndex) -> Option<usize> {
        self.lookup.get(&s).copied()
    }

    /// Affine hull `{Ey = e}` forced by the equality constraints.
    pub fn equalities(&self) -> &LinearEqualities<T> {
        &self.equalities
    }

    /// Index families of the blocks, base block first.
    pub fn block_families(&self) -> Vec<(BlockId, &[SubsetIndex])> {
        self.blocks.iter().map(|b| (b.id, b.index.as_slice())).collect()
    }

    pub fn moments(&self, y: &DVector<T>) -> Result<PseudoMoments<T>> {
        PseudoMoments::from_vector(self.space.clone(), &self.coords, y)
    }

    pub fn blocks(&self, y: &DVector<T>) -> Result<Vec<Block<T>>> {
        self.check_dim(y)?;
        Ok(self.blocks.iter().map(|b| Block { id: b.id, index: b.index.clone(), matrix: b.matrix(y) }).collect())
    }

    fn check_dim(&self, y: &DVector<T>) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: y.len() });
        }
        Ok(())
    }

    /// Eigenvalue and residual summary of `y`.
    pub fn report(&self, y: &DVector<T>) -> Result<LevelReport<T>> {
        self.check_dim(y)?;
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let eig = symmetric_eigen(b.matrix(y))?;
                Ok(BlockReport { id: b.id, size: b.size(), min_eigenvalue: eig.eigenvalues.min() })
            })
            .collect::<Result<Vec<_>>>()?;
        let box_violation = y.iter().fold(T::zero(), |acc, v| acc.max(-*v).max(*v - T::one()));
        let res = self.equalities.residual(y);
        let equality_residual = res
            .iter()
            .zip(&self.equality_norms)
            .fold(T::zero(), |acc, (r, n)| acc.max(r.abs() / *n));
        Ok(LevelReport { blocks, box_violation, equality_residual })
    }

    pub fn is_feasible(&self, y: &DVector<T>) -> Result<bool> {
        Ok(self.report(y)?.feasible(&self.tolerances))
    }

    /// Membership test with a cut from the most negative eigenvector of the worst block.
    pub fn separate(&self, y: &DVector<T>, slack: T) -> Result<SeparationResponse<T>> {
        self.check_dim(y)?;
        let n = self.dim();
        let box_tol = T::lit(self.tolerances.psd) + slack;
        let mut worst_box: Option<(usize, bool, T)> = None;
        for (i, v) in y.iter().enumerate() {
            let (amount, upper) = if *v > T::one() { (*v - T::one(), true) } else { (-*v, false) };
            if amount > box_tol && worst_box.is_none_or(|(_, _, w)| amount > w) {
                worst_box = Some((i, upper, amount));
            }
        }
        if let Some((i, upper, _)) = worst_box {
            let mut c = DVector::zeros(n);
            c[i] = if upper { T::one() } else { -T::one() };
            return Ok(SeparationResponse::Cut { normal: c, slack: T::zero() });
        }

        if !self.equalities.is_empty() {
            let res = self.equalities.residual(y);
            let mut worst: Option<(usize, T)> = None;
            for (i, r) in res.iter().enumerate() {
                let rel = r.abs() / self.equality_norms[i];
                if rel > T::lit(EQUALITY_TOL) + slack && worst.is_none_or(|(_, w)| rel > w) {
                    worst = Some((i, rel));
                }
            }
            if let Some((i, _)) = worst {
                let row = self.equalities.matrix.row(i).transpose();
                let dir = if res[i] > T::zero() { row } else { -row };
                return Ok(SeparationResponse::cut(dir, T::zero()).expect("equality rows are nonzero"));
            }
        }

        let tau = T::lit(self.tolerances.psd);
        let mut worst: Option<(usize, T, DVector<T>)> = None;
        for (k, b) in self.blocks.iter().enumerate() {
            let m = b.matrix(y);
            let shifted = &m + DMatrix::identity(m.nrows(), m.ncols()) * tau;
            if shifted.cholesky().is_some() {
                continue;
            }
            let eig = symmetric_eigen(m)?;
            let (j, lambda) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .fold((0, eig.eigenvalues[0]), |acc, (j, v)| if *v < acc.1 { (j, *v) } else { acc });
            if lambda < -tau && worst.as_ref().is_none_or(|w| lambda < w.1) {
                worst = Some((k, lambda, eig.eigenvectors.column(j).into_owned()));
            }
        }
        let Some((k, _, x)) = worst else {
            return Ok(SeparationResponse::Feasible);
        };
        let mut c = DVector::zeros(n);
        self.blocks[k].accumulate_cut(&x, &mut c);
        Ok(match SeparationResponse::cut(c, T::zero()) {
            Some(cut) => cut,
            // The violated form does not depend on y at all: no point is feasible,
            // so every halfspace is a valid cut.
            None => {
                let mut e = DVector::zeros(n);
                if n > 0 {
                    e[0] = T::one();
                }
                SeparationResponse::Cut { normal: e, slack: T::zero() }
            }
        })
    }
}

impl<T: Scalar> SeparationOracle<T> for LevelRelaxation<T> {
    fn dim(&self) -> usize {
        self.coords.len()
    }

    fn separate(&mut self, y: &DVector<T>, slack: T) -> Result<SeparationResponse<T>> {
        LevelRelaxation::separate(self, y, slack)
    }
}

/// Row of `(P ∗ y)_U` over the coordinates with its constant part, when every
/// moment it needs is a coordinate.
fn shifted_row<T: Scalar>(
    p: &Polynomial<T>,
    u: SubsetIndex,
    space: &AtomSpace,
    lookup: &HashMap<SubsetIndex, usize>,
    n: usize,
) -> Option<(Vec<T>, T)> {
    let mut row = vec![T::zero(); n];
    let mut constant = T::zero();
    for (t, c) in p.terms() {
        let v = t | u;
        if !space.admissible(v) {
            continue;
        }
        if v.is_empty() {
            constant += c;
        } else {
            row[*lookup.get(&v)?] += c;
        }
    }
    Some((row, constant))
}
