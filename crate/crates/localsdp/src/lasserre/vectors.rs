use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{symmetric_eigen, OrthoProjection};
use crate::lasserre::index::{AtomSpace, Labeling, SubsetIndex};
use crate::lasserre::moments::{moment_matrix, PseudoMoments};
use crate::scalar::{Scalar, Tolerances};

/// Vectors `x_A` whose Gram matrix reproduces the moments, `⟨x_A, x_B⟩ = y_{A∪B}`.
#[derive(Clone, Debug)]
pub struct LabelVectors<T: Scalar> {
    space: AtomSpace,
    index: Vec<SubsetIndex>,
    lookup: HashMap<SubsetIndex, usize>,
    /// Column `j` is the vector of `index[j]`.
    vectors: DMatrix<T>,
    tolerances: Tolerances,
}

/// Factors the moment matrix on `family` (which must contain `∅`).
///
/// Eigenvalues in `[−τ_psd, τ_psd]` are clipped to zero, so events of zero
/// probability get exactly vanishing vectors; anything more negative is refused.
pub fn cholesky_vectors<T: Scalar>(
    y: &PseudoMoments<T>,
    family: &[SubsetIndex],
    tolerances: &Tolerances,
) -> Result<LabelVectors<T>> {
    let mut index = family.to_vec();
    index.sort_unstable();
    index.dedup();
    if index.first() != Some(&SubsetIndex::EMPTY) {
        return Err(Error::InvalidInput("vector family must contain the empty set".into()));
    }
    let m = moment_matrix(y, &index)?;
    let eig = symmetric_eigen(m)?;
    let min = eig.eigenvalues.min();
    if min.as_f64() < -tolerances.psd {
        return Err(Error::NotPsd { min_eigenvalue: min.as_f64() });
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i].as_f64() > tolerances.psd).collect();
    let n = index.len();
    let mut vectors = DMatrix::zeros(keep.len().max(1), n);
    for (r, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        for j in 0..n {
            vectors[(r, j)] = eig.eigenvectors[(j, i)] * s;
        }
    }
    let lookup = index.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    Ok(LabelVectors { space: y.space().clone(), index, lookup, vectors, tolerances: tolerances.clone() })
}

/// Vectors for the family a local rounding reads: every consistent atom set
/// over `seed_vars`, alone and with one more atom of any other variable.
pub fn seed_vectors<T: Scalar>(
    y: &PseudoMoments<T>,
    seed_vars: &[usize],
    tolerances: &Tolerances,
) -> Result<LabelVectors<T>> {
    let space = y.space();
    let base = space.subsets_within(space.atoms_of_vars(seed_vars), seed_vars.len());
    let mut family = base.clone();
    for a in space.all_atoms().difference(space.atoms_of_vars(seed_vars)).members() {
        family.extend(base.iter().map(|s| s.with(a)).filter(|s| space.admissible(*s)));
    }
    cholesky_vectors(y, &family, tolerances)
}

impl<T: Scalar> LabelVectors<T> {
    pub fn space(&self) -> &AtomSpace {
        &self.space
    }

    pub fn index(&self) -> &[SubsetIndex] {
        &self.index
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tolerances
    }

    /// `x_A`; the zero vector when the atoms of `A` cannot hold together.
    pub fn vector(&self, s: SubsetIndex) -> Result<DVector<T>> {
        if !self.space.admissible(s) {
            return Ok(DVector::zeros(self.ambient_dim()));
        }
        let j = *self.lookup.get(&s).ok_or_else(|| Error::MissingMoment(s.to_string()))?;
        Ok(self.vectors.column(j).into_owned())
    }

    /// Largest `|⟨x_A, x_B⟩ − y_{A∪B}|` over pairs of the family whose union is known.
    pub fn gram_error(&self, y: &PseudoMoments<T>) -> T {
        let gram = self.vectors.transpose() * &self.vectors;
        let mut worst = T::zero();
        for i in 0..self.index.len() {
            for j in i..self.index.len() {
                if let Ok(v) = y.get(self.index[i] | self.index[j]) {
                    worst = worst.max((gram[(i, j)] - v).abs());
                }
            }
        }
        worst
    }

    /// Indicator vector `x_S(f)` by inclusion–exclusion over the label-0 variables.
    pub fn label_vector(&self, f: &Labeling) -> Result<DVector<T>> {
        let mut out = DVector::zeros(self.ambient_dim());
        for (s, sign) in f.expansion(&self.space) {
            let j = *self.lookup.get(&s).ok_or_else(|| Error::MissingMoment(s.to_string()))?;
            out.axpy(T::lit(sign), &self.vectors.column(j), T::one());
        }
        Ok(out)
    }

    /// Vectors conditioned on the event `f`.
    pub fn condition(&self, f: &Labeling) -> Result<ConditionedVectors<'_, T>> {
        let v = self.label_vector(f)?;
        let norm = v.norm();
        if norm.as_f64() <= self.tolerances.zero {
            return Err(Error::ZeroConditioning { norm: norm.as_f64() });
        }
        Ok(ConditionedVectors { base: self, f: f.clone(), norm, empty: v / norm })
    }

    /// Projection onto the span of `x_{S|f₀}(f)` over labelings `f` of `vars`.
    pub fn conditional_projection(&self, f0: &Labeling, vars: &[usize]) -> Result<OrthoProjection<T>> {
        let c = self.condition(f0)?;
        let mut units = Vec::new();
        for f in Labeling::all(vars, self.space.labels()) {
            let v = c.vector(&f)?;
            let n = v.norm();
            if n.as_f64() > self.tolerances.zero {
                units.push(v / n);
            }
        }
        OrthoProjection::from_spanning(self.ambient_dim(), &units)
    }
}

pub fn label_vectors<T: Scalar>(x: &LabelVectors<T>, f: &Labeling) -> Result<DVector<T>> {
    x.label_vector(f)
}

pub fn condition<'a, T: Scalar>(x: &'a LabelVectors<T>, f: &Labeling) -> Result<ConditionedVectors<'a, T>> {
    x.condition(f)
}

pub fn conditional_projection<T: Scalar>(
    x: &LabelVectors<T>,
    f0: &Labeling,
    vars: &[usize],
) -> Result<OrthoProjection<T>> {
    x.conditional_projection(f0, vars)
}

/// The vectors `x_{A|f}(g) = x_{S∪A}(f∘g) / ‖x_S(f)‖`.
#[derive(Clone, Debug)]
pub struct ConditionedVectors<'a, T: Scalar> {
    base: &'a LabelVectors<T>,
    f: Labeling,
    norm: T,
    empty: DVector<T>,
}

impl<'a, T: Scalar> ConditionedVectors<'a, T> {
    pub fn base(&self) -> &'a LabelVectors<T> {
        self.base
    }

    pub fn assignment(&self) -> &Labeling {
        &self.f
    }

    /// `‖x_S(f)‖`.
    pub fn norm(&self) -> T {
        self.norm
    }

    pub fn probability(&self) -> T {
        self.norm * self.norm
    }

    /// `x_{∅|f}`, a unit vector.
    pub fn empty(&self) -> &DVector<T> {
        &self.empty
    }

    /// `x_{A|f}(g)`; zero when `g` contradicts `f`.
    pub fn vector(&self, g: &Labeling) -> Result<DVector<T>> {
        match self.f.compose(g) {
            None => Ok(DVector::zeros(self.base.ambient_dim())),
            Some(fg) => Ok(self.base.label_vector(&fg)? / self.norm),
        }
    }

    /// `x^⊥_{∅|f} v`, the component orthogonal to `x_{∅|f}`.
    pub fn perp(&self, v: &DVector<T>) -> DVector<T> {
        v - &self.empty * self.empty.dot(v)
    }

    /// `‖x_{u|f}(i)‖²` for every label `i`.
    pub fn marginals(&self, var: usize) -> Result<Vec<T>> {
        (0..self.base.space.labels())
            .map(|l| Ok(self.vector(&Labeling::single(var, l))?.norm_squared()))
            .collect()
    }

    pub fn variance(&self, g: &Labeling) -> Result<T> {
        let p = self.vector(g)?.norm_squared();
        Ok(p - p * p)
    }

    pub fn covariance(&self, g: &Labeling, h: &Labeling) -> Result<T> {
        Ok(self.perp(&self.vector(g)?).dot(&self.perp(&self.vector(h)?)))
    }

    /// Conditions further on `g`; the result is conditioning on `f∘g`.
    pub fn refine(&self, g: &Labeling) -> Result<ConditionedVectors<'a, T>> {
        let fg = self
            .f
            .compose(g)
            .ok_or(Error::ZeroConditioning { norm: 0.0 })?;
        self.base.condition(&fg)
    }
}

/// `Var(𝒳_{A|f}(g)) = ‖x_{A|f}(g)‖² − ‖x_{A|f}(g)‖⁴`.
pub fn variance<T: Scalar>(c: &ConditionedVectors<'_, T>, g: &Labeling) -> Result<T> {
    c.variance(g)
}

/// `Cov(𝒳_{A|f}(g), 𝒳_{B|f}(h)) = ⟨x^⊥_{∅|f} x_{A|f}(g), x^⊥_{∅|f} x_{B|f}(h)⟩`.
pub fn covariance<T: Scalar>(c: &ConditionedVectors<'_, T>, g: &Labeling, h: &Labeling) -> Result<T> {
    c.covariance(g, h)
}

/// Both sides of the variance-reduction identity for conditioning on `vars`
/// after `f₀`: the expected conditional variance of the event `g`, and
/// `‖Π^⊥_{S|f₀} x_{A|f₀}(g)‖²`.
pub fn expected_conditional_variance<T: Scalar>(
    x: &LabelVectors<T>,
    f0: &Labeling,
    vars: &[usize],
    g: &Labeling,
) -> Result<(T, T)> {
    let c0 = x.condition(f0)?;
    let mut lhs = T::zero();
    for f in Labeling::all(vars, x.space.labels()) {
        let p = c0.vector(&f)?.norm_squared();
        if p.sqrt().as_f64() <= x.tolerances.zero {
            continue;
        }
        let Some(f0f) = f0.compose(&f) else { continue };
        let cf = x.condition(&f0f)?;
        lhs += p * cf.variance(g)?;
    }
    let proj = x.conditional_projection(f0, vars)?;
    let rhs = proj.apply_perp(&c0.vector(g)?)?.norm_squared();
    Ok((lhs, rhs))
}
