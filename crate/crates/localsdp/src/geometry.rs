//! Projections, affine slices, polytopes and ball volumes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type DenseVector<T> = DVector<T>;

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Eigen-decomposition of a symmetric matrix.
///
/// The QR iteration can break down on matrices with many exactly repeated
/// eigenvalues, so non-finite results are retried on `M + cI` and shifted back.
pub fn symmetric_eigen<T: Scalar>(m: DMatrix<T>) -> Result<SymmetricEigen<T, nalgebra::Dyn>> {
    let n = m.nrows();
    let scale = m.amax().max(T::one());
    for shift in [0.0, 0.5, 1.0, 0.37, 2.3] {
        let c = scale * T::lit(shift);
        let shifted = if shift == 0.0 { m.clone() } else { &m + DMatrix::identity(n, n) * c };
        if let Some(mut eig) = SymmetricEigen::try_new(shifted, T::default_epsilon(), 10_000) {
            if eig.eigenvalues.iter().chain(eig.eigenvectors.iter()).all(|v| v.is_finite()) {
                eig.eigenvalues.iter_mut().for_each(|v| *v -= c);
                return Ok(eig);
            }
        }
    }
    Err(Error::InvalidInput("symmetric eigensolver did not converge".into()))
}

/// Orthogonal projection onto a subspace, stored by an orthonormal basis.
///
/// Projections onto a subset of coordinates keep the index list and skip the
/// matrix products.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoProjection<T: Scalar> {
    dim: usize,
    basis: DMatrix<T>,
    coordinates: Option<Vec<usize>>,
}

impl<T: Scalar> OrthoProjection<T> {
    pub fn identity(dim: usize) -> Self {
        Self::coordinates(dim, &(0..dim).collect::<Vec<_>>()).expect("indices in range")
    }

    pub fn zero(dim: usize) -> Self {
        Self::coordinates(dim, &[]).expect("empty index set")
    }

    /// Projection onto the coordinates in `indices` (duplicates ignored).
    pub fn coordinates(dim: usize, indices: &[usize]) -> Result<Self> {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        if let Some(&bad) = idx.iter().find(|&&i| i >= dim) {
            return Err(Error::InvalidInput(format!(
                "coordinate {bad} out of range for dimension {dim}"
            )));
        }
        let mut basis = DMatrix::zeros(dim, idx.len());
        for (j, &i) in idx.iter().enumerate() {
            basis[(i, j)] = T::one();
        }
        Ok(OrthoProjection { dim, basis, coordinates: Some(idx) })
    }

    /// Projection onto the span of `vectors`; linearly dependent inputs are dropped.
    pub fn from_spanning(dim: usize, vectors: &[DVector<T>]) -> Result<Self> {
        let mut cols: Vec<DVector<T>> = Vec::new();
        for v in vectors {
            check_dim(dim, v.len())?;
            let scale = v.norm();
            if scale <= T::zero() {
                continue;
            }
            let mut r = v / scale;
            for _ in 0..2 {
                for q in &cols {
                    let c = q.dot(&r);
                    r.axpy(-c, q, T::one());
                }
            }
            let n = r.norm();
            if n > T::lit(1e-10) {
                cols.push(r / n);
            }
        }
        let basis = if cols.is_empty() {
            DMatrix::zeros(dim, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        Ok(OrthoProjection { dim, basis, coordinates: None })
    }

    /// Wraps a basis that is already orthonormal.
    pub fn from_orthonormal(basis: DMatrix<T>) -> Result<Self> {
        let gram = basis.transpose() * &basis;
        let err = (gram - DMatrix::identity(basis.ncols(), basis.ncols())).amax();
        if err > T::lit(1e-8) {
            return Err(Error::InvalidInput(format!(
                "basis is not orthonormal (deviation {err})"
            )));
        }
        Ok(OrthoProjection { dim: basis.nrows(), basis, coordinates: None })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    /// Index set when this is a coordinate projection.
    pub fn coordinate_indices(&self) -> Option<&[usize]> {
        self.coordinates.as_deref()
    }

    pub fn apply(&self, x: &DVector<T>) -> Result<DVector<T>> {
        check_dim(self.dim, x.len())?;
        Ok(match &self.coordinates {
            Some(idx) => {
                let mut out = DVector::zeros(self.dim);
                for &i in idx {
                    out[i] = x[i];
                }
                out
            }
            None => &self.basis * (self.basis.transpose() * x),
        })
    }

    /// `x − Πx`.
    pub fn apply_perp(&self, x: &DVector<T>) -> Result<DVector<T>> {
        Ok(x - self.apply(x)?)
    }

    /// Orthonormal basis of the orthogonal complement, `dim × (dim − rank)`.
    pub fn complement_basis(&self) -> DMatrix<T> {
        let n = self.dim;
        if let Some(idx) = &self.coordinates {
            let mut inside = vec![false; n];
            for &i in idx {
                inside[i] = true;
            }
            let rest: Vec<usize> = (0..n).filter(|&i| !inside[i]).collect();
            let mut b = DMatrix::zeros(n, rest.len());
            for (j, &i) in rest.iter().enumerate() {
                b[(i, j)] = T::one();
            }
            return b;
        }
        let target = n - self.rank();
        let mut cols: Vec<DVector<T>> = Vec::with_capacity(target);
        for i in 0..n {
            if cols.len() == target {
                break;
            }
            let mut r = DVector::zeros(n);
            r[i] = T::one();
            for _ in 0..2 {
                let c = self.basis.transpose() * &r;
                r -= &self.basis * c;
                for q in &cols {
                    let c = q.dot(&r);
                    r.axpy(-c, q, T::one());
                }
            }
            let nr = r.norm();
            if nr > T::lit(1e-6) {
                cols.push(r / nr);
            }
        }
        if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }

    /// True when `x` lies in the range of the projection up to `tol`.
    pub fn contains(&self, x: &DVector<T>, tol: T) -> Result<bool> {
        Ok(self.apply_perp(x)?.norm() <= tol)
    }
}

pub fn project<T: Scalar>(p: &OrthoProjection<T>, x: &DVector<T>) -> Result<DVector<T>> {
    p.apply(x)
}

/// Linear equalities `Ey = e` on the ambient space.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearEqualities<T: Scalar> {
    pub matrix: DMatrix<T>,
    pub rhs: DVector<T>,
}

impl<T: Scalar> LinearEqualities<T> {
    pub fn none(dim: usize) -> Self {
        LinearEqualities { matrix: DMatrix::zeros(0, dim), rhs: DVector::zeros(0) }
    }

    pub fn new(matrix: DMatrix<T>, rhs: DVector<T>) -> Result<Self> {
        check_dim(matrix.nrows(), rhs.len())?;
        Ok(LinearEqualities { matrix, rhs })
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn residual(&self, y: &DVector<T>) -> DVector<T> {
        &self.matrix * y - &self.rhs
    }

    /// Equivalent system with orthonormal rows; redundant rows are removed.
    pub fn orthonormalized(&self) -> Self {
        if self.is_empty() {
            return self.clone();
        }
        let svd = self.matrix.clone().svd(true, true);
        let u = svd.u.expect("u requested");
        let vt = svd.v_t.expect("v_t requested");
        let smax = svd.singular_values.max();
        let cutoff = smax * T::lit(1e-10);
        let keep: Vec<usize> =
            (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > cutoff).collect();
        let mut m = DMatrix::zeros(keep.len(), self.dim());
        let mut r = DVector::zeros(keep.len());
        for (row, &i) in keep.iter().enumerate() {
            m.set_row(row, &vt.row(i));
            r[row] = u.column(i).dot(&self.rhs) / svd.singular_values[i];
        }
        LinearEqualities { matrix: m, rhs: r }
    }
}

/// Result of intersecting a slice with linear equalities.
#[derive(Clone, Debug)]
pub enum SliceConstruction<T: Scalar> {
    Slice(AffineSlice<T>),
    /// The equalities cannot hold anywhere on the slice. `functional` lies in the
    /// range of the projection and satisfies `⟨functional, x⟩ > ⟨functional, y₀⟩`
    /// for every `x` meeting the equalities; `gap` is that margin.
    Inconsistent { functional: DVector<T>, gap: T },
}

/// The set `{y : Πy = y₀}` (optionally intersected with equalities),
/// parameterized as `anchor + chart·z`.
#[derive(Clone, Debug)]
pub struct AffineSlice<T: Scalar> {
    target: DVector<T>,
    anchor: DVector<T>,
    projection: OrthoProjection<T>,
    chart: DMatrix<T>,
}

impl<T: Scalar> AffineSlice<T> {
    pub fn new(projection: OrthoProjection<T>, y0: DVector<T>) -> Result<Self> {
        check_dim(projection.dim(), y0.len())?;
        let drift = projection.apply_perp(&y0)?.norm();
        if drift > T::lit(1e-9) * (T::one() + y0.norm()) {
            return Err(Error::InvalidInput(format!("anchor is not in the projection range ({drift})")));
        }
        let chart = projection.complement_basis();
        Ok(AffineSlice { anchor: y0.clone(), target: y0, projection, chart })
    }

    /// The whole space.
    pub fn unconstrained(dim: usize) -> Self {
        AffineSlice::new(OrthoProjection::zero(dim), DVector::zeros(dim)).expect("zero anchor")
    }

    /// `{y : Πy = y₀, Ey = e}`.
    pub fn with_equalities(
        projection: OrthoProjection<T>,
        y0: DVector<T>,
        equalities: &LinearEqualities<T>,
    ) -> Result<SliceConstruction<T>> {
        let base = AffineSlice::new(projection, y0)?;
        check_dim(base.dim(), equalities.dim())?;
        if equalities.is_empty() {
            return Ok(SliceConstruction::Slice(base));
        }
        let eq = equalities.orthonormalized();
        if eq.is_empty() {
            return Ok(SliceConstruction::Slice(base));
        }
        let free = &base.chart;
        let restricted = &eq.matrix * free;
        let rhs = &eq.rhs - &eq.matrix * &base.target;
        let (w, null) = if restricted.ncols() == 0 {
            (DVector::zeros(0), DMatrix::zeros(0, 0))
        } else {
            let svd = restricted.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let cutoff = T::lit(1e-10).max(smax * T::lit(1e-10));
            let u = svd.u.as_ref().expect("u requested");
            let vt = svd.v_t.as_ref().expect("v_t requested");
            let mut w = DVector::zeros(restricted.ncols());
            let mut rank = 0;
            for i in 0..svd.singular_values.len() {
                let s = svd.singular_values[i];
                if s > cutoff {
                    rank += 1;
                    let coef = u.column(i).dot(&rhs) / s;
                    w += vt.row(i).transpose() * coef;
                }
            }
            let null = null_space(&restricted, rank);
            (w, null)
        };
        let residual = &rhs - &restricted * &w;
        let rn = residual.norm();
        if rn > T::lit(1e-9) * (T::one() + eq.rhs.norm()) {
            let functional = eq.matrix.transpose() * &residual;
            let functional = base.projection.apply(&functional)?;
            return Ok(SliceConstruction::Inconsistent { functional, gap: rn * rn });
        }
        let anchor = &base.target + free * &w;
        let chart = if null.ncols() == 0 { DMatrix::zeros(base.dim(), 0) } else { free * null };
        Ok(SliceConstruction::Slice(AffineSlice {
            target: base.target,
            anchor,
            projection: base.projection,
            chart,
        }))
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn chart_dim(&self) -> usize {
        self.chart.ncols()
    }

    pub fn anchor(&self) -> &DVector<T> {
        &self.anchor
    }

    /// The prescribed value `y₀` of `Πy`.
    pub fn target(&self) -> &DVector<T> {
        &self.target
    }

    pub fn projection(&self) -> &OrthoProjection<T> {
        &self.projection
    }

    pub fn chart(&self) -> &DMatrix<T> {
        &self.chart
    }

    pub fn point(&self, z: &DVector<T>) -> DVector<T> {
        &self.anchor + &self.chart * z
    }

    pub fn chart_coords(&self, y: &DVector<T>) -> DVector<T> {
        self.chart.transpose() * (y - &self.anchor)
    }

    /// Pulls an ambient linear functional back to chart coordinates.
    pub fn pull_back(&self, c: &DVector<T>) -> DVector<T> {
        self.chart.transpose() * c
    }
}

/// Orthonormal basis of the null space of `m`, given its numerical rank.
fn null_space<T: Scalar>(m: &DMatrix<T>, rank: usize) -> DMatrix<T> {
    let n = m.ncols();
    if rank == 0 {
        return DMatrix::identity(n, n);
    }
    if rank >= n {
        return DMatrix::zeros(n, 0);
    }
    // The right singular vectors of a wide matrix are truncated by the thin SVD,
    // so work from the eigenvectors of the Gram matrix instead.
    let gram = m.transpose() * m;
    let eig = symmetric_eigen(gram).expect("Gram matrices are symmetric");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let cols: Vec<DVector<T>> =
        order[..n - rank].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    DMatrix::from_columns(&cols)
}

/// Where a polytope row came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutSource {
    /// A face of the unit box.
    Box { coordinate: usize, upper: bool },
    /// The oracle answer to the given call.
    Oracle { call: usize },
    /// Supplied directly by the caller.
    External,
}

/// `{x : Cx ≤ d}` with a source tag per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope<T: Scalar> {
    dim: usize,
    rows: Vec<DVector<T>>,
    offsets: Vec<T>,
    sources: Vec<CutSource>,
}

impl<T: Scalar> Polytope<T> {
    pub fn new(dim: usize) -> Self {
        Polytope { dim, rows: Vec::new(), offsets: Vec::new(), sources: Vec::new() }
    }

    /// `[0, 1]^dim`.
    pub fn unit_box(dim: usize) -> Self {
        let mut p = Polytope::new(dim);
        for i in 0..dim {
            let mut up = DVector::zeros(dim);
            up[i] = T::one();
            p.rows.push(up.clone());
            p.offsets.push(T::one());
            p.sources.push(CutSource::Box { coordinate: i, upper: true });
            p.rows.push(-up);
            p.offsets.push(T::zero());
            p.sources.push(CutSource::Box { coordinate: i, upper: false });
        }
        p
    }

    pub fn push(&mut self, row: DVector<T>, offset: T, source: CutSource) -> Result<()> {
        check_dim(self.dim, row.len())?;
        if row.iter().all(|v| *v == T::zero()) {
            return Err(Error::InvalidInput("polytope rows must be nonzero".into()));
        }
        self.rows.push(row);
        self.offsets.push(offset);
        self.sources.push(source);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[DVector<T>] {
        &self.rows
    }

    pub fn offsets(&self) -> &[T] {
        &self.offsets
    }

    pub fn sources(&self) -> &[CutSource] {
        &self.sources
    }

    pub fn row_norms(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.norm()).collect()
    }

    /// `poly(C, d − eps·rowNorms(C))`.
    pub fn shrink(&self, eps: T) -> Self {
        let norms = self.row_norms();
        self.shrink_by(eps, &norms)
    }

    /// Moves every offset inward by `eps·norms[i]`.
    pub fn shrink_by(&self, eps: T, norms: &[T]) -> Self {
        let mut out = self.clone();
        for (d, n) in out.offsets.iter_mut().zip(norms) {
            *d -= eps * *n;
        }
        out
    }

    /// Row index and amount of the largest violation `⟨c, x⟩ − d`.
    pub fn max_violation(&self, x: &DVector<T>) -> Option<(usize, T)> {
        self.rows
            .iter()
            .zip(&self.offsets)
            .map(|(r, d)| r.dot(x) - *d)
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
    }

    pub fn contains(&self, x: &DVector<T>, slack: T) -> bool {
        self.max_violation(x).is_none_or(|(_, v)| v <= slack)
    }
}

pub fn shrink_polytope<T: Scalar>(p: &Polytope<T>, eps: T) -> Polytope<T> {
    p.shrink(eps)
}

/// `ln Γ(d/2 + 1)` through the exact half-integer recursion.
fn ln_gamma_half_plus_one(d: usize) -> f64 {
    let mut acc = if d % 2 == 0 { 0.0 } else { 0.5 * std::f64::consts::PI.ln() };
    let mut x = d as f64 / 2.0;
    while x > 0.25 {
        acc += x.ln();
        x -= 1.0;
    }
    acc
}

/// Natural log of the volume of the unit ball in `d` dimensions.
pub fn ln_unit_ball_volume(d: usize) -> f64 {
    0.5 * d as f64 * std::f64::consts::PI.ln() - ln_gamma_half_plus_one(d)
}

/// Natural log of `vol_d(r)`; `vol_0 = 1`.
pub fn ln_ball_volume(d: usize, r: f64) -> f64 {
    if d == 0 {
        return 0.0;
    }
    ln_unit_ball_volume(d) + d as f64 * r.ln()
}

pub fn ball_volume<T: Scalar>(d: usize, r: T) -> T {
    T::lit(ln_ball_volume(d, r.as_f64()).exp())
}

/// Radius of the `d`-ball of volume `v`.
pub fn ball_radius<T: Scalar>(d: usize, v: T) -> T {
    if d == 0 {
        return T::zero();
    }
    T::lit(((v.as_f64().ln() - ln_unit_ball_volume(d)) / d as f64).exp())
}
