//! Central-cut ellipsoid method on an affine slice, and the minimum-norm
//! program used to turn its cut log into a restricted-support certificate.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{symmetric_eigen, 
    ln_ball_volume, AffineSlice, CutSource, LinearEqualities, OrthoProjection, Polytope,
    SliceConstruction,
};
use crate::oracle::{SeparationOracle, SeparationResponse};
use crate::scalar::{Scalar, Tolerances};

/// Decrease of `ln vol` caused by one central cut in dimension `p`.
pub fn ln_volume_drop(p: usize) -> f64 {
    match p {
        0 => f64::INFINITY,
        1 => std::f64::consts::LN_2,
        _ => {
            let p = p as f64;
            -0.5 * (p * (p * p / (p * p - 1.0)).ln() + ((p - 1.0) / (p + 1.0)).ln())
        }
    }
}

/// Ellipsoid `{z : (z − c)ᵀ A⁻¹ (z − c) ≤ 1}` in chart coordinates.
#[derive(Clone, Debug)]
pub struct EllipsoidState<T: Scalar> {
    center: DVector<T>,
    shape: DMatrix<T>,
    iteration: usize,
    ln_volume: f64,
}

impl<T: Scalar> EllipsoidState<T> {
    pub fn ball(center: DVector<T>, radius: T) -> Self {
        let p = center.len();
        let shape = DMatrix::identity(p, p) * (radius * radius);
        EllipsoidState { center, shape, iteration: 0, ln_volume: ln_ball_volume(p, radius.as_f64()) }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<T> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<T> {
        &self.shape
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Log-volume tracked through the exact per-step decrease.
    pub fn ln_volume(&self) -> f64 {
        self.ln_volume
    }

    /// `ln det A` from a Cholesky factorization, `None` if `A` is not positive definite.
    pub fn ln_det(&self) -> Option<f64> {
        let chol = self.shape.clone().cholesky()?;
        Some(chol.l().diagonal().iter().map(|d| 2.0 * d.as_f64().ln()).sum())
    }

    /// Keeps the half `{z : gᵀ(z − center) ≤ 0}` and replaces the ellipsoid by
    /// the minimum-volume ellipsoid containing it.
    pub fn cut(&mut self, g: &DVector<T>) -> Result<()> {
        let p = self.dim();
        let ag = &self.shape * g;
        let gag = g.dot(&ag);
        if !(gag > T::zero()) {
            return Err(Error::DegenerateShape { iteration: self.iteration });
        }
        let root = gag.sqrt();
        if p == 1 {
            self.center -= ag * (T::lit(0.5) / root);
            self.shape *= T::lit(0.25);
        } else {
            let pf = T::from_usize(p).expect("dimension fits scalar");
            let one = T::one();
            self.center -= &ag * (one / ((pf + one) * root));
            let factor = pf * pf / (pf * pf - one);
            let rank_one = &ag * ag.transpose() * (T::lit(2.0) / ((pf + one) * gag));
            self.shape = (&self.shape - rank_one) * factor;
            let sym = (&self.shape + self.shape.transpose()) * T::lit(0.5);
            self.shape = sym;
        }
        self.iteration += 1;
        self.ln_volume -= ln_volume_drop(p);
        Ok(())
    }
}

/// Outcome of [`ccut_e`].
#[derive(Clone, Debug)]
pub enum CcutOutcome<T: Scalar> {
    /// A point on the slice accepted by the oracle.
    Point { point: DVector<T>, oracle_calls: usize },
    /// Cuts whose polytope contains the body and meets the slice in small volume.
    /// The first rows are the faces of the unit box.
    CutPolytope { polytope: Polytope<T>, oracle_calls: usize },
}

impl<T: Scalar> CcutOutcome<T> {
    pub fn oracle_calls(&self) -> usize {
        match self {
            CcutOutcome::Point { oracle_calls, .. } | CcutOutcome::CutPolytope { oracle_calls, .. } => {
                *oracle_calls
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct CcutOptions {
    /// Stop once `ln vol` of the ellipsoid drops below this value.
    pub ln_volume_target: f64,
    /// Slack handed to the oracle with every query.
    pub query_slack: f64,
    /// Hard iteration cap; `None` uses `2·⌈6p(|log₂ ε| + p)⌉`.
    pub max_iterations: Option<usize>,
    pub tolerances: Tolerances,
}

impl CcutOptions {
    pub fn with_volume(volume: f64) -> Self {
        CcutOptions {
            ln_volume_target: volume.ln(),
            query_slack: Tolerances::default().query_slack,
            max_iterations: None,
            tolerances: Tolerances::default(),
        }
    }

    pub fn with_ln_volume(ln_volume: f64) -> Self {
        CcutOptions { ln_volume_target: ln_volume, ..Self::with_volume(1.0) }
    }

    fn iteration_cap(&self, p: usize) -> usize {
        self.max_iterations.unwrap_or_else(|| {
            let log2_eps = (self.ln_volume_target / std::f64::consts::LN_2).abs();
            let pf = p as f64;
            2 * (6.0 * pf * (log2_eps + pf)).ceil() as usize + 16
        })
    }
}

/// Runs the central-cut ellipsoid method over `slice` until the oracle accepts a
/// query point or the ellipsoid volume falls below `eps0`.
pub fn ccut_e<T: Scalar>(
    oracle: &mut dyn SeparationOracle<T>,
    slice: &AffineSlice<T>,
    eps0: T,
) -> Result<CcutOutcome<T>> {
    ccut_e_with(oracle, slice, &CcutOptions::with_volume(eps0.as_f64()))
}

/// Starting ball: centered at the projection of the box center, just large
/// enough to contain the box section.
fn initial_ball<T: Scalar>(slice: &AffineSlice<T>) -> (DVector<T>, T) {
    let n = slice.dim();
    let chart = slice.chart();
    let mid = DVector::from_element(n, T::lit(0.5));
    let center = slice.chart_coords(&mid);
    let support = (0..n).filter(|&i| chart.row(i).amax() > T::lit(1e-12)).count();
    let radius = T::lit((support.max(1) as f64).sqrt() * 0.5 * (1.0 + 1e-9));
    (center, radius)
}

fn box_violation<T: Scalar>(y: &DVector<T>, slack: T) -> Option<(usize, bool)> {
    let mut worst: Option<(usize, bool, T)> = None;
    for (i, v) in y.iter().enumerate() {
        let (amount, upper) = if *v > T::one() { (*v - T::one(), true) } else { (-*v, false) };
        if amount > slack && worst.is_none_or(|(_, _, w)| amount > w) {
            worst = Some((i, upper, amount));
        }
    }
    worst.map(|(i, u, _)| (i, u))
}

pub fn ccut_e_with<T: Scalar>(
    oracle: &mut dyn SeparationOracle<T>,
    slice: &AffineSlice<T>,
    options: &CcutOptions,
) -> Result<CcutOutcome<T>> {
    let n = slice.dim();
    if oracle.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: oracle.dim() });
    }
    let p = slice.chart_dim();
    let slack = T::lit(options.query_slack);
    let box_slack = T::lit(options.tolerances.slice);
    let mut polytope = Polytope::unit_box(n);
    let mut calls = 0usize;

    if p == 0 {
        let y = slice.anchor().clone();
        if box_violation(&y, box_slack).is_some() {
            return Ok(CcutOutcome::CutPolytope { polytope, oracle_calls: 0 });
        }
        calls += 1;
        return Ok(match oracle.separate(&y, slack)? {
            SeparationResponse::Feasible => CcutOutcome::Point { point: y, oracle_calls: calls },
            SeparationResponse::Cut { normal, slack } => {
                let offset = normal.dot(&y) + slack;
                polytope.push(normal, offset, CutSource::Oracle { call: 0 })?;
                CcutOutcome::CutPolytope { polytope, oracle_calls: calls }
            }
        });
    }

    let (z0, radius) = initial_ball(slice);
    let mut state = EllipsoidState::ball(z0, radius);
    let cap = options.iteration_cap(p);
    let check_every = p.max(8);
    let min_gradient = T::lit(options.tolerances.min_gradient);

    while state.ln_volume() >= options.ln_volume_target && state.iteration() < cap {
        let y = slice.point(state.center());
        let g = if let Some((i, upper)) = box_violation(&y, box_slack) {
            let row = slice.chart().row(i).transpose();
            if row.amax() <= T::lit(1e-12) {
                // The slice misses the box entirely along this coordinate.
                return Ok(CcutOutcome::CutPolytope { polytope, oracle_calls: calls });
            }
            if upper { row } else { -row }
        } else {
            let call = calls;
            calls += 1;
            match oracle.separate(&y, slack)? {
                SeparationResponse::Feasible => {
                    return Ok(CcutOutcome::Point { point: y, oracle_calls: calls })
                }
                SeparationResponse::Cut { normal, slack } => {
                    let g = slice.pull_back(&normal);
                    let gn = g.norm();
                    let offset = normal.dot(&y) + slack;
                    if gn <= min_gradient * normal.norm() {
                        if slack > T::zero() {
                            return Err(Error::ZeroGradient { norm: gn.as_f64() });
                        }
                        // A strict cut constant on the slice separates all of it.
                        polytope.push(normal, offset, CutSource::Oracle { call })?;
                        return Ok(CcutOutcome::CutPolytope { polytope, oracle_calls: calls });
                    }
                    polytope.push(normal, offset, CutSource::Oracle { call })?;
                    g
                }
            }
        };
        let cut = state.cut(&g);
        if cut.is_err() || state.iteration() % check_every == 0 {
            match flat_ln_volume(&state, radius) {
                Some(v) if v < options.ln_volume_target => {
                    return Ok(CcutOutcome::CutPolytope { polytope, oracle_calls: calls });
                }
                Some(_) if cut.is_ok() && state.shape().clone().cholesky().is_some() => {}
                _ => return Err(Error::DegenerateShape { iteration: state.iteration() }),
            }
        }
    }
    Ok(CcutOutcome::CutPolytope { polytope, oracle_calls: calls })
}

/// Upper bound on the log-volume of the ellipsoid intersected with the starting
/// ball: the box spanned by its principal axes, each capped at the ball's
/// diameter. Stays finite when the ellipsoid has collapsed to a needle, where
/// the tracked volume no longer describes the computed shape.
fn flat_ln_volume<T: Scalar>(state: &EllipsoidState<T>, radius: T) -> Option<f64> {
    let eig = symmetric_eigen(state.shape().clone()).ok()?;
    let cap = 2.0 * radius.as_f64();
    Some(
        eig.eigenvalues
            .iter()
            .map(|l| {
                let l = l.as_f64();
                if l > 0.0 {
                    (2.0 * l.sqrt()).min(cap).ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum(),
    )
}

/// Backend for the minimum-norm program.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpBackend {
    /// Sliding-objective ellipsoid method. Slow; intended for small instances.
    Ellipsoid,
    /// Primal-dual interior point (Clarabel) with constraint generation.
    InteriorPoint,
}

#[derive(Clone, Debug)]
pub struct QpOptions {
    pub accuracy: f64,
    pub backend: QpBackend,
    /// Iteration cap for the ellipsoid backend.
    pub max_iterations: usize,
}

impl QpOptions {
    pub fn new(accuracy: f64) -> Self {
        QpOptions { accuracy, backend: QpBackend::InteriorPoint, max_iterations: 200_000 }
    }
}

/// Minimizes `‖Π(y − y₀)‖²` over `P`.
pub fn qp_min_norm<T: Scalar>(
    projection: &OrthoProjection<T>,
    y0: &DVector<T>,
    polytope: &Polytope<T>,
    accuracy: T,
) -> Result<DVector<T>> {
    let none = LinearEqualities::none(polytope.dim());
    qp_min_norm_with(projection, y0, polytope, &none, &QpOptions::new(accuracy.as_f64()))
}

/// Minimizes `‖Π(y − y₀)‖²` over `P ∩ {Ey = e}`.
pub fn qp_min_norm_with<T: Scalar>(
    projection: &OrthoProjection<T>,
    y0: &DVector<T>,
    polytope: &Polytope<T>,
    equalities: &LinearEqualities<T>,
    options: &QpOptions,
) -> Result<DVector<T>> {
    let n = polytope.dim();
    for found in [projection.dim(), y0.len(), equalities.dim()] {
        if found != n {
            return Err(Error::DimensionMismatch { expected: n, found });
        }
    }
    match options.backend {
        QpBackend::Ellipsoid => qp_ellipsoid(projection, y0, polytope, equalities, options),
        QpBackend::InteriorPoint => qp_interior(projection, y0, polytope, equalities, options),
    }
}

fn objective<T: Scalar>(projection: &OrthoProjection<T>, y: &DVector<T>, y0: &DVector<T>) -> T {
    projection.apply(&(y - y0)).expect("dimensions checked").norm_squared()
}

fn qp_ellipsoid<T: Scalar>(
    projection: &OrthoProjection<T>,
    y0: &DVector<T>,
    polytope: &Polytope<T>,
    equalities: &LinearEqualities<T>,
    options: &QpOptions,
) -> Result<DVector<T>> {
    let n = polytope.dim();
    let hull = match AffineSlice::with_equalities(OrthoProjection::zero(n), DVector::zeros(n), equalities)? {
        SliceConstruction::Slice(s) => s,
        SliceConstruction::Inconsistent { .. } => return Err(Error::EmptyShrunkPolytope),
    };
    let p = hull.chart_dim();
    if p == 0 {
        let y = hull.anchor().clone();
        return if polytope.contains(&y, T::lit(options.accuracy)) {
            Ok(y)
        } else {
            Err(Error::EmptyShrunkPolytope)
        };
    }
    let (z0, radius) = initial_ball(&hull);
    let mut state = EllipsoidState::ball(z0, radius);
    let stop = ln_ball_volume(p, options.accuracy);
    let mut best: Option<(T, DVector<T>)> = None;
    while state.ln_volume() > stop && state.iteration() < options.max_iterations {
        let y = hull.point(state.center());
        let g = match polytope.max_violation(&y) {
            Some((i, v)) if v > T::zero() => hull.pull_back(&polytope.rows()[i]),
            _ => {
                let f = objective(projection, &y, y0);
                if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best = Some((f, y.clone()));
                }
                let grad = projection.apply(&(&y - y0))? * T::lit(2.0);
                let g = hull.pull_back(&grad);
                if g.norm() <= T::lit(1e-14) {
                    return Ok(y);
                }
                g
            }
        };
        if g.norm() <= T::lit(1e-14) {
            // A violated row constant on the hull: nothing feasible.
            return Err(Error::EmptyShrunkPolytope);
        }
        if state.cut(&g).is_err() {
            break;
        }
    }
    best.map(|(_, y)| y).ok_or(Error::EmptyShrunkPolytope)
}

fn dense_to_csc(rows: &[Vec<f64>], ncols: usize) -> CscMatrix<f64> {
    let m = rows.len();
    let mut colptr = Vec::with_capacity(ncols + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for j in 0..ncols {
        for (i, r) in rows.iter().enumerate() {
            if r[j] != 0.0 {
                rowval.push(i);
                nzval.push(r[j]);
            }
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(m, ncols, colptr, rowval, nzval)
}

/// Upper triangle of `2Π` in CSC form.
fn objective_matrix<T: Scalar>(projection: &OrthoProjection<T>) -> CscMatrix<f64> {
    let n = projection.dim();
    let mut colptr = vec![0usize];
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    if let Some(idx) = projection.coordinate_indices() {
        let mut on = vec![false; n];
        for &i in idx {
            on[i] = true;
        }
        for (j, &inside) in on.iter().enumerate() {
            if inside {
                rowval.push(j);
                nzval.push(2.0);
            }
            colptr.push(rowval.len());
        }
    } else {
        let b = projection.basis();
        let full = b * b.transpose();
        for j in 0..n {
            for i in 0..=j {
                let v = 2.0 * full[(i, j)].as_f64();
                if v.abs() > 1e-15 {
                    rowval.push(i);
                    nzval.push(v);
                }
            }
            colptr.push(rowval.len());
        }
    }
    CscMatrix::new(n, n, colptr, rowval, nzval)
}

enum InteriorResult {
    Solved(Vec<f64>),
    Infeasible,
}

fn solve_interior(
    objective: &CscMatrix<f64>,
    linear: &[f64],
    equalities: &[Vec<f64>],
    eq_rhs: &[f64],
    rows: &[Vec<f64>],
    offsets: &[f64],
) -> Result<InteriorResult> {
    let n = linear.len();
    let mut all: Vec<Vec<f64>> = equalities.to_vec();
    all.extend(rows.iter().cloned());
    let mut b: Vec<f64> = eq_rhs.to_vec();
    b.extend_from_slice(offsets);
    let a = dense_to_csc(&all, n);
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if !equalities.is_empty() {
        cones.push(ZeroConeT(equalities.len()));
    }
    if !rows.is_empty() {
        cones.push(NonnegativeConeT(rows.len()));
    }
    let settings = DefaultSettings::<f64> {
        verbose: false,
        tol_gap_abs: 1e-11,
        tol_gap_rel: 1e-11,
        tol_feas: 1e-11,
        max_iter: 300,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(objective, linear, &a, &b, &cones, settings)
        .map_err(|e| Error::QpFailure(e.to_string()))?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            Ok(InteriorResult::Solved(solver.solution.x.clone()))
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            Ok(InteriorResult::Infeasible)
        }
        other => Err(Error::QpFailure(format!("{other:?}"))),
    }
}

fn qp_interior<T: Scalar>(
    projection: &OrthoProjection<T>,
    y0: &DVector<T>,
    polytope: &Polytope<T>,
    equalities: &LinearEqualities<T>,
    options: &QpOptions,
) -> Result<DVector<T>> {
    let n = polytope.dim();
    let p_mat = objective_matrix(projection);
    let linear: Vec<f64> = (projection.apply(y0)? * T::lit(-2.0)).iter().map(|v| v.as_f64()).collect();
    let eq = equalities.orthonormalized();
    let eq_rows: Vec<Vec<f64>> =
        (0..eq.matrix.nrows()).map(|i| eq.matrix.row(i).iter().map(|v| v.as_f64()).collect()).collect();
    let eq_rhs: Vec<f64> = eq.rhs.iter().map(|v| v.as_f64()).collect();
    let rows: Vec<Vec<f64>> =
        polytope.rows().iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect();
    let offsets: Vec<f64> = polytope.offsets().iter().map(|v| v.as_f64()).collect();

    // Constraint generation: start from the box faces and the most recent cuts,
    // then add every violated row until the candidate is feasible for all of them.
    let total = rows.len();
    let mut active = vec![false; total];
    let initial_recent = 4 * n + 16;
    for (i, source) in polytope.sources().iter().enumerate() {
        if matches!(source, CutSource::Box { .. }) || i + initial_recent >= total {
            active[i] = true;
        }
    }
    let tol = options.accuracy.max(1e-12);
    loop {
        let idx: Vec<usize> = (0..total).filter(|&i| active[i]).collect();
        let sub_rows: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
        let sub_offsets: Vec<f64> = idx.iter().map(|&i| offsets[i]).collect();
        let x = match solve_interior(&p_mat, &linear, &eq_rows, &eq_rhs, &sub_rows, &sub_offsets)? {
            InteriorResult::Infeasible => return Err(Error::EmptyShrunkPolytope),
            InteriorResult::Solved(x) => x,
        };
        let mut added = 0;
        for i in 0..total {
            if active[i] {
                continue;
            }
            let lhs: f64 = rows[i].iter().zip(&x).map(|(a, b)| a * b).sum();
            if lhs - offsets[i] > tol {
                active[i] = true;
                added += 1;
            }
        }
        if added == 0 {
            return Ok(DVector::from_iterator(n, x.into_iter().map(T::lit)));
        }
    }
}
