//! Ellipsoid method that either finds a point of `K` on the slice `Πy = y₀`
//! or returns a separating hyperplane supported on the range of `Π`.

use nalgebra::DVector;

use crate::ellipsoid::{ccut_e_with, qp_min_norm_with, CcutOptions, CcutOutcome, QpBackend, QpOptions};
use crate::error::{Error, Result};
use crate::geometry::{ln_ball_volume, AffineSlice, LinearEqualities, OrthoProjection, SliceConstruction};
use crate::oracle::SeparationOracle;
use crate::scalar::{Scalar, Tolerances};

#[derive(Clone, Debug, PartialEq)]
pub enum CertifyOutcome<T: Scalar> {
    Point(DVector<T>),
    /// `⟨normal, x⟩ ≤ ⟨normal, y₀⟩ + bound` for every `x ∈ K`.
    Certificate { normal: DVector<T>, bound: T },
}

#[derive(Clone, Debug)]
pub struct CertifyReport<T: Scalar> {
    pub outcome: CertifyOutcome<T>,
    pub oracle_calls: usize,
    /// Rows in the cut polytope when the ellipsoid phase failed.
    pub cut_rows: usize,
}

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    pub tolerances: Tolerances,
    pub backend: QpBackend,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { tolerances: Tolerances::default(), backend: QpBackend::InteriorPoint }
    }
}

pub fn certify_e<T: Scalar>(
    oracle: &mut dyn SeparationOracle<T>,
    projection: &OrthoProjection<T>,
    y0: &DVector<T>,
    eps0: T,
) -> Result<CertifyOutcome<T>> {
    let none = LinearEqualities::none(projection.dim());
    Ok(certify_e_with(oracle, projection, y0, &none, eps0, &CertifyOptions::default())?.outcome)
}

/// [`certify_e`] for a body known to lie inside the affine space `{Ey = e}`.
/// The ellipsoid then runs on the intersection of that space with the slice.
pub fn certify_e_with<T: Scalar>(
    oracle: &mut dyn SeparationOracle<T>,
    projection: &OrthoProjection<T>,
    y0: &DVector<T>,
    equalities: &LinearEqualities<T>,
    eps0: T,
    options: &CertifyOptions,
) -> Result<CertifyReport<T>> {
    let m = projection.rank();
    if m == 0 {
        return Err(Error::RankZeroProjection);
    }
    let n = projection.dim();
    let slice = match AffineSlice::with_equalities(projection.clone(), y0.clone(), equalities)? {
        SliceConstruction::Slice(s) => s,
        SliceConstruction::Inconsistent { functional, .. } => {
            let normal = -functional.clone() / functional.amax();
            return Ok(CertifyReport {
                outcome: CertifyOutcome::Certificate { normal, bound: eps0 },
                oracle_calls: 0,
                cut_rows: 0,
            });
        }
    };
    let root_m = (m as f64).sqrt();
    let delta = eps0.as_f64() / (2.0 * root_m);
    let mut ccut = CcutOptions::with_ln_volume(ln_ball_volume(slice.chart_dim(), delta));
    ccut.tolerances = options.tolerances.clone();
    ccut.query_slack = options.tolerances.query_slack;
    let polytope = match ccut_e_with(oracle, &slice, &ccut)? {
        CcutOutcome::Point { point, oracle_calls } => {
            return Ok(CertifyReport { outcome: CertifyOutcome::Point(point), oracle_calls, cut_rows: 0 })
        }
        CcutOutcome::CutPolytope { polytope, oracle_calls } => (polytope, oracle_calls),
    };
    let (polytope, oracle_calls) = polytope;

    let eps_prime = delta / (2.0 * root_m);
    let depth = (2.0 + eps_prime) * delta;
    let norms: Vec<T> = if equalities.is_empty() {
        polytope.row_norms()
    } else {
        // Depth is measured inside the affine hull the body lives in.
        let hull = match AffineSlice::with_equalities(OrthoProjection::zero(n), DVector::zeros(n), equalities)? {
            SliceConstruction::Slice(s) => s,
            SliceConstruction::Inconsistent { .. } => {
                return Err(Error::InvalidInput("equalities are inconsistent".into()))
            }
        };
        polytope.rows().iter().map(|r| hull.pull_back(r).norm()).collect()
    };
    let shrunk = polytope.shrink_by(T::lit(depth), &norms);
    let qp = QpOptions { backend: options.backend, ..QpOptions::new(eps_prime * delta) };
    let y_star = match qp_min_norm_with(projection, y0, &shrunk, equalities, &qp) {
        Ok(y) => y,
        Err(Error::EmptyShrunkPolytope) => return Err(Error::ThinBody { depth }),
        Err(e) => return Err(e),
    };
    let direction = projection.apply(&(y_star - y0))?;
    let size = direction.amax();
    if size.as_f64() < options.tolerances.direction {
        return Err(Error::ZeroDirection { norm: size.as_f64() });
    }
    Ok(CertifyReport {
        outcome: CertifyOutcome::Certificate { normal: -direction / size, bound: eps0 },
        oracle_calls,
        cut_rows: polytope.len(),
    })
}
