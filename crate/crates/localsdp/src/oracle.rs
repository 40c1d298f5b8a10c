//! Weak separation oracles and test fixtures.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{CutSource, Polytope};
use crate::scalar::Scalar;

/// Answer to a separation query at `y`.
///
/// A cut guarantees `⟨normal, x⟩ ≤ ⟨normal, y⟩ + slack` for every `x` in the body.
#[derive(Clone, Debug, PartialEq)]
pub enum SeparationResponse<T: Scalar> {
    Feasible,
    Cut { normal: DVector<T>, slack: T },
}

impl<T: Scalar> SeparationResponse<T> {
    /// Builds a cut scaled to unit max-norm. Returns `None` for a zero direction.
    pub fn cut(direction: DVector<T>, slack: T) -> Option<Self> {
        let scale = direction.amax();
        if scale <= T::zero() || !scale.is_finite() {
            return None;
        }
        Some(SeparationResponse::Cut { normal: direction / scale, slack })
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, SeparationResponse::Feasible)
    }
}

/// A convex body `K ⊆ [0, 1]^dim` accessed through separation queries.
pub trait SeparationOracle<T: Scalar> {
    fn dim(&self) -> usize;

    fn separate(&mut self, y: &DVector<T>, slack: T) -> Result<SeparationResponse<T>>;

    /// Half-width of the bounding box.
    fn half_width(&self) -> T {
        T::one()
    }
}

impl<T: Scalar, O: SeparationOracle<T> + ?Sized> SeparationOracle<T> for &mut O {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn separate(&mut self, y: &DVector<T>, slack: T) -> Result<SeparationResponse<T>> {
        (**self).separate(y, slack)
    }

    fn half_width(&self) -> T {
        (**self).half_width()
    }
}

pub type OracleHandle<'a, T> = &'a mut dyn SeparationOracle<T>;

fn check_query<T: Scalar>(dim: usize, y: &DVector<T>) -> Result<()> {
    if y.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: y.len() });
    }
    Ok(())
}

/// Oracle of an explicit polytope.
#[derive(Clone, Debug)]
pub struct PolytopeOracle<T: Scalar> {
    polytope: Polytope<T>,
    norms: Vec<T>,
}

impl<T: Scalar> PolytopeOracle<T> {
    pub fn new(polytope: Polytope<T>) -> Result<Self> {
        if polytope.is_empty() {
            return Err(Error::InvalidInput("polytope oracle needs at least one row".into()));
        }
        let norms = polytope.row_norms();
        Ok(PolytopeOracle { polytope, norms })
    }

    /// The given rows intersected with `[0, 1]^dim`.
    pub fn boxed(dim: usize, rows: &[(DVector<T>, T)]) -> Result<Self> {
        let mut p = Polytope::unit_box(dim);
        for (r, d) in rows {
            p.push(r.clone(), *d, CutSource::External)?;
        }
        Self::new(p)
    }

    pub fn polytope(&self) -> &Polytope<T> {
        &self.polytope
    }
}

impl<T: Scalar> SeparationOracle<T> for PolytopeOracle<T> {
    fn dim(&self) -> usize {
        self.polytope.dim()
    }

    fn separate(&mut self, y: &DVector<T>, slack: T) -> Result<SeparationResponse<T>> {
        check_query(self.dim(), y)?;
        let mut worst: Option<(usize, T)> = None;
        for (i, (row, d)) in self.polytope.rows().iter().zip(self.polytope.offsets()).enumerate() {
            let excess = row.dot(y) - *d - slack * self.norms[i];
            if excess > T::zero() && worst.is_none_or(|(_, w)| excess / self.norms[i] > w) {
                worst = Some((i, excess / self.norms[i]));
            }
        }
        Ok(match worst {
            None => SeparationResponse::Feasible,
            Some((i, _)) => SeparationResponse::cut(self.polytope.rows()[i].clone(), T::zero())
                .expect("polytope rows are nonzero"),
        })
    }
}

/// Oracle of a Euclidean ball.
#[derive(Clone, Debug)]
pub struct BallOracle<T: Scalar> {
    center: DVector<T>,
    radius: T,
}

impl<T: Scalar> BallOracle<T> {
    pub fn new(center: DVector<T>, radius: T) -> Result<Self> {
        if radius <= T::zero() {
            return Err(Error::InvalidInput("ball radius must be positive".into()));
        }
        Ok(BallOracle { center, radius })
    }

    pub fn center(&self) -> &DVector<T> {
        &self.center
    }

    pub fn radius(&self) -> T {
        self.radius
    }
}

impl<T: Scalar> SeparationOracle<T> for BallOracle<T> {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn separate(&mut self, y: &DVector<T>, slack: T) -> Result<SeparationResponse<T>> {
        check_query(self.dim(), y)?;
        let d = y - &self.center;
        if d.norm() <= self.radius + slack {
            return Ok(SeparationResponse::Feasible);
        }
        Ok(SeparationResponse::cut(d, T::zero()).expect("query lies outside the ball"))
    }
}

/// Oracle backed by a closure.
pub struct FnOracle<F> {
    dim: usize,
    query: F,
}

impl<F> FnOracle<F> {
    pub fn new(dim: usize, query: F) -> Self {
        FnOracle { dim, query }
    }
}

impl<T, F> SeparationOracle<T> for FnOracle<F>
where
    T: Scalar,
    F: FnMut(&DVector<T>, T) -> Result<SeparationResponse<T>>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn separate(&mut self, y: &DVector<T>, slack: T) -> Result<SeparationResponse<T>> {
        check_query(self.dim, y)?;
        (self.query)(y, slack)
    }
}

pub fn polytope_oracle<T: Scalar>(p: Polytope<T>) -> Result<PolytopeOracle<T>> {
    PolytopeOracle::new(p)
}

pub fn ball_oracle<T: Scalar>(center: DVector<T>, radius: T) -> Result<BallOracle<T>> {
    BallOracle::new(center, radius)
}
