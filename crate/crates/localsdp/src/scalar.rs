use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

/// Real scalar the library is generic over. Implemented for `f32` and `f64`.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static
{
    /// Converts a literal, panicking only for values no float can hold.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {}
impl Scalar for f32 {}

/// Numerical tolerances shared by every module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Minimum eigenvalue accepted as positive semidefinite.
    pub psd: f64,
    /// Norm below which a conditioning event counts as impossible.
    pub zero: f64,
    /// Orthonormality and idempotence slack for projections.
    pub orthonormal: f64,
    /// Chart gradient norm (relative to the cut) below which a cut is parallel to the slice.
    pub min_gradient: f64,
    /// Slack passed to oracles by the ellipsoid driver.
    pub query_slack: f64,
    /// Smallest admissible certificate direction before normalization.
    pub direction: f64,
    /// Allowed drift of a point away from its affine slice.
    pub slice: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            psd: 1e-8,
            zero: 1e-9,
            orthonormal: 1e-10,
            min_gradient: 1e-12,
            query_slack: 1e-10,
            direction: 1e-12,
            slice: 1e-9,
        }
    }
}
