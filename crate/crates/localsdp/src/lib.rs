//! Local partial solutions of Lasserre relaxations.
//!
//! The crate finds the part of a hierarchy solution that a local rounding
//! algorithm reads, without solving the full relaxation. Its pieces:
//!
//! * [`ellipsoid`] and [`certify`]: a central-cut ellipsoid method on affine
//!   slices that either finds a feasible point or returns a hyperplane supported
//!   on the fixed coordinates.
//! * [`solver`]: nested separation oracles that grow a seed family level by level.
//! * [`lasserre`]: moment matrices, localizing blocks and the conditioning calculus.
//! * [`seeding`] and [`rounding`]: volume-sampled seed selection and propagation rounding.
//! * [`harness`]: instance ingestion, brute force, spectra and experiment drivers.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix `f64`.

pub mod certify;
pub mod ellipsoid;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod lasserre;
pub mod oracle;
pub mod rounding;
pub mod scalar;
pub mod seeding;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::{Scalar, Tolerances};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
pub type Projection = geometry::OrthoProjection<f64>;
pub type Slice = geometry::AffineSlice<f64>;
pub type CutPolytope = geometry::Polytope<f64>;
