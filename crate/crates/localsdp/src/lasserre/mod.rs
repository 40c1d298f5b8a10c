//! Moment relaxations of labeling programs and the conditioning calculus of
//! their vector solutions.

pub mod index;
pub mod moments;
pub mod polynomial;
pub mod program;
pub mod relaxation;
pub mod vectors;

pub use index::{extend_index_family, AtomSpace, Labeling, SubsetIndex};
pub use moments::{moment_matrix, PseudoMoments};
pub use polynomial::{event_moment, shift_at, shift_operator, ConstraintKind, Polynomial, PolynomialConstraint};
pub use program::{format_program, parse_program, PolynomialProgram, ProgramFile, Sense};
pub use relaxation::{
    local_block_matrix, localizing_matrix, Block, BlockId, BlockReport, LevelRelaxation, LevelReport, Relaxation,
    SeedFamily,
};
pub use vectors::{
    cholesky_vectors, condition, conditional_projection, covariance, expected_conditional_variance, label_vectors,
    seed_vectors, variance, ConditionedVectors, LabelVectors,
};
