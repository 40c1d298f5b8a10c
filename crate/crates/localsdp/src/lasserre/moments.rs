use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lasserre::index::{AtomSpace, SubsetIndex};
use crate::scalar::Scalar;

/// Largest magnitude accepted for a stored moment.
pub const MOMENT_BOUND: f64 = 10.0;

/// Pseudo-moments `y_S` on a family of atom sets.
///
/// `y_∅ = 1` is a constant and never stored. Sets whose atoms cannot hold
/// together read as 0.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoMoments<T: Scalar> {
    space: AtomSpace,
    values: HashMap<SubsetIndex, T>,
}

impl<T: Scalar> PseudoMoments<T> {
    pub fn new(space: AtomSpace) -> Self {
        PseudoMoments { space, values: HashMap::new() }
    }

    /// Moments read off a coordinate vector.
    pub fn from_vector(space: AtomSpace, coords: &[SubsetIndex], y: &DVector<T>) -> Result<Self> {
        if coords.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: coords.len(), found: y.len() });
        }
        let mut m = Self::new(space);
        for (s, v) in coords.iter().zip(y.iter()) {
            m.insert(*s, *v)?;
        }
        Ok(m)
    }

    /// Exact moments of a distribution over full labelings, on `family`.
    pub fn from_distribution(space: AtomSpace, support: &[(Vec<usize>, T)], family: &[SubsetIndex]) -> Result<Self> {
        for (labels, _) in support {
            if labels.len() != space.vars() || labels.iter().any(|&l| l >= space.labels()) {
                return Err(Error::InvalidInput("distribution support has a malformed labeling".into()));
            }
        }
        let mut m = Self::new(space);
        for &s in family {
            if s.is_empty() || !m.space.admissible(s) {
                continue;
            }
            let v = support
                .iter()
                .filter(|(labels, _)| s.members().all(|a| labels[m.space.var_of(a)] == m.space.label_of(a)))
                .fold(T::zero(), |acc, (_, p)| acc + *p);
            m.insert(s, v)?;
        }
        Ok(m)
    }

    pub fn space(&self) -> &AtomSpace {
        &self.space
    }

    pub fn insert(&mut self, s: SubsetIndex, v: T) -> Result<()> {
        if s.is_empty() {
            if v != T::one() {
                return Err(Error::InvalidInput("y_∅ is pinned to 1".into()));
            }
            return Ok(());
        }
        if !v.is_finite() || v.abs() > T::lit(MOMENT_BOUND) {
            return Err(Error::InvalidInput(format!("moment y{s} = {v} outside the sanity bound")));
        }
        if !self.space.admissible(s) {
            if v.abs() > T::lit(1e-12) {
                return Err(Error::InvalidInput(format!("moment y{s} of an impossible event must be 0")));
            }
            return Ok(());
        }
        self.values.insert(s, v);
        Ok(())
    }

    pub fn get(&self, s: SubsetIndex) -> Result<T> {
        if s.is_empty() {
            return Ok(T::one());
        }
        if !self.space.admissible(s) {
            return Ok(T::zero());
        }
        self.values.get(&s).copied().ok_or_else(|| Error::MissingMoment(s.to_string()))
    }

    pub fn contains(&self, s: SubsetIndex) -> bool {
        s.is_empty() || !self.space.admissible(s) || self.values.contains_key(&s)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SubsetIndex, T)> + '_ {
        self.values.iter().map(|(s, v)| (*s, *v))
    }

    pub fn to_vector(&self, coords: &[SubsetIndex]) -> Result<DVector<T>> {
        let values: Result<Vec<T>> = coords.iter().map(|&s| self.get(s)).collect();
        Ok(DVector::from_vec(values?))
    }
}

/// `[y_{A∪B}]_{A,B ∈ family}`.
pub fn moment_matrix<T: Scalar>(y: &PseudoMoments<T>, family: &[SubsetIndex]) -> Result<DMatrix<T>> {
    let n = family.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = y.get(family[i] | family[j])?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}
