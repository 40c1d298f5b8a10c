use std::collections::BTreeMap;

use crate::error::Result;
use crate::lasserre::index::{AtomSpace, Labeling, SubsetIndex};
use crate::lasserre::moments::PseudoMoments;
use crate::scalar::Scalar;

/// Multilinear polynomial in the atoms, as a sparse map from monomials to coefficients.
///
/// Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Polynomial<T: Scalar> {
    terms: BTreeMap<SubsetIndex, T>,
}

impl<T: Scalar> Polynomial<T> {
    pub fn zero() -> Self {
        Polynomial { terms: BTreeMap::new() }
    }

    pub fn constant(c: T) -> Self {
        Self::monomial(SubsetIndex::EMPTY, c)
    }

    pub fn monomial(s: SubsetIndex, c: T) -> Self {
        let mut p = Self::zero();
        p.add_term(s, c);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (SubsetIndex, T)>) -> Self {
        let mut p = Self::zero();
        for (s, c) in terms {
            p.add_term(s, c);
        }
        p
    }

    /// Indicator of `var` carrying `label`.
    pub fn indicator(space: &AtomSpace, var: usize, label: usize) -> Self {
        match space.atom(var, label) {
            Some(a) => Self::monomial(SubsetIndex::singleton(a), T::one()),
            None => {
                let mut p = Self::constant(T::one());
                for a in space.var_atoms(var).members() {
                    p.add_term(SubsetIndex::singleton(a), -T::one());
                }
                p
            }
        }
    }

    pub fn add_term(&mut self, s: SubsetIndex, c: T) {
        let entry = self.terms.entry(s).or_insert_with(T::zero);
        *entry += c;
        if *entry == T::zero() {
            self.terms.remove(&s);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (SubsetIndex, T)> + '_ {
        self.terms.iter().map(|(s, c)| (*s, *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, s: SubsetIndex) -> T {
        self.terms.get(&s).copied().unwrap_or_else(T::zero)
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|s| s.len()).max().unwrap_or(0)
    }

    pub fn scale(&self, c: T) -> Self {
        Self::from_terms(self.terms().map(|(s, v)| (s, v * c)))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (s, c) in other.terms() {
            p.add_term(s, c);
        }
        p
    }

    /// Product reduced by `x² = x`; monomials that cannot hold are dropped.
    pub fn mul(&self, other: &Self, space: &AtomSpace) -> Self {
        let mut p = Self::zero();
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                let u = a | b;
                if space.admissible(u) {
                    p.add_term(u, ca * cb);
                }
            }
        }
        p
    }

    /// Value at a full labeling of the variables.
    pub fn evaluate(&self, space: &AtomSpace, labels: &[usize]) -> T {
        self.terms()
            .filter(|(s, _)| s.members().all(|a| labels[space.var_of(a)] == space.label_of(a)))
            .fold(T::zero(), |acc, (_, c)| acc + c)
    }

    /// `Σ_S P_S y_S`.
    pub fn pair(&self, y: &PseudoMoments<T>) -> Result<T> {
        self.terms().try_fold(T::zero(), |acc, (s, c)| Ok(acc + c * y.get(s)?))
    }

    /// Labels each monomial for error messages.
    pub fn describe(&self) -> String {
        let parts: Vec<String> = self.terms().map(|(s, c)| format!("{c}·x{s}")).collect();
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join(" + ")
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ConstraintKind {
    /// `P(x) ≥ 0`.
    NonNegative,
    /// `P(x) = 0`.
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialConstraint<T: Scalar> {
    pub poly: Polynomial<T>,
    pub kind: ConstraintKind,
}

impl<T: Scalar> PolynomialConstraint<T> {
    pub fn nonnegative(poly: Polynomial<T>) -> Self {
        PolynomialConstraint { poly, kind: ConstraintKind::NonNegative }
    }

    pub fn zero(poly: Polynomial<T>) -> Self {
        PolynomialConstraint { poly, kind: ConstraintKind::Zero }
    }

    pub fn holds(&self, space: &AtomSpace, labels: &[usize], tol: T) -> bool {
        let v = self.poly.evaluate(space, labels);
        match self.kind {
            ConstraintKind::NonNegative => v >= -tol,
            ConstraintKind::Zero => v.abs() <= tol,
        }
    }
}

/// `(P ∗ y)_S = Σ_T P_T · y_{T∪S}`.
pub fn shift_at<T: Scalar>(p: &Polynomial<T>, y: &PseudoMoments<T>, s: SubsetIndex) -> Result<T> {
    p.terms().try_fold(T::zero(), |acc, (t, c)| Ok(acc + c * y.get(t | s)?))
}

/// The shifted moments `P ∗ y` on every set of `family`.
pub fn shift_operator<T: Scalar>(
    p: &Polynomial<T>,
    y: &PseudoMoments<T>,
    family: &[SubsetIndex],
) -> Result<BTreeMap<SubsetIndex, T>> {
    family.iter().map(|&s| Ok((s, shift_at(p, y, s)?))).collect()
}

/// Probability-like value of a labeling event, `‖x_S(f)‖²`.
pub fn event_moment<T: Scalar>(y: &PseudoMoments<T>, f: &Labeling) -> Result<T> {
    f.expansion(y.space()).into_iter().try_fold(T::zero(), |acc, (s, sign)| {
        Ok(acc + T::lit(sign) * y.get(s)?)
    })
}
