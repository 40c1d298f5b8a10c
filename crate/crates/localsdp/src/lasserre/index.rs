use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of atoms encoded as a 64-bit mask.
///
/// Sets are ordered by size first and then by mask, so sorted families list
/// `∅`, the singletons, the pairs and so on.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct SubsetIndex(u64);

impl SubsetIndex {
    pub const EMPTY: SubsetIndex = SubsetIndex(0);
    pub const CAPACITY: usize = 64;

    pub fn from_bits(bits: u64) -> Self {
        SubsetIndex(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(i: usize) -> Self {
        assert!(i < Self::CAPACITY, "atom {i} exceeds the 64-atom capacity");
        SubsetIndex(1 << i)
    }

    pub fn from_members(members: &[usize]) -> Result<Self> {
        let mut bits = 0u64;
        for &m in members {
            if m >= Self::CAPACITY {
                return Err(Error::InvalidInput(format!("atom {m} exceeds the 64-atom capacity")));
            }
            bits |= 1 << m;
        }
        Ok(SubsetIndex(bits))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, i: usize) -> bool {
        i < Self::CAPACITY && self.0 >> i & 1 == 1
    }

    pub fn union(self, other: Self) -> Self {
        SubsetIndex(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        SubsetIndex(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        SubsetIndex(self.0 & !other.0)
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn with(self, i: usize) -> Self {
        self.union(Self::singleton(i))
    }

    pub fn members(self) -> Members {
        Members(self.0)
    }

    /// Every subset of `self`, including `∅` and `self`.
    pub fn subsets(self) -> impl Iterator<Item = SubsetIndex> {
        let full = self.0;
        let mut next = Some(0u64);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full { None } else { Some((cur.wrapping_sub(full)) & full) };
            Some(SubsetIndex(cur))
        })
    }
}

impl Ord for SubsetIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len().cmp(&other.len()).then(self.0.cmp(&other.0))
    }
}

impl PartialOrd for SubsetIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::ops::BitOr for SubsetIndex {
    type Output = SubsetIndex;
    fn bitor(self, rhs: Self) -> Self {
        self.union(rhs)
    }
}

impl From<SubsetIndex> for Vec<usize> {
    fn from(s: SubsetIndex) -> Self {
        s.members().collect()
    }
}

impl TryFrom<Vec<usize>> for SubsetIndex {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        SubsetIndex::from_members(&v)
    }
}

impl fmt::Display for SubsetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, m) in self.members().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for SubsetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub struct Members(u64);

impl Iterator for Members {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }
}

/// Indicator atoms of a labeling problem.
///
/// Each of the `vars` variables takes a label in `0..labels`. Label 0 has no
/// atom of its own; labels `1..labels` are atoms, so a binary problem has one
/// atom per variable. Two atoms of the same variable never hold together, and
/// further pairs can be declared incompatible.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomSpace {
    vars: usize,
    labels: usize,
    conflicts: Vec<u64>,
}

impl AtomSpace {
    pub fn binary(vars: usize) -> Result<Self> {
        Self::labeled(vars, 2)
    }

    pub fn labeled(vars: usize, labels: usize) -> Result<Self> {
        if labels < 2 {
            return Err(Error::InvalidInput("at least two labels are needed".into()));
        }
        let atoms = vars * (labels - 1);
        if atoms > SubsetIndex::CAPACITY {
            return Err(Error::InvalidInput(format!(
                "{vars} variables with {labels} labels need {atoms} atoms, above the capacity of 64"
            )));
        }
        let per = labels - 1;
        let conflicts = (0..atoms)
            .map(|a| {
                let v = a / per;
                let block = if per == 64 { u64::MAX } else { ((1u64 << per) - 1) << (v * per) };
                block & !(1u64 << a)
            })
            .collect();
        Ok(AtomSpace { vars, labels, conflicts })
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn atoms(&self) -> usize {
        self.conflicts.len()
    }

    /// Atom of `label` on `var`; `None` for label 0.
    pub fn atom(&self, var: usize, label: usize) -> Option<usize> {
        assert!(var < self.vars && label < self.labels, "variable or label out of range");
        (label > 0).then(|| var * (self.labels - 1) + label - 1)
    }

    pub fn var_of(&self, atom: usize) -> usize {
        atom / (self.labels - 1)
    }

    pub fn label_of(&self, atom: usize) -> usize {
        atom % (self.labels - 1) + 1
    }

    /// All atoms of one variable.
    pub fn var_atoms(&self, var: usize) -> SubsetIndex {
        let per = self.labels - 1;
        let block = if per == 64 { u64::MAX } else { ((1u64 << per) - 1) << (var * per) };
        SubsetIndex(block)
    }

    pub fn atoms_of_vars(&self, vars: &[usize]) -> SubsetIndex {
        vars.iter().fold(SubsetIndex::EMPTY, |acc, &v| acc | self.var_atoms(v))
    }

    /// Variables touched by an atom set, ascending.
    pub fn vars_of(&self, s: SubsetIndex) -> Vec<usize> {
        let mut out: Vec<usize> = s.members().map(|a| self.var_of(a)).collect();
        out.dedup();
        out
    }

    pub fn all_atoms(&self) -> SubsetIndex {
        let n = self.atoms();
        SubsetIndex(if n == 64 { u64::MAX } else { (1u64 << n) - 1 })
    }

    /// Declares that atoms `a` and `b` can never hold together.
    pub fn forbid(&mut self, a: usize, b: usize) -> Result<()> {
        if a >= self.atoms() || b >= self.atoms() || a == b {
            return Err(Error::InvalidInput(format!("cannot forbid atom pair ({a}, {b})")));
        }
        self.conflicts[a] |= 1 << b;
        self.conflicts[b] |= 1 << a;
        Ok(())
    }

    pub fn is_forbidden(&self, a: usize, b: usize) -> bool {
        a < self.atoms() && b < self.atoms() && self.conflicts[a] >> b & 1 == 1
    }

    /// Whether the atoms of `s` can hold simultaneously.
    pub fn admissible(&self, s: SubsetIndex) -> bool {
        if !s.is_subset_of(self.all_atoms()) {
            return false;
        }
        s.members().all(|a| self.conflicts[a] & s.0 == 0)
    }

    /// Admissible subsets of `universe` with at most `max` atoms, sorted.
    pub fn subsets_within(&self, universe: SubsetIndex, max: usize) -> Vec<SubsetIndex> {
        let members: Vec<usize> = universe.members().collect();
        let mut out = vec![SubsetIndex::EMPTY];
        let mut frontier = vec![(SubsetIndex::EMPTY, 0usize)];
        for _ in 0..max {
            let mut next = Vec::new();
            for &(s, start) in &frontier {
                for (pos, &a) in members.iter().enumerate().skip(start) {
                    if self.conflicts[a] & s.0 != 0 {
                        continue;
                    }
                    let t = s.with(a);
                    out.push(t);
                    next.push((t, pos + 1));
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        out.sort_unstable();
        out
    }

    /// Admissible atom sets of size at most `max`.
    pub fn all_subsets(&self, max: usize) -> Vec<SubsetIndex> {
        self.subsets_within(self.all_atoms(), max)
    }
}

/// `{A ∪ B ∪ C : A, B ∈ family, |C| ≤ d}` restricted to admissible sets, sorted.
pub fn extend_index_family(space: &AtomSpace, family: &[SubsetIndex], d: usize) -> Vec<SubsetIndex> {
    let small = space.all_subsets(d);
    let mut pairs = HashSet::new();
    for (i, a) in family.iter().enumerate() {
        for b in &family[i..] {
            let ab = *a | *b;
            if space.admissible(ab) {
                pairs.insert(ab);
            }
        }
    }
    let mut out = HashSet::new();
    for ab in pairs {
        for c in &small {
            let u = ab | *c;
            if space.admissible(u) {
                out.insert(u);
            }
        }
    }
    let mut out: Vec<SubsetIndex> = out.into_iter().collect();
    out.sort_unstable();
    out
}

/// A labeling of finitely many variables, kept sorted by variable.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Labeling {
    pairs: Vec<(usize, usize)>,
}

impl Labeling {
    pub fn empty() -> Self {
        Labeling::default()
    }

    pub fn new(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
        pairs.sort_unstable();
        pairs.dedup();
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("labeling assigns two labels to one variable".into()));
        }
        Ok(Labeling { pairs })
    }

    pub fn single(var: usize, label: usize) -> Self {
        Labeling { pairs: vec![(var, label)] }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|p| p.0)
    }

    pub fn label(&self, var: usize) -> Option<usize> {
        self.pairs.binary_search_by_key(&var, |p| p.0).ok().map(|i| self.pairs[i].1)
    }

    /// Union of two labelings, or `None` when they disagree on a shared variable.
    pub fn compose(&self, other: &Labeling) -> Option<Labeling> {
        let mut pairs = self.pairs.clone();
        for &(v, l) in &other.pairs {
            match self.label(v) {
                Some(m) if m != l => return None,
                Some(_) => {}
                None => pairs.push((v, l)),
            }
        }
        pairs.sort_unstable();
        Some(Labeling { pairs })
    }

    pub fn restrict(&self, vars: &[usize]) -> Labeling {
        Labeling { pairs: self.pairs.iter().copied().filter(|p| vars.contains(&p.0)).collect() }
    }

    /// All `labels^|vars|` labelings of `vars`, in lexicographic order.
    pub fn all(vars: &[usize], labels: usize) -> Vec<Labeling> {
        let mut vars = vars.to_vec();
        vars.sort_unstable();
        vars.dedup();
        let mut out = vec![Labeling::empty()];
        for &v in &vars {
            out = out
                .into_iter()
                .flat_map(|f| {
                    (0..labels).map(move |l| {
                        let mut pairs = f.pairs.clone();
                        pairs.push((v, l));
                        Labeling { pairs }
                    })
                })
                .collect();
        }
        out
    }

    /// Signed atom sets whose vectors sum to the indicator vector of this labeling.
    ///
    /// Labels `≥ 1` contribute their atom; label 0 on `u` expands as
    /// `1 − Σ_i x_{u,i}`. Terms whose atom set is inadmissible are dropped since
    /// their moments vanish.
    pub fn expansion(&self, space: &AtomSpace) -> Vec<(SubsetIndex, f64)> {
        let mut base = SubsetIndex::EMPTY;
        let mut zeros = Vec::new();
        for &(v, l) in &self.pairs {
            match space.atom(v, l) {
                Some(a) => base = base.with(a),
                None => zeros.push(v),
            }
        }
        if !space.admissible(base) {
            return Vec::new();
        }
        let mut terms = vec![(base, 1.0)];
        for v in zeros {
            let mut next = Vec::with_capacity(terms.len() * space.labels());
            for &(s, sign) in &terms {
                next.push((s, sign));
                for a in space.var_atoms(v).members() {
                    let t = s.with(a);
                    if space.admissible(t) {
                        next.push((t, -sign));
                    }
                }
            }
            terms = next;
        }
        terms
    }
}

impl fmt::Display for Labeling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, (v, l)) in self.pairs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}:{l}")?;
        }
        write!(f, "]")
    }
}
