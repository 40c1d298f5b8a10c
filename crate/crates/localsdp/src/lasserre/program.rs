use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasserre::index::{AtomSpace, SubsetIndex};
use crate::lasserre::polynomial::{ConstraintKind, Polynomial, PolynomialConstraint};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Optimize a polynomial over labelings subject to polynomial constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialProgram<T: Scalar> {
    pub space: AtomSpace,
    pub objective: Polynomial<T>,
    pub sense: Sense,
    pub constraints: Vec<PolynomialConstraint<T>>,
}

/// Largest search space [`PolynomialProgram::brute_force`] accepts.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

impl<T: Scalar> PolynomialProgram<T> {
    pub fn new(space: AtomSpace, objective: Polynomial<T>, sense: Sense) -> Self {
        PolynomialProgram { space, objective, sense, constraints: Vec::new() }
    }

    pub fn with_constraint(mut self, c: PolynomialConstraint<T>) -> Self {
        self.constraints.push(c);
        self
    }

    /// Largest degree among the objective and the constraints.
    pub fn degree(&self) -> usize {
        self.constraints.iter().map(|c| c.poly.degree()).fold(self.objective.degree(), usize::max)
    }

    pub fn feasible(&self, labels: &[usize], tol: T) -> bool {
        labels.len() == self.space.vars()
            && labels.iter().enumerate().all(|(v, &l)| {
                l < self.space.labels()
                    && (0..v).all(|u| {
                        let (a, b) = (self.space.atom(u, labels[u]), self.space.atom(v, l));
                        !matches!((a, b), (Some(a), Some(b)) if self.space.is_forbidden(a, b))
                    })
            })
            && self.constraints.iter().all(|c| c.holds(&self.space, labels, tol))
    }

    pub fn value(&self, labels: &[usize]) -> T {
        self.objective.evaluate(&self.space, labels)
    }

    /// Exhaustive optimum and a witness labeling, or `None` when nothing is feasible.
    pub fn brute_force(&self) -> Result<Option<(T, Vec<usize>)>> {
        self.brute_force_within(BRUTE_FORCE_LIMIT)
    }

    /// [`PolynomialProgram::brute_force`] with a caller-chosen search-space limit.
    pub fn brute_force_within(&self, limit: f64) -> Result<Option<(T, Vec<usize>)>> {
        let n = self.space.vars();
        let k = self.space.labels();
        let size = (k as f64).powi(n as i32);
        if size > limit {
            return Err(Error::TooLarge(format!("{k}^{n} labelings exceed {limit:e}")));
        }
        let tol = T::lit(1e-9);
        let mut labels = vec![0usize; n];
        let mut best: Option<(T, Vec<usize>)> = None;
        loop {
            if self.feasible(&labels, tol) {
                let v = self.value(&labels);
                let better = match &best {
                    None => true,
                    Some((b, _)) => match self.sense {
                        Sense::Minimize => v < *b,
                        Sense::Maximize => v > *b,
                    },
                };
                if better {
                    best = Some((v, labels.clone()));
                }
            }
            let mut i = 0;
            while i < n && labels[i] == k - 1 {
                labels[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
            labels[i] += 1;
        }
        Ok(best)
    }
}

/// A program read from text together with the optional hierarchy settings it names.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgramFile {
    pub program: PolynomialProgram<f64>,
    pub rounds: Option<usize>,
    pub degree: Option<usize>,
}

/// Parses the line-based program format.
///
/// ```text
/// # maximum cut of a single edge
/// vars 2
/// labels 2
/// rounds 1
/// objective max
/// term 1 1
/// term 1 2
/// term -2 1 2
/// constraint ge
/// term 1
/// term -1 1 2
/// forbid 1:1 2:1
/// ```
///
/// Variables are 1-indexed. A factor `v` is the atom of label 1 on `v`, and
/// `v:i` the atom of label `i ≥ 1`. Each `term` line adds a coefficient and
/// its monomial to the latest `objective` or `constraint` section
/// (`ge` for `≥ 0`, `eq` for `= 0`).
pub fn parse_program(text: &str) -> Result<ProgramFile> {
    let mut vars: Option<usize> = None;
    let mut labels = 2usize;
    let mut rounds = None;
    let mut degree = None;
    let mut sense = None;
    let mut sections: Vec<(Option<ConstraintKind>, Vec<(f64, Vec<(usize, usize)>)>)> = Vec::new();
    let mut forbids: Vec<((usize, usize), (usize, usize))> = Vec::new();

    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let parse_usize = |line: usize, s: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|_| parse_err(line, format!("expected a nonnegative integer, got `{s}`")))
    };
    let parse_factor = |line: usize, s: &str| -> Result<(usize, usize)> {
        let (v, l) = match s.split_once(':') {
            Some((v, l)) => (v, l),
            None => (s, "1"),
        };
        let v = parse_usize(line, v)?;
        let l = parse_usize(line, l)?;
        if v == 0 {
            return Err(parse_err(line, "variables are 1-indexed".into()));
        }
        if l == 0 {
            return Err(parse_err(line, "label 0 has no atom; expand it as 1 minus the other labels".into()));
        }
        Ok((v - 1, l))
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut words = content.split_whitespace();
        let key = words.next().unwrap_or("");
        let rest: Vec<&str> = words.collect();
        let one = |rest: &[&str]| -> Result<usize> {
            match rest {
                [w] => parse_usize(line, w),
                _ => Err(parse_err(line, format!("`{key}` takes exactly one value"))),
            }
        };
        match key {
            "vars" => vars = Some(one(&rest)?),
            "labels" => labels = one(&rest)?,
            "rounds" => rounds = Some(one(&rest)?),
            "degree" => degree = Some(one(&rest)?),
            "objective" => {
                if sense.is_some() {
                    return Err(parse_err(line, "second objective section".into()));
                }
                sense = Some(match rest.as_slice() {
                    ["min"] => Sense::Minimize,
                    ["max"] => Sense::Maximize,
                    _ => return Err(parse_err(line, "objective must be `min` or `max`".into())),
                });
                sections.push((None, Vec::new()));
            }
            "constraint" => {
                let kind = match rest.as_slice() {
                    ["ge"] => ConstraintKind::NonNegative,
                    ["eq"] => ConstraintKind::Zero,
                    _ => return Err(parse_err(line, "constraint must be `ge` or `eq`".into())),
                };
                sections.push((Some(kind), Vec::new()));
            }
            "term" => {
                let (coef, factors) = rest
                    .split_first()
                    .ok_or_else(|| parse_err(line, "term needs a coefficient".into()))?;
                let coef: f64 =
                    coef.parse().map_err(|_| parse_err(line, format!("bad coefficient `{coef}`")))?;
                let factors: Result<Vec<(usize, usize)>> = factors.iter().map(|f| parse_factor(line, f)).collect();
                let section =
                    sections.last_mut().ok_or_else(|| parse_err(line, "term outside a section".into()))?;
                section.1.push((coef, factors?));
            }
            "forbid" => match rest.as_slice() {
                [a, b] => forbids.push((parse_factor(line, a)?, parse_factor(line, b)?)),
                _ => return Err(parse_err(line, "forbid takes two factors".into())),
            },
            other => return Err(parse_err(line, format!("unknown keyword `{other}`"))),
        }
    }

    let vars = vars.ok_or_else(|| parse_err(0, "missing `vars`".into()))?;
    let mut space = AtomSpace::labeled(vars, labels)?;
    let atom_of = |(v, l): (usize, usize)| -> Result<usize> {
        if v >= vars || l >= labels {
            return Err(Error::InvalidInput(format!("factor {}:{l} out of range", v + 1)));
        }
        Ok(space.atom(v, l).expect("label is positive"))
    };
    let mut forbidden = Vec::new();
    for (a, b) in forbids {
        forbidden.push((atom_of(a)?, atom_of(b)?));
    }
    let monomial = |factors: &[(usize, usize)]| -> Result<SubsetIndex> {
        let atoms: Result<Vec<usize>> = factors.iter().map(|&f| atom_of(f)).collect();
        SubsetIndex::from_members(&atoms?)
    };
    let mut objective = Polynomial::zero();
    let mut constraints = Vec::new();
    for (kind, terms) in &sections {
        let mut p = Polynomial::zero();
        for (c, factors) in terms {
            p.add_term(monomial(factors)?, *c);
        }
        match kind {
            None => objective = p,
            Some(kind) => constraints.push(PolynomialConstraint { poly: p, kind: *kind }),
        }
    }
    for (a, b) in forbidden {
        space.forbid(a, b)?;
    }
    let program = PolynomialProgram {
        space,
        objective,
        sense: sense.ok_or_else(|| parse_err(0, "missing `objective`".into()))?,
        constraints,
    };
    if let Some(d) = degree {
        if program.degree() > d {
            return Err(Error::InvalidInput(format!("program has degree {} above the declared {d}", program.degree())));
        }
    }
    Ok(ProgramFile { program, rounds, degree })
}

/// Writes a program in the format read by [`parse_program`].
pub fn format_program(program: &PolynomialProgram<f64>, rounds: Option<usize>) -> String {
    let space = &program.space;
    let factor = |a: usize| {
        let (v, l) = (space.var_of(a) + 1, space.label_of(a));
        if l == 1 {
            v.to_string()
        } else {
            format!("{v}:{l}")
        }
    };
    let mut out = String::new();
    let _ = writeln!(out, "vars {}", space.vars());
    let _ = writeln!(out, "labels {}", space.labels());
    if let Some(r) = rounds {
        let _ = writeln!(out, "rounds {r}");
    }
    let write_terms = |out: &mut String, p: &Polynomial<f64>| {
        for (s, c) in p.terms() {
            let fs: Vec<String> = s.members().map(factor).collect();
            let _ = writeln!(out, "term {c} {}", fs.join(" "));
        }
    };
    let _ = writeln!(out, "objective {}", if program.sense == Sense::Minimize { "min" } else { "max" });
    write_terms(&mut out, &program.objective);
    for c in &program.constraints {
        let _ = writeln!(out, "constraint {}", if c.kind == ConstraintKind::Zero { "eq" } else { "ge" });
        write_terms(&mut out, &c.poly);
    }
    for a in 0..space.atoms() {
        for b in a + 1..space.atoms() {
            if space.is_forbidden(a, b) && space.var_of(a) != space.var_of(b) {
                let _ = writeln!(out, "forbid {} {}", factor(a), factor(b));
            }
        }
    }
    out
}
