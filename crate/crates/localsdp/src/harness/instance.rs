use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::graph::{Graph, MAX_VERTICES};
use crate::lasserre::{
    AtomSpace, Polynomial, PolynomialConstraint, PolynomialProgram, ProgramFile, Sense, SubsetIndex,
};

/// Problem families the harness can build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "maxcut")]
    MaxCut,
    #[serde(rename = "minbisection")]
    MinBisection,
    #[serde(rename = "independent-set")]
    IndependentSet,
    #[serde(rename = "coloring")]
    Coloring,
    #[serde(rename = "2csp")]
    TwoCsp,
    #[serde(rename = "raw-polynomial")]
    RawPolynomial,
}

impl Mode {
    pub const ALL: [Mode; 6] =
        [Mode::MaxCut, Mode::MinBisection, Mode::IndependentSet, Mode::Coloring, Mode::TwoCsp, Mode::RawPolynomial];

    pub fn name(self) -> &'static str {
        match self {
            Mode::MaxCut => "maxcut",
            Mode::MinBisection => "minbisection",
            Mode::IndependentSet => "independent-set",
            Mode::Coloring => "coloring",
            Mode::TwoCsp => "2csp",
            Mode::RawPolynomial => "raw-polynomial",
        }
    }

    /// Whether the mode reads a graph rather than a program file.
    pub fn uses_graph(self) -> bool {
        self != Mode::RawPolynomial
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown mode `{s}`")))
    }
}

/// Relation every 2-CSP edge asks for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CspRelation {
    #[default]
    Equal,
    Unequal,
}

impl FromStr for CspRelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(CspRelation::Equal),
            "unequal" => Ok(CspRelation::Unequal),
            _ => Err(Error::InvalidInput(format!("unknown relation `{s}`"))),
        }
    }
}

/// A polynomial program together with the graph it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub mode: Mode,
    pub graph: Option<Graph>,
    pub relation: CspRelation,
    pub program: PolynomialProgram<f64>,
    /// Hierarchy round named by a program file.
    pub rounds: Option<usize>,
}

fn check_size(graph: &Graph) -> Result<()> {
    if graph.vertices() > MAX_VERTICES {
        return Err(Error::InvalidInput(format!("{} vertices exceed the limit of {MAX_VERTICES}", graph.vertices())));
    }
    if graph.vertices() == 0 {
        return Err(Error::InvalidInput("graph has no vertices".into()));
    }
    Ok(())
}

/// `Σ_e w_e (x_u + x_v − 2 x_u x_v)`, the weight of edges cut.
fn cut_polynomial(space: &AtomSpace, graph: &Graph) -> Polynomial<f64> {
    let mut p = Polynomial::zero();
    for &(u, v, w) in graph.edges() {
        let (a, b) = (space.atom(u, 1).expect("binary atom"), space.atom(v, 1).expect("binary atom"));
        p.add_term(SubsetIndex::singleton(a), w);
        p.add_term(SubsetIndex::singleton(b), w);
        p.add_term(SubsetIndex::singleton(a).with(b), -2.0 * w);
    }
    p
}

impl Instance {
    fn from_graph(mode: Mode, graph: Graph, program: PolynomialProgram<f64>) -> Self {
        Instance { mode, graph: Some(graph), relation: CspRelation::Equal, program, rounds: None }
    }

    pub fn max_cut(graph: Graph) -> Result<Self> {
        check_size(&graph)?;
        let space = AtomSpace::binary(graph.vertices())?;
        let objective = cut_polynomial(&space, &graph);
        let program = PolynomialProgram::new(space, objective, Sense::Maximize);
        Ok(Instance::from_graph(Mode::MaxCut, graph, program))
    }

    /// Minimum cut with exactly `⌊n/2⌋` vertices on side 1.
    pub fn min_bisection(graph: Graph) -> Result<Self> {
        check_size(&graph)?;
        let n = graph.vertices();
        let space = AtomSpace::binary(n)?;
        let objective = cut_polynomial(&space, &graph);
        let mut balance = Polynomial::constant(-((n / 2) as f64));
        for u in 0..n {
            balance.add_term(SubsetIndex::singleton(space.atom(u, 1).expect("binary atom")), 1.0);
        }
        let program =
            PolynomialProgram::new(space, objective, Sense::Minimize).with_constraint(PolynomialConstraint::zero(balance));
        Ok(Instance::from_graph(Mode::MinBisection, graph, program))
    }

    /// Largest set of pairwise non-adjacent vertices (label 1 = in the set).
    pub fn independent_set(graph: Graph) -> Result<Self> {
        check_size(&graph)?;
        let n = graph.vertices();
        let mut space = AtomSpace::binary(n)?;
        for &(u, v, _) in graph.edges() {
            let (a, b) = (space.atom(u, 1).expect("binary atom"), space.atom(v, 1).expect("binary atom"));
            space.forbid(a, b)?;
        }
        let objective =
            Polynomial::from_terms((0..n).map(|u| (SubsetIndex::singleton(space.atom(u, 1).expect("binary atom")), 1.0)));
        let program = PolynomialProgram::new(space, objective, Sense::Maximize);
        Ok(Instance::from_graph(Mode::IndependentSet, graph, program))
    }

    /// Proper `k`-coloring as a feasibility program with zero objective.
    pub fn coloring(graph: Graph, k: usize) -> Result<Self> {
        check_size(&graph)?;
        if k < 2 {
            return Err(Error::InvalidInput(format!("coloring needs at least 2 colors, got {k}")));
        }
        let n = graph.vertices();
        let mut space = AtomSpace::labeled(n, k)?;
        for &(u, v, _) in graph.edges() {
            for i in 1..k {
                let (a, b) = (space.atom(u, i).expect("atom"), space.atom(v, i).expect("atom"));
                space.forbid(a, b)?;
            }
        }
        let mut program = PolynomialProgram::new(space.clone(), Polynomial::zero(), Sense::Maximize);
        for &(u, v, _) in graph.edges() {
            let both = Polynomial::indicator(&space, u, 0).mul(&Polynomial::indicator(&space, v, 0), &space);
            program = program.with_constraint(PolynomialConstraint::zero(both));
        }
        Ok(Instance::from_graph(Mode::Coloring, graph, program))
    }

    /// Weighted fraction of edges whose labels satisfy `relation`.
    pub fn two_csp(graph: Graph, k: usize, relation: CspRelation) -> Result<Self> {
        check_size(&graph)?;
        if k < 2 {
            return Err(Error::InvalidInput(format!("2-CSP needs at least 2 labels, got {k}")));
        }
        let total = graph.total_weight();
        if total <= 0.0 {
            return Err(Error::InvalidInput("2-CSP instance has no constraints".into()));
        }
        let space = AtomSpace::labeled(graph.vertices(), k)?;
        let mut objective = Polynomial::zero();
        for &(u, v, w) in graph.edges() {
            let scale = w / total;
            let mut equal = Polynomial::zero();
            for i in 0..k {
                equal = equal.add(&Polynomial::indicator(&space, u, i).mul(&Polynomial::indicator(&space, v, i), &space));
            }
            let sat = match relation {
                CspRelation::Equal => equal,
                CspRelation::Unequal => Polynomial::constant(1.0).add(&equal.scale(-1.0)),
            };
            objective = objective.add(&sat.scale(scale));
        }
        let program = PolynomialProgram::new(space, objective, Sense::Maximize);
        Ok(Instance { mode: Mode::TwoCsp, graph: Some(graph), relation, program, rounds: None })
    }

    pub fn raw(file: ProgramFile) -> Self {
        Instance {
            mode: Mode::RawPolynomial,
            graph: None,
            relation: CspRelation::Equal,
            program: file.program,
            rounds: file.rounds,
        }
    }

    /// Builds the program of `mode` over `graph`; `k` is used by coloring and 2-CSP.
    pub fn build(mode: Mode, graph: Graph, k: usize, relation: CspRelation) -> Result<Self> {
        match mode {
            Mode::MaxCut => Instance::max_cut(graph),
            Mode::MinBisection => Instance::min_bisection(graph),
            Mode::IndependentSet => Instance::independent_set(graph),
            Mode::Coloring => Instance::coloring(graph, k),
            Mode::TwoCsp => Instance::two_csp(graph, k, relation),
            Mode::RawPolynomial => Err(Error::InvalidInput("raw-polynomial mode reads a program file".into())),
        }
    }

    pub fn vars(&self) -> usize {
        self.program.space.vars()
    }

    pub fn labels(&self) -> usize {
        self.program.space.labels()
    }

    /// Edges as weighted pairs, empty without a graph.
    pub fn demands(&self) -> Vec<(usize, usize, f64)> {
        self.graph.as_ref().map(|g| g.edges().to_vec()).unwrap_or_default()
    }

    /// Range `[lo, hi]` known to contain every objective value.
    pub fn objective_range(&self) -> (f64, f64) {
        let total = self.graph.as_ref().map(Graph::total_weight).unwrap_or(0.0);
        match self.mode {
            Mode::MaxCut | Mode::MinBisection => (0.0, total),
            Mode::IndependentSet => (0.0, self.vars() as f64),
            Mode::TwoCsp => (0.0, 1.0),
            Mode::Coloring => (0.0, 0.0),
            Mode::RawPolynomial => {
                let obj = &self.program.objective;
                let c = obj.coefficient(SubsetIndex::EMPTY);
                let spread: f64 = obj.terms().filter(|(s, _)| !s.is_empty()).map(|(_, v)| v.abs()).sum();
                (c - spread, c + spread)
            }
        }
    }
}

/// An exhaustive optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForce {
    pub value: f64,
    pub witness: Vec<usize>,
}

/// Search-space limit for binary modes: `2^20` labelings.
pub const BINARY_LIMIT: f64 = 1_048_576.0;
/// Search-space limit otherwise: `k^n ≤ 10⁶`.
pub const LABELED_LIMIT: f64 = 1e6;

/// Exhaustive optimum of the instance; `None` when nothing is feasible.
pub fn brute_force(instance: &Instance) -> Result<Option<BruteForce>> {
    let limit = if instance.labels() == 2 { BINARY_LIMIT } else { LABELED_LIMIT };
    Ok(instance
        .program
        .brute_force_within(limit)?
        .map(|(value, witness)| BruteForce { value, witness }))
}
