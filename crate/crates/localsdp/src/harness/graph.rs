use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::symmetric_eigen;

/// Largest vertex count the harness accepts.
pub const MAX_VERTICES: usize = 64;

/// An undirected weighted graph on vertices `0..n`. Parallel edges are merged
/// by adding their weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    vertices: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl Graph {
    pub fn empty(vertices: usize) -> Self {
        Graph { vertices, edges: Vec::new() }
    }

    pub fn from_edges(vertices: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut g = Graph::empty(vertices);
        for (u, v, w) in edges {
            g.add_edge(u, v, w)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, u: usize, v: usize, w: f64) -> Result<()> {
        if u == v {
            return Err(Error::InvalidInput(format!("self-loop at vertex {}", u + 1)));
        }
        if u >= self.vertices || v >= self.vertices {
            return Err(Error::InvalidInput(format!("edge ({}, {}) outside {} vertices", u + 1, v + 1, self.vertices)));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::InvalidInput(format!("edge weight must be positive and finite, got {w}")));
        }
        let (a, b) = (u.min(v), u.max(v));
        match self.edges.iter_mut().find(|e| e.0 == a && e.1 == b) {
            Some(e) => e.2 += w,
            None => self.edges.push((a, b, w)),
        }
        Ok(())
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    /// Edges `(u, v, w)` with `u < v`, in insertion order.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.vertices];
        for &(u, v, w) in &self.edges {
            d[u] += w;
            d[v] += w;
        }
        d
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.vertices, self.vertices);
        for &(u, v, w) in &self.edges {
            a[(u, v)] = w;
            a[(v, u)] = w;
        }
        a
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices == 0 {
            return true;
        }
        let mut seen = vec![false; self.vertices];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(a, b, _) in &self.edges {
                let other = if a == u { b } else if b == u { a } else { continue };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Graph::path(n);
        if n >= 3 {
            g.add_edge(n - 1, 0, 1.0).expect("cycle edge is valid");
        }
        g
    }

    pub fn path(n: usize) -> Self {
        Graph::from_edges(n, (1..n).map(|v| (v - 1, v, 1.0))).expect("path edges are valid")
    }

    pub fn complete(n: usize) -> Self {
        Graph::from_edges(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v, 1.0)))).expect("valid edges")
    }

    /// Outer 5-cycle `0..5`, inner pentagram `5..10`, spokes `i – i+5`.
    pub fn petersen() -> Self {
        let outer = (0..5).map(|i| (i, (i + 1) % 5, 1.0));
        let inner = (0..5).map(|i| (5 + i, 5 + (i + 2) % 5, 1.0));
        let spokes = (0..5).map(|i| (i, i + 5, 1.0));
        Graph::from_edges(10, outer.chain(inner).chain(spokes)).expect("valid edges")
    }

    /// Parses an edge list: one `u v [w]` per line, 1-indexed, `#` comments.
    /// The vertex count is the largest index seen.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = Vec::new();
        let mut n = 0;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse { line: line_no, message };
            let fields: Vec<&str> = content.split_whitespace().collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(bad(format!("expected `u v [w]`, found {} fields", fields.len())));
            }
            let vertex = |s: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(bad(format!("vertex `{s}` is not a positive integer"))),
                }
            };
            let (u, v) = (vertex(fields[0])?, vertex(fields[1])?);
            let w = match fields.get(2) {
                None => 1.0,
                Some(s) => s.parse::<f64>().map_err(|_| bad(format!("weight `{s}` is not a number")))?,
            };
            if u == v {
                return Err(bad(format!("self-loop at vertex {}", u + 1)));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(bad(format!("weight {w} must be positive and finite")));
            }
            n = n.max(u + 1).max(v + 1);
            raw.push((u, v, w));
        }
        if n > MAX_VERTICES {
            return Err(Error::InvalidInput(format!("{n} vertices exceed the limit of {MAX_VERTICES}")));
        }
        Graph::from_edges(n, raw)
    }

    /// The edge-list text read by [`Graph::parse`].
    pub fn to_edge_list(&self) -> String {
        self.edges.iter().map(|&(u, v, w)| format!("{} {} {w}\n", u + 1, v + 1)).collect()
    }
}

/// Reads an edge-list file.
pub fn ingest_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Graph::parse(&text)
}

/// Normalized-Laplacian eigenvalues in ascending order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Vertices of degree zero; their rows of the Laplacian are left at zero.
    pub isolated: Vec<usize>,
}

impl Spectrum {
    /// `λ_r`, 1-indexed.
    pub fn lambda(&self, r: usize) -> Option<f64> {
        r.checked_sub(1).and_then(|i| self.values.get(i)).copied()
    }
}

/// Eigenvalues of `I − D^{−1/2} A D^{−1/2}`.
pub fn laplacian_spectrum(graph: &Graph) -> Spectrum {
    let n = graph.vertices();
    let d = graph.degrees();
    let isolated: Vec<usize> = (0..n).filter(|&u| d[u] == 0.0).collect();
    let a = graph.adjacency();
    let l = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            if d[i] > 0.0 {
                1.0
            } else {
                0.0
            }
        } else if a[(i, j)] != 0.0 {
            -a[(i, j)] / (d[i] * d[j]).sqrt()
        } else {
            0.0
        }
    });
    let mut values: Vec<f64> = if n == 0 {
        Vec::new()
    } else {
        symmetric_eigen(l).map(|e| e.eigenvalues.iter().copied().collect()).unwrap_or_default()
    };
    values.sort_by(f64::total_cmp);
    Spectrum { values, isolated }
}
