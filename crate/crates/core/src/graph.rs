//! Weighted undirected graphs, Laplacians, incidence factors and spectra.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A connected, simple, positively weighted undirected graph.
///
/// Serializes as `{"n": 3, "edges": [[0, 1, 1.0], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<GraphFile> for WeightedGraph {
    type Error = Error;
    fn try_from(f: GraphFile) -> Result<Self> {
        build_graph(f.n, &f.edges)
    }
}

impl From<WeightedGraph> for GraphFile {
    fn from(g: WeightedGraph) -> Self {
        GraphFile { n: g.n, edges: g.edges }
    }
}

impl WeightedGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Same topology with every weight multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let edges: Vec<_> = self.edges.iter().map(|&(i, j, w)| (i, j, w * s)).collect();
        build_graph(self.n, &edges)
    }

    /// Same topology with per-edge weights replaced.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.edges.len() {
            return Err(Error::OutOfRange(format!(
                "expected {} weights, got {}",
                self.edges.len(),
                weights.len()
            )));
        }
        let edges: Vec<_> = self
            .edges
            .iter()
            .zip(weights)
            .map(|(&(i, j, _), &w)| (i, j, w))
            .collect();
        build_graph(self.n, &edges)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serialization is infallible")
    }
}

/// Validates and builds a graph from an edge list.
pub fn build_graph(n: usize, edges: &[(usize, usize, f64)]) -> Result<WeightedGraph> {
    if n < 2 {
        return Err(Error::OutOfRange(format!("n = {n} must be at least 2")));
    }
    let mut seen = HashSet::new();
    for &(i, j, w) in edges {
        for v in [i, j] {
            if v >= n {
                return Err(Error::VertexOutOfRange { index: v, n });
            }
        }
        if i == j {
            return Err(Error::SelfLoop(i));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::NonpositiveWeight { i, j, w });
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(Error::DuplicateEdge(i.min(j), i.max(j)));
        }
    }
    let components = count_components(n, edges);
    if components != 1 {
        return Err(Error::DisconnectedGraph { components });
    }
    Ok(WeightedGraph {
        n,
        edges: edges.to_vec(),
    })
}

fn count_components(n: usize, edges: &[(usize, usize, f64)]) -> usize {
    let mut adj = vec![Vec::new(); n];
    for &(i, j, _) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut visited = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if visited[start] {
            continue;
        }
        components += 1;
        visited[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !visited[u] {
                    visited[u] = true;
                    stack.push(u);
                }
            }
        }
    }
    components
}

/// Special topologies used in the case studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Topology {
    Complete,
    Path,
    /// Circulant graph: node i links to i±1, …, i±p (mod n).
    Cycle { p: usize },
}

pub fn generate_topology(kind: Topology, n: usize, w: f64) -> Result<WeightedGraph> {
    if n < 2 {
        return Err(Error::OutOfRange(format!("n = {n} must be at least 2")));
    }
    let mut edges = Vec::new();
    match kind {
        Topology::Complete => {
            for i in 0..n {
                for j in i + 1..n {
                    edges.push((i, j, w));
                }
            }
        }
        Topology::Path => {
            for i in 0..n - 1 {
                edges.push((i, i + 1, w));
            }
        }
        Topology::Cycle { p } => {
            let pmax = (n - 1) / 2;
            if p < 1 || p > pmax {
                return Err(Error::InvalidRadius(format!(
                    "cycle radius p = {p} outside [1, {pmax}] for n = {n}"
                )));
            }
            for i in 0..n {
                for k in 1..=p {
                    let j = (i + k) % n;
                    edges.push((i.min(j), i.max(j), w));
                }
            }
        }
    }
    build_graph(n, &edges)
}

pub fn laplacian(g: &WeightedGraph) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(g.n, g.n);
    for &(i, j, w) in &g.edges {
        l[(i, j)] -= w;
        l[(j, i)] -= w;
        l[(i, i)] += w;
        l[(j, j)] += w;
    }
    l
}

/// Signed incidence matrix `r` (n×m) and diagonal edge weights `w` (m×m).
#[derive(Debug, Clone)]
pub struct IncidenceFactors {
    pub r: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl IncidenceFactors {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.r * &self.w * self.r.transpose()
    }
}

pub fn incidence_factorization(g: &WeightedGraph) -> IncidenceFactors {
    let m = g.edges.len();
    let mut r = DMatrix::zeros(g.n, m);
    let mut w = DMatrix::zeros(m, m);
    for (e, &(i, j, wt)) in g.edges.iter().enumerate() {
        r[(i, e)] = 1.0;
        r[(j, e)] = -1.0;
        w[(e, e)] = wt;
    }
    IncidenceFactors { r, w }
}

/// Ascending Laplacian eigenvalues with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Fiedler eigenvalue.
    pub fn lambda_2(&self) -> f64 {
        self.eigenvalues[1]
    }

    pub fn lambda_n(&self) -> f64 {
        self.eigenvalues[self.n() - 1]
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        q * DMatrix::from_diagonal(&self.eigenvalues) * q.transpose()
    }

    /// Moore–Penrose pseudo-inverse assembled from the nonzero modes.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        for k in 1..n {
            let q = self.eigenvectors.column(k);
            out += (q * q.transpose()) / self.eigenvalues[k];
        }
        out
    }

    /// Spectrum of the Laplacian scaled by `s > 0`.
    pub fn scaled(&self, s: f64) -> Spectrum {
        Spectrum {
            eigenvalues: &self.eigenvalues * s,
            eigenvectors: self.eigenvectors.clone(),
        }
    }
}

pub fn spectral_decompose(l: &DMatrix<f64>) -> Result<Spectrum> {
    let n = l.nrows();
    if n < 2 || l.ncols() != n {
        return Err(Error::EigenFailure(format!(
            "expected a square matrix with n >= 2, got {}x{}",
            l.nrows(),
            l.ncols()
        )));
    }
    if l.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure("non-finite entry".into()));
    }
    let eig = SymmetricEigen::try_new(l.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigenFailure("symmetric QL iteration did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }

    let lam_n = values[n - 1];
    let tol = 1e-10 * lam_n.abs().max(1.0);
    if values[0].abs() > tol {
        return Err(Error::KernelMismatch(format!(
            "smallest eigenvalue {} exceeds tolerance {tol}",
            values[0]
        )));
    }
    if values[1] <= tol {
        return Err(Error::KernelMismatch(format!(
            "zero eigenvalue has multiplicity > 1 (lambda_2 = {})",
            values[1]
        )));
    }
    values[0] = 0.0;

    let ones_residual = (l * DVector::from_element(n, 1.0)).amax();
    if ones_residual > tol * (n as f64) {
        return Err(Error::KernelMismatch(format!(
            "the all-ones vector is not in the kernel (residual {ones_residual})"
        )));
    }
    if vectors.column(0).sum() < 0.0 {
        vectors.column_mut(0).neg_mut();
    }
    Ok(Spectrum {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Laplacian spectrum of a validated graph.
pub fn graph_spectrum(g: &WeightedGraph) -> Result<Spectrum> {
    spectral_decompose(&laplacian(g))
}
