//! Undirected graphs over string-labeled vertices.
//!
//! Vertices are identified by position in the label list and edges are kept
//! as index pairs `(i, j)` with `i < j`, so every edge has one canonical
//! representation. Self-loops and parallel edges are rejected at build time.
//! Adjacency is reflexive: `is_adjacent(u, u)` is true even for an isolated
//! vertex, which is the convention the chain-consistency checks rely on.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph needs at least one vertex")]
    NoVertices,
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("edge endpoint {0:?} is not a declared label")]
    UnknownEndpoint(String),
    #[error("self-loop at {0:?}")]
    SelfLoop(String),
    #[error("duplicate edge between {0:?} and {1:?}")]
    DuplicateEdge(String, String),
    #[error("label {0:?} is not in the graph")]
    UnknownLabel(String),
    #[error("vertex subset is empty")]
    EmptySubset,
    #[error("label {0:?} cannot appear in a product (top-level comma or unbalanced parentheses)")]
    ReservedLabel(String),
}

/// Wire format: `{"labels": [...], "edges": [["u","v"], ...]}`.
///
/// On output the edge list is canonical: each pair is ordered
/// lexicographically and the list itself is sorted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub labels: Vec<String>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct Graph {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    adj: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from declared labels and an edge list given as label
    /// pairs. Endpoint order within a pair does not matter.
    pub fn new(labels: Vec<String>, edge_labels: &[(String, String)]) -> Result<Self, GraphError> {
        if labels.is_empty() {
            return Err(GraphError::NoVertices);
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(GraphError::DuplicateLabel(l.clone()));
            }
        }
        let mut seen = HashSet::new();
        let mut edges = Vec::with_capacity(edge_labels.len());
        for (u, v) in edge_labels {
            let ui = *index
                .get(u)
                .ok_or_else(|| GraphError::UnknownEndpoint(u.clone()))?;
            let vi = *index
                .get(v)
                .ok_or_else(|| GraphError::UnknownEndpoint(v.clone()))?;
            if ui == vi {
                return Err(GraphError::SelfLoop(u.clone()));
            }
            let e = (ui.min(vi), ui.max(vi));
            if !seen.insert(e) {
                return Err(GraphError::DuplicateEdge(u.clone(), v.clone()));
            }
            edges.push(e);
        }
        edges.sort_unstable();
        let mut adj = vec![Vec::new(); labels.len()];
        for &(i, j) in &edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Graph {
            labels,
            index,
            adj,
            edges,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as canonical index pairs `(i, j)`, `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor indices of vertex `i` (never contains `i` itself).
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    /// Reflexive adjacency on indices: true when `i == j` or `{i, j}` is an edge.
    pub fn adjacent_idx(&self, i: usize, j: usize) -> bool {
        i == j || self.adj[i].binary_search(&j).is_ok()
    }

    /// Reflexive adjacency on labels.
    pub fn is_adjacent(&self, u: &str, v: &str) -> Result<bool, GraphError> {
        let ui = self
            .index_of(u)
            .ok_or_else(|| GraphError::UnknownLabel(u.to_owned()))?;
        let vi = self
            .index_of(v)
            .ok_or_else(|| GraphError::UnknownLabel(v.to_owned()))?;
        Ok(self.adjacent_idx(ui, vi))
    }

    /// Connected components as sorted index lists, ordered by each
    /// component's smallest vertex index.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n()];
        let mut comps = Vec::new();
        for start in 0..self.n() {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = vec![start];
            seen[start] = true;
            while let Some(v) = queue.pop() {
                comp.push(v);
                for &w in &self.adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push(w);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.connected_components().len() == 1
    }

    /// Subgraph induced by the given labels. Vertices keep their relative
    /// declaration order from this graph; duplicate subset entries collapse.
    pub fn induced_subgraph(&self, subset: &[String]) -> Result<Graph, GraphError> {
        if subset.is_empty() {
            return Err(GraphError::EmptySubset);
        }
        let mut keep = vec![false; self.n()];
        for l in subset {
            let i = self
                .index_of(l)
                .ok_or_else(|| GraphError::UnknownLabel(l.clone()))?;
            keep[i] = true;
        }
        let kept: Vec<usize> = (0..self.n()).filter(|&i| keep[i]).collect();
        let labels: Vec<String> = kept.iter().map(|&i| self.labels[i].clone()).collect();
        let edges: Vec<(String, String)> = self
            .edges
            .iter()
            .filter(|&&(i, j)| keep[i] && keep[j])
            .map(|&(i, j)| (self.labels[i].clone(), self.labels[j].clone()))
            .collect();
        Graph::new(labels, &edges)
    }

    /// Strong product with `other`. The vertex `(u, v)` is named
    /// `"(u,v)"`, pairs enumerated in row-major order (all of `other` for
    /// the first vertex of `self`, and so on). Two distinct pairs are
    /// adjacent when each coordinate is equal or adjacent and at least one
    /// coordinate moves, i.e. the usual three-clause condition
    /// edge/equal, equal/edge, edge/edge.
    ///
    /// Composite names stay invertible because input labels may not contain
    /// a top-level comma or unbalanced parentheses; labels produced by an
    /// earlier product pass that check, so the operation folds to any number
    /// of factors.
    pub fn strong_product(&self, other: &Graph) -> Result<Graph, GraphError> {
        for l in self.labels.iter().chain(other.labels.iter()) {
            check_product_label(l)?;
        }
        let (n1, n2) = (self.n(), other.n());
        let mut labels = Vec::with_capacity(n1 * n2);
        for a in &self.labels {
            for b in &other.labels {
                labels.push(format!("({a},{b})"));
            }
        }
        let mut edges = Vec::new();
        for i in 0..n1 {
            for j in 0..n2 {
                let v = i * n2 + j;
                // closed neighborhoods in both factors, minus the vertex itself
                for &i2 in std::iter::once(&i).chain(self.adj[i].iter()) {
                    for &j2 in std::iter::once(&j).chain(other.adj[j].iter()) {
                        let u = i2 * n2 + j2;
                        if u > v {
                            edges.push((labels[v].clone(), labels[u].clone()));
                        }
                    }
                }
            }
        }
        Graph::new(labels, &edges)
    }
}

/// A label may take part in a product only if splitting the composite name
/// at its top-level comma stays unambiguous: parentheses must balance and
/// commas may only appear inside them.
fn check_product_label(label: &str) -> Result<(), GraphError> {
    let mut depth: i64 = 0;
    for c in label.chars() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(GraphError::ReservedLabel(label.to_owned()));
                }
            }
            ',' if depth == 0 => return Err(GraphError::ReservedLabel(label.to_owned())),
            _ => {}
        }
    }
    if depth != 0 {
        return Err(GraphError::ReservedLabel(label.to_owned()));
    }
    Ok(())
}

impl TryFrom<GraphFile> for Graph {
    type Error = GraphError;

    fn try_from(f: GraphFile) -> Result<Self, Self::Error> {
        Graph::new(f.labels, &f.edges)
    }
}

impl From<Graph> for GraphFile {
    fn from(g: Graph) -> Self {
        let mut edges: Vec<(String, String)> = g
            .edges
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (g.labels[i].clone(), g.labels[j].clone());
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect();
        edges.sort();
        GraphFile {
            labels: g.labels,
            edges,
        }
    }
}
