//! Brute-force reference implementations and fixtures shared across the
//! integration suites. Everything here recomputes quantities from their
//! definitions with deliberately different algorithms than the library.

#![allow(dead_code)]

use graphmc::dist::Distribution;
use graphmc::graph::Graph;
use graphmc::planner::CaseTag;

pub fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

/// Every simple graph on `n` labeled vertices, one per edge mask.
pub fn all_graphs(n: usize) -> Vec<Graph> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    (0u32..1 << pairs.len())
        .map(|mask| {
            let edges: Vec<(String, String)> = pairs
                .iter()
                .enumerate()
                .filter(|&(b, _)| mask >> b & 1 == 1)
                .map(|(_, &(i, j))| (format!("v{i}"), format!("v{j}")))
                .collect();
            Graph::new(labels(n), &edges).unwrap()
        })
        .collect()
}

/// Reflexive-transitive reachability by Floyd-Warshall closure.
pub fn reach_matrix(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.n();
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
        for &j in g.neighbors(i) {
            row[j] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                r[i][j] = r[i][j] || (r[i][k] && r[k][j]);
            }
        }
    }
    r
}

/// Definitional four-way verdict, written without reusing any library
/// graph traversal.
pub fn oracle_tag(g: &Graph, support: &[usize]) -> CaseTag {
    if support.len() == 1 {
        return CaseTag::Dirac;
    }
    // connectivity of the induced support subgraph: closure restricted to
    // support, using only edges with both ends in the support
    let n = g.n();
    let in_supp = {
        let mut v = vec![false; n];
        for &s in support {
            v[s] = true;
        }
        v
    };
    let mut r = vec![vec![false; n]; n];
    for i in 0..n {
        r[i][i] = true;
        if in_supp[i] {
            for &j in g.neighbors(i) {
                if in_supp[j] {
                    r[i][j] = true;
                }
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                r[i][j] = r[i][j] || (r[i][k] && r[k][j]);
            }
        }
    }
    let root = support[0];
    if support.iter().all(|&s| r[root][s]) {
        return CaseTag::ConnectedSupport;
    }
    let ambient = reach_matrix(g);
    if support.iter().all(|&s| ambient[root][s]) {
        CaseTag::SupportInOneComponent
    } else {
        CaseTag::SupportSplit
    }
}

/// Four states in a path s1-s3-s4-s2 with all target mass on the ends.
pub fn example1() -> (Graph, Distribution) {
    let labels = ["s1", "s2", "s3", "s4"].map(String::from).to_vec();
    (
        Graph::new(
            labels.clone(),
            &[
                ("s1".into(), "s3".into()),
                ("s3".into(), "s4".into()),
                ("s2".into(), "s4".into()),
            ],
        )
        .unwrap(),
        Distribution::new(labels, vec![0.5, 0.5, 0.0, 0.0]).unwrap(),
    )
}

/// Path graph on `masses.len()` vertices with the given target masses.
pub fn weighted_path(masses: Vec<f64>) -> (Graph, Distribution) {
    let n = masses.len();
    let edges: Vec<(String, String)> = (0..n - 1)
        .map(|i| (format!("v{i}"), format!("v{}", i + 1)))
        .collect();
    (
        Graph::new(labels(n), &edges).unwrap(),
        Distribution::new(labels(n), masses).unwrap(),
    )
}
