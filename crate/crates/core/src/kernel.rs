//! Construction of the reversible single-step kernel attached to a strictly
//! positive distribution on a connected graph, plus the contraction
//! diagnostics used to certify convergence.
//!
//! States are ranked by non-increasing mass (ties keep declaration order).
//! With ranks `l < m` meaning `mass(s^l) >= mass(s^m)`, the kernel is
//!
//! ```text
//! P[l][m] = p                                  l < m, {s^l, s^m} an edge
//! P[l][m] = (mass(s^m) / mass(s^l)) * p        l > m, {s^l, s^m} an edge
//! P[l][l] = 1 - sum of the row's off-diagonal entries
//! P[l][m] = 0                                  otherwise
//! ```
//!
//! where the base probability `p` is the largest value keeping every
//! diagonal entry at least 1/2:
//!
//! ```text
//! p = min over ranks l of  1 / (2 * D_l),
//! D_l = #(lower-ranked neighbors) + sum of mass ratios to higher-ranked neighbors.
//! ```
//!
//! The construction is in detailed balance with its base distribution, so
//! that distribution is invariant, and every diagonal entry is at least 1/2,
//! which rules out periodicity.

use crate::dist::{tv_from_masses, DistError, Distribution};
use crate::graph::Graph;
use serde::Serialize;
use thiserror::Error;

/// Row sums and detailed balance hold to this tolerance at construction.
pub const KERNEL_BUILD_TOL: f64 = 1e-12;

/// Stochasticity tolerance for matrices that went through powers.
pub const MATRIX_POWER_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("distribution labels do not match the graph")]
    LabelMismatch,
    #[error("graph is not connected")]
    NotConnected,
    #[error("state {0:?} has zero mass; the kernel needs a strictly positive base")]
    ZeroMass(String),
    #[error("a single-state graph has no base probability; the constant chain covers it")]
    SingleState,
    #[error("row {row} sums to {sum}, not a stochastic matrix")]
    NotStochastic { row: usize, sum: f64 },
    #[error("the contraction bound needs at least 3 states, got {n}")]
    TooFewStates { n: usize },
    #[error("mixture index {k} must exceed the positivity threshold {kbar}")]
    InvalidK { k: u64, kbar: u64 },
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Dense square matrix, row-major. Sized for state spaces that fit in
/// memory comfortably; everything here is small.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> SquareMatrix {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        SquareMatrix {
            n,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn identity(n: usize) -> SquareMatrix {
        let mut m = SquareMatrix {
            n,
            data: vec![0.0; n * n],
        };
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn zero(n: usize) -> SquareMatrix {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let n = self.n;
        let mut out = SquareMatrix::zero(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// Binary exponentiation; `pow(0)` is the identity.
    pub fn pow(&self, e: u64) -> SquareMatrix {
        let mut result = SquareMatrix::identity(self.n);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "dimension mismatch");
        let mut out = vec![0.0; self.n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(i)) {
                *o += vi * p;
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }
}

/// Rank permutation: rank 0 carries the largest mass, ties keep the
/// original index order.
#[derive(Debug, Clone, Serialize)]
pub struct StateOrdering {
    by_rank: Vec<usize>,
    rank_of: Vec<usize>,
}

impl StateOrdering {
    pub fn by_decreasing_mass(d: &Distribution) -> StateOrdering {
        let mut by_rank: Vec<usize> = (0..d.n()).collect();
        // stable sort keeps declaration order among equal masses
        by_rank.sort_by(|&a, &b| d.mass(b).partial_cmp(&d.mass(a)).unwrap());
        let mut rank_of = vec![0; d.n()];
        for (r, &i) in by_rank.iter().enumerate() {
            rank_of[i] = r;
        }
        StateOrdering { by_rank, rank_of }
    }

    /// Label index holding rank `r`.
    pub fn state(&self, r: usize) -> usize {
        self.by_rank[r]
    }

    /// Rank of label index `i`.
    pub fn rank(&self, i: usize) -> usize {
        self.rank_of[i]
    }

    pub fn by_rank(&self) -> &[usize] {
        &self.by_rank
    }
}

fn check_kernel_input(d: &Distribution, g: &Graph) -> Result<(), KernelError> {
    if d.labels() != g.labels() {
        return Err(KernelError::LabelMismatch);
    }
    if g.n() == 1 {
        return Err(KernelError::SingleState);
    }
    if !g.is_connected() {
        return Err(KernelError::NotConnected);
    }
    for i in 0..d.n() {
        if d.mass(i) == 0.0 {
            return Err(KernelError::ZeroMass(d.label(i).to_owned()));
        }
    }
    Ok(())
}

/// Per-rank denominators `D_l`. Positive whenever the graph is connected
/// with at least two vertices, since every vertex then has a neighbor.
fn rank_denominators(d: &Distribution, g: &Graph, ord: &StateOrdering) -> Vec<f64> {
    let n = g.n();
    let mut denom = vec![0.0; n];
    for (l, dl) in denom.iter_mut().enumerate() {
        let sl = ord.state(l);
        for &nb in g.neighbors(sl) {
            let m = ord.rank(nb);
            *dl += if m > l {
                1.0
            } else {
                d.mass(nb) / d.mass(sl)
            };
        }
    }
    denom
}

/// The shared off-diagonal step probability. Lies in `(0, 1/2]`: the
/// top-ranked state contributes a denominator equal to its degree, so the
/// minimum never exceeds 1/2.
pub fn base_probability(d: &Distribution, g: &Graph) -> Result<f64, KernelError> {
    check_kernel_input(d, g)?;
    let ord = StateOrdering::by_decreasing_mass(d);
    let denom = rank_denominators(d, g, &ord);
    let mut p = f64::INFINITY;
    for (l, &dl) in denom.iter().enumerate() {
        assert!(dl > 0.0, "rank {l} has no neighbors in a connected graph");
        p = p.min(1.0 / (2.0 * dl));
    }
    Ok(p)
}

/// Serializable kernel dump, label-indexed.
#[derive(Debug, Clone, Serialize)]
pub struct KernelDump {
    pub labels: Vec<String>,
    pub ordering: Vec<String>,
    pub base_mass: Vec<f64>,
    pub p: f64,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct StochasticKernel {
    base: Distribution,
    ordering: StateOrdering,
    p_value: f64,
    rank_matrix: SquareMatrix,
    label_matrix: SquareMatrix,
    cdf: Vec<Vec<f64>>,
}

impl StochasticKernel {
    /// Builds the kernel for a strictly positive distribution on a
    /// connected graph with at least two vertices.
    pub fn build(d: &Distribution, g: &Graph) -> Result<StochasticKernel, KernelError> {
        check_kernel_input(d, g)?;
        let n = g.n();
        let ord = StateOrdering::by_decreasing_mass(d);
        let denom = rank_denominators(d, g, &ord);
        let mut p = f64::INFINITY;
        for &dl in &denom {
            assert!(dl > 0.0, "connected graph has a neighbor for every rank");
            p = p.min(1.0 / (2.0 * dl));
        }

        let mut rank_matrix = SquareMatrix::zero(n);
        for l in 0..n {
            let sl = ord.state(l);
            let mut off = 0.0;
            for &nb in g.neighbors(sl) {
                let m = ord.rank(nb);
                let entry = if m > l { p } else { d.mass(nb) / d.mass(sl) * p };
                rank_matrix.set(l, m, entry);
                off += entry;
            }
            rank_matrix.set(l, l, 1.0 - off);
            debug_assert!(rank_matrix.get(l, l) >= 0.5 - KERNEL_BUILD_TOL);
        }

        let mut label_matrix = SquareMatrix::zero(n);
        for i in 0..n {
            for j in 0..n {
                label_matrix.set(i, j, rank_matrix.get(ord.rank(i), ord.rank(j)));
            }
        }

        // inverse-CDF rows over labels in declaration order; the tail from
        // the last positive entry is pinned to exactly 1 so a draw in [0,1)
        // always lands on a reachable state
        let mut cdf = Vec::with_capacity(n);
        for i in 0..n {
            let row = label_matrix.row(i);
            let mut acc = 0.0;
            let mut c: Vec<f64> = row
                .iter()
                .map(|&v| {
                    acc += v;
                    acc
                })
                .collect();
            if let Some(last) = (0..n).rev().find(|&j| row[j] > 0.0) {
                for cj in c.iter_mut().skip(last) {
                    *cj = 1.0;
                }
            }
            cdf.push(c);
        }

        Ok(StochasticKernel {
            base: d.clone(),
            ordering: ord,
            p_value: p,
            rank_matrix,
            label_matrix,
            cdf,
        })
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn labels(&self) -> &[String] {
        self.base.labels()
    }

    pub fn base(&self) -> &Distribution {
        &self.base
    }

    pub fn ordering(&self) -> &StateOrdering {
        &self.ordering
    }

    pub fn p_value(&self) -> f64 {
        self.p_value
    }

    /// Matrix indexed by rank, the form the construction is stated in.
    pub fn rank_matrix(&self) -> &SquareMatrix {
        &self.rank_matrix
    }

    /// Matrix indexed like the label list, the form everything else uses.
    pub fn label_matrix(&self) -> &SquareMatrix {
        &self.label_matrix
    }

    /// Next state index from state `i` given a uniform draw `u` in [0,1).
    pub fn sample_next_idx(&self, i: usize, u: f64) -> usize {
        let row = &self.cdf[i];
        for (j, &c) in row.iter().enumerate() {
            if u < c {
                return j;
            }
        }
        row.len() - 1
    }

    /// Max detailed-balance defect over ordered pairs.
    pub fn reversibility_residual(&self) -> f64 {
        detailed_balance_residual(&self.label_matrix, self.base.masses())
    }

    /// Max entry defect of `base * P - base`.
    pub fn stationarity_residual(&self) -> f64 {
        stationary_residual(&self.label_matrix, self.base.masses())
    }

    /// Law of the state after `steps` transitions from `initial` (given in
    /// label order).
    pub fn propagate(&self, initial: &[f64], steps: u64) -> Vec<f64> {
        self.label_matrix.pow(steps).left_mul(initial)
    }

    pub fn dump(&self) -> KernelDump {
        let n = self.n();
        KernelDump {
            labels: self.labels().to_vec(),
            ordering: self
                .ordering
                .by_rank()
                .iter()
                .map(|&i| self.base.label(i).to_owned())
                .collect(),
            base_mass: self.base.masses().to_vec(),
            p: self.p_value,
            matrix: (0..n).map(|i| self.label_matrix.row(i).to_vec()).collect(),
        }
    }
}

/// Max over pairs of `|w_i P_ij - w_j P_ji|`.
pub fn detailed_balance_residual(m: &SquareMatrix, w: &[f64]) -> f64 {
    assert_eq!(m.n(), w.len(), "dimension mismatch");
    let mut worst = 0.0f64;
    for i in 0..m.n() {
        for j in (i + 1)..m.n() {
            worst = worst.max((w[i] * m.get(i, j) - w[j] * m.get(j, i)).abs());
        }
    }
    worst
}

/// Max entry of `|w M - w|`.
pub fn stationary_residual(m: &SquareMatrix, w: &[f64]) -> f64 {
    let after = m.left_mul(w);
    after
        .iter()
        .zip(w)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Dobrushin ergodic coefficient `1 - min over row pairs of the overlap`.
/// Zero for a single-row matrix. Rows must sum to 1 within 1e-9.
pub fn dobrushin_delta(m: &SquareMatrix) -> Result<f64, KernelError> {
    for (i, s) in m.row_sums().iter().enumerate() {
        if (s - 1.0).abs() > MATRIX_POWER_TOL {
            return Err(KernelError::NotStochastic { row: i, sum: *s });
        }
    }
    let n = m.n();
    if n == 1 {
        return Ok(0.0);
    }
    let mut min_overlap = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let overlap: f64 = (0..n).map(|h| m.get(i, h).min(m.get(j, h))).sum();
            min_overlap = min_overlap.min(overlap);
        }
    }
    Ok(1.0 - min_overlap)
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaBoundReport {
    pub n_states: usize,
    pub k: u64,
    pub kbar: u64,
    pub p_value: f64,
    pub c_n: f64,
    /// Dobrushin coefficient of the (N-1)-step kernel.
    pub delta: f64,
    /// `1 - (c_N / k)^(N-1)` with `c_N = 1 / (2 (N-1)^2)`.
    pub bound: f64,
    pub holds: bool,
}

/// Checks the multi-step contraction bound for the mixture kernel: with
/// `N >= 3` states and mixture index `k` above the positivity threshold,
/// the (N-1)-step Dobrushin coefficient is at most `1 - (c_N / k)^(N-1)`.
pub fn lemma_bound_check(d: &Distribution, g: &Graph, k: u64) -> Result<LemmaBoundReport, KernelError> {
    let n = g.n();
    if n < 3 {
        return Err(KernelError::TooFewStates { n });
    }
    let kbar = d.kbar();
    if k <= kbar {
        return Err(KernelError::InvalidK { k, kbar });
    }
    let mk = d.mixture(k)?;
    let kernel = StochasticKernel::build(&mk, g)?;
    let delta = dobrushin_delta(&kernel.label_matrix().pow((n - 1) as u64))?;
    let c_n = 1.0 / (2.0 * ((n - 1) as f64).powi(2));
    let bound = 1.0 - (c_n / k as f64).powi((n - 1) as i32);
    Ok(LemmaBoundReport {
        n_states: n,
        k,
        kbar,
        p_value: kernel.p_value(),
        c_n,
        delta,
        bound,
        holds: delta <= bound + KERNEL_BUILD_TOL,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub steps: u64,
    /// Distance of the propagated law to the kernel's base distribution.
    pub tv: f64,
    /// `delta(P^(N-1)) ^ floor(steps / (N-1))`.
    pub bound: f64,
    pub holds: bool,
}

/// Propagates `initial` through `steps` applications of the kernel and
/// compares the distance to the base distribution against the Dobrushin
/// product bound. The bound is trivial (equal to 1) while `steps < N-1`.
pub fn contraction_check(
    kernel: &StochasticKernel,
    initial: &Distribution,
    steps: u64,
) -> Result<ContractionReport, KernelError> {
    if initial.labels() != kernel.labels() {
        return Err(KernelError::LabelMismatch);
    }
    let after = kernel.propagate(initial.masses(), steps);
    let tv = tv_from_masses(&after, kernel.base().masses());
    let n1 = (kernel.n() - 1) as u64;
    let delta = dobrushin_delta(&kernel.label_matrix().pow(n1))?;
    let bound = delta.powf((steps / n1) as f64);
    Ok(ContractionReport {
        steps,
        tv,
        bound,
        holds: tv <= bound + MATRIX_POWER_TOL,
    })
}
