//! Probability distributions over labeled states, plus the low-mass mixture
//! family used to regularize targets with zero-mass states.
//!
//! Masses are `f64`, must be nonnegative, and must sum to 1 within
//! [`MASS_SUM_TOL`]. Support is decided by exact comparison against zero on
//! the stored values; the zero-snap for tiny parsed inputs happens only in
//! the file format conversion, never in arithmetic, so mixtures with very
//! small legitimate masses survive intact.
//!
//! The mixture with index `k >= 2` moves mass `1/k` onto the uniform
//! distribution over the low-mass set `{s : mass(s) < 1/k}`:
//!
//! ```text
//! mix_k = (1/k) * uniform(low set) + ((k-1)/k) * original
//! ```
//!
//! Its total-variation distance to the original is at most `1/k`, and for
//! `k` above the threshold [`Distribution::kbar`] the low-mass set is
//! exactly the set of zero-mass states, so the mixture is strictly positive
//! everywhere.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

/// Tolerance for the mass-sum check at construction.
pub const MASS_SUM_TOL: f64 = 1e-12;

/// Parsed masses with absolute value below this are replaced by exact zero.
/// Applies to file input only.
pub const INPUT_ZERO_SNAP: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("distribution needs at least one state")]
    Empty,
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("{labels} labels but {masses} masses")]
    LengthMismatch { labels: usize, masses: usize },
    #[error("mass for {label:?} is {value}, expected a finite nonnegative number")]
    InvalidMass { label: String, value: f64 },
    #[error("mass entry {0:?} is not a decimal number")]
    BadMassText(String),
    #[error("masses sum to {0}, expected 1 within 1e-12")]
    MassSum(f64),
    #[error("label lists differ")]
    LabelMismatch,
    #[error("mixture index {0} is below 2")]
    InvalidK(u64),
    #[error("low-mass set is empty at k = {0}")]
    EmptyLowMassSet(u64),
}

/// Wire format: `{"labels": [...], "mass": [...]}` where each mass is a JSON
/// number or a decimal string.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistFile {
    pub labels: Vec<String>,
    pub mass: Vec<MassEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MassEntry {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DistFile", into = "DistFile")]
pub struct Distribution {
    labels: Vec<String>,
    mass: Vec<f64>,
}

impl Distribution {
    pub fn new(labels: Vec<String>, mass: Vec<f64>) -> Result<Self, DistError> {
        if labels.is_empty() {
            return Err(DistError::Empty);
        }
        if labels.len() != mass.len() {
            return Err(DistError::LengthMismatch {
                labels: labels.len(),
                masses: mass.len(),
            });
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(DistError::DuplicateLabel(l.clone()));
            }
        }
        for (l, &m) in labels.iter().zip(&mass) {
            if !m.is_finite() || m < 0.0 {
                return Err(DistError::InvalidMass {
                    label: l.clone(),
                    value: m,
                });
            }
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > MASS_SUM_TOL {
            return Err(DistError::MassSum(sum));
        }
        Ok(Distribution { labels, mass })
    }

    /// Constructor for masses produced by internal arithmetic (outer
    /// products of validated factors). Long sums of many small products
    /// drift past the strict input gate without being wrong, so only a
    /// loose sanity bound is kept.
    pub(crate) fn from_product(labels: Vec<String>, mass: Vec<f64>) -> Self {
        debug_assert_eq!(labels.len(), mass.len());
        debug_assert!((mass.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Distribution { labels, mass }
    }

    pub fn uniform(labels: Vec<String>) -> Result<Self, DistError> {
        let n = labels.len();
        if n == 0 {
            return Err(DistError::Empty);
        }
        Distribution::new(labels, vec![1.0 / n as f64; n])
    }

    pub fn dirac(labels: Vec<String>, atom: &str) -> Result<Self, DistError> {
        let i = labels
            .iter()
            .position(|l| l == atom)
            .ok_or(DistError::LabelMismatch)?;
        let mut mass = vec![0.0; labels.len()];
        mass[i] = 1.0;
        Distribution::new(labels, mass)
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
        self.labels.iter().position(|l| l == label)
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// Indices with strictly positive mass (exact comparison).
    pub fn support(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.mass[i] > 0.0).collect()
    }

    pub fn support_labels(&self) -> Vec<String> {
        self.support()
            .into_iter()
            .map(|i| self.labels[i].clone())
            .collect()
    }

    /// Smallest positive mass. Always exists: masses sum to one.
    pub fn min_positive_mass(&self) -> f64 {
        self.mass
            .iter()
            .copied()
            .filter(|&m| m > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Half the L1 distance. Requires identical label lists, order included.
    pub fn tv_distance(&self, other: &Distribution) -> Result<f64, DistError> {
        if self.labels != other.labels {
            return Err(DistError::LabelMismatch);
        }
        Ok(tv_from_masses(&self.mass, &other.mass))
    }

    /// Smallest `k` whose low-mass set has shed every support state: the
    /// minimal integer with `min positive mass >= 1/k`, evaluated under the
    /// same rounding as [`Distribution::low_mass_set`] so that for every
    /// `k > kbar` the low-mass set is exactly the zero-mass states.
    /// Coincides with `ceil(1 / min positive mass)` away from rounding
    /// boundaries.
    pub fn kbar(&self) -> u64 {
        let m = self.min_positive_mass();
        let mut k = (1.0 / m).floor().max(1.0) as u64;
        while m < 1.0 / (k as f64) {
            k += 1;
        }
        while k > 1 && m >= 1.0 / ((k - 1) as f64) {
            k -= 1;
        }
        k
    }

    /// Indices with mass strictly below `1/k`. Requires `k >= 2`.
    pub fn low_mass_set(&self, k: u64) -> Result<Vec<usize>, DistError> {
        if k < 2 {
            return Err(DistError::InvalidK(k));
        }
        let cut = 1.0 / (k as f64);
        Ok((0..self.n()).filter(|&i| self.mass[i] < cut).collect())
    }

    /// The mixture that spreads mass `1/k` uniformly over the low-mass set.
    /// Fails when that set is empty, in which case the original distribution
    /// is the only sensible answer and callers should use it directly.
    pub fn mixture(&self, k: u64) -> Result<Distribution, DistError> {
        let low = self.low_mass_set(k)?;
        if low.is_empty() {
            return Err(DistError::EmptyLowMassSet(k));
        }
        let keep = (k - 1) as f64 / k as f64;
        let share = 1.0 / ((k as u128 * low.len() as u128) as f64);
        let mut mass: Vec<f64> = self.mass.iter().map(|&m| keep * m).collect();
        for &i in &low {
            mass[i] += share;
        }
        Distribution::new(self.labels.clone(), mass)
    }

    /// Restriction to the given indices. The dropped states must carry zero
    /// total mass, otherwise the sum check fails.
    pub fn restrict(&self, keep: &[usize]) -> Result<Distribution, DistError> {
        let labels = keep.iter().map(|&i| self.labels[i].clone()).collect();
        let mass = keep.iter().map(|&i| self.mass[i]).collect();
        Distribution::new(labels, mass)
    }
}

/// Half-L1 distance between two mass vectors of equal length.
pub fn tv_from_masses(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    0.5 * a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}

impl TryFrom<DistFile> for Distribution {
    type Error = DistError;

    fn try_from(f: DistFile) -> Result<Self, Self::Error> {
        let mut mass = Vec::with_capacity(f.mass.len());
        for entry in f.mass {
            let v = match entry {
                MassEntry::Number(x) => x,
                MassEntry::Text(s) => s
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| DistError::BadMassText(s.clone()))?,
            };
            mass.push(if v.abs() < INPUT_ZERO_SNAP { 0.0 } else { v });
        }
        Distribution::new(f.labels, mass)
    }
}

impl From<Distribution> for DistFile {
    fn from(d: Distribution) -> Self {
        DistFile {
            labels: d.labels,
            mass: d.mass.into_iter().map(MassEntry::Number).collect(),
        }
    }
}
