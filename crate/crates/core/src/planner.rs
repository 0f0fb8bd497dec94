//! Feasibility classification and chain plans.
//!
//! Given a target distribution and a graph over the same labels, exactly one
//! of four situations holds, and it decides which kind of chain (if any) can
//! have the target as its long-run empirical distribution while only moving
//! along edges:
//!
//! * `DIRAC`: a single-atom target; the constant chain does it.
//! * `CONNECTED_SUPPORT`: the support induces a connected subgraph; one
//!   fixed kernel on that subgraph does it.
//! * `SUPPORT_IN_ONE_COMPONENT`: the support splits inside a single
//!   component of the ambient graph. No fixed kernel works, but a
//!   time-dependent sequence of mixture kernels does, and a single mixture
//!   kernel gets within any requested accuracy.
//! * `SUPPORT_SPLIT`: support states sit in different components; nothing
//!   works, the verdict is infeasible.
//!
//! Time-dependent plans switch kernels on a block schedule. Block
//! boundaries can be astronomically large, so they are carried as exact big
//! integers; simulation simply truncates to whatever horizon it is given.

use crate::dist::{DistError, Distribution};
use crate::graph::{Graph, GraphError};
use crate::kernel::{KernelError, StochasticKernel};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// Refusal threshold for the positivity index `kbar`; beyond this the
/// mixture family is numerically meaningless.
pub const KBAR_CAP: u64 = 1_000_000_000;

/// Accuracy targets below this would ask for mixture indices past
/// [`KBAR_CAP`].
pub const MIN_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("distribution labels do not match the graph")]
    LabelMismatch,
    #[error("pass either a schedule or an accuracy target, not both")]
    ConflictingOptions,
    #[error("split support needs a schedule or an accuracy target")]
    MissingSchedule,
    #[error("epsilon {0} is outside (0, 1)")]
    InvalidEpsilon(f64),
    #[error("invalid schedule override: {0}")]
    InvalidOverride(String),
    #[error("smallest positive mass needs k > {0}, beyond the supported cap")]
    KbarTooLarge(u64),
    #[error("operation does not apply to this plan mode")]
    WrongMode,
    #[error("schedule has no block covering time {t}")]
    ScheduleExhausted { t: u64 },
    #[error("initial distribution puts mass on {0:?}, which this plan cannot visit")]
    UnsupportedInitial(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaseTag {
    Dirac,
    ConnectedSupport,
    SupportInOneComponent,
    SupportSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CaseWitness {
    Atom {
        atom: String,
    },
    Support {
        support: Vec<String>,
    },
    InComponent {
        component: Vec<String>,
        support_components: Vec<Vec<String>>,
    },
    Split {
        split_pair: (String, String),
        components: Vec<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseClass {
    #[serde(rename = "case")]
    pub tag: CaseTag,
    pub witness: CaseWitness,
}

/// Decides which of the four cases applies.
pub fn classify(d: &Distribution, g: &Graph) -> Result<CaseClass, PlanError> {
    if d.labels() != g.labels() {
        return Err(PlanError::LabelMismatch);
    }
    let supp = d.support();
    if supp.len() == 1 {
        return Ok(CaseClass {
            tag: CaseTag::Dirac,
            witness: CaseWitness::Atom {
                atom: d.label(supp[0]).to_owned(),
            },
        });
    }
    let supp_labels: Vec<String> = supp.iter().map(|&i| d.label(i).to_owned()).collect();
    let induced = g.induced_subgraph(&supp_labels)?;
    let support_components: Vec<Vec<String>> = induced
        .connected_components()
        .into_iter()
        .map(|c| c.into_iter().map(|i| induced.label(i).to_owned()).collect())
        .collect();
    if support_components.len() == 1 {
        return Ok(CaseClass {
            tag: CaseTag::ConnectedSupport,
            witness: CaseWitness::Support {
                support: supp_labels,
            },
        });
    }
    let comps = g.connected_components();
    let mut comp_of = vec![0usize; g.n()];
    for (ci, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = ci;
        }
    }
    let first_comp = comp_of[supp[0]];
    match supp.iter().find(|&&v| comp_of[v] != first_comp) {
        None => Ok(CaseClass {
            tag: CaseTag::SupportInOneComponent,
            witness: CaseWitness::InComponent {
                component: comps[first_comp]
                    .iter()
                    .map(|&i| g.label(i).to_owned())
                    .collect(),
                support_components,
            },
        }),
        Some(&other) => Ok(CaseClass {
            tag: CaseTag::SupportSplit,
            witness: CaseWitness::Split {
                split_pair: (d.label(supp[0]).to_owned(), d.label(other).to_owned()),
                components: comps
                    .into_iter()
                    .map(|c| c.into_iter().map(|i| g.label(i).to_owned()).collect())
                    .collect(),
            },
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScheduleKind {
    PaperPoly,
    GrowthConstrained,
    Practical,
}

/// User-side schedule request; resolved against a concrete chain by
/// [`make_schedule`] or [`plan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScheduleChoice {
    /// Exact polynomial boundaries `t_l = l^(5N)`.
    PaperPoly,
    /// Block gaps `max(1, ceil(c * l^(5N-1)))` with `c = c_num / c_den > 0`.
    GrowthConstrained { c_num: u64, c_den: u64 },
    /// Explicit block lengths, optionally with explicit mixture indices
    /// (default: consecutive from `kbar + 1`). Not faithful: the tail of
    /// the table is finite.
    Practical {
        blocks: Vec<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ks: Option<Vec<u64>>,
    },
}

/// Active block of a schedule: the mixture index to run and where the block
/// ends on the normalized clock (`None` when the end is beyond `u64`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveBlock {
    pub k: u64,
    pub end: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    k_start: u64,
    /// `5N` for the polynomial kinds.
    exponent: u32,
    growth_c: (u64, u64),
    /// Practical only: `(length, k)` per block.
    blocks: Vec<(u64, u64)>,
    faithful: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryRow {
    pub k: u64,
    /// Normalized block start, decimal string (values overflow u64 fast).
    pub start: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleSummary {
    pub kind: ScheduleKind,
    pub faithful: bool,
    pub k_start: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent: Option<u32>,
    pub boundaries: Vec<BoundaryRow>,
}

impl Schedule {
    pub fn paper_poly(n_states: usize, k_start: u64) -> Schedule {
        Schedule {
            kind: ScheduleKind::PaperPoly,
            k_start,
            exponent: 5 * n_states as u32,
            growth_c: (1, 1),
            blocks: Vec::new(),
            faithful: true,
        }
    }

    pub fn growth_constrained(
        n_states: usize,
        k_start: u64,
        c_num: u64,
        c_den: u64,
    ) -> Result<Schedule, PlanError> {
        if c_num == 0 || c_den == 0 {
            return Err(PlanError::InvalidOverride(
                "growth constant must be positive".into(),
            ));
        }
        Ok(Schedule {
            kind: ScheduleKind::GrowthConstrained,
            k_start,
            exponent: 5 * n_states as u32,
            growth_c: (c_num, c_den),
            blocks: Vec::new(),
            faithful: true,
        })
    }

    pub fn practical(
        blocks: Vec<u64>,
        ks: Option<Vec<u64>>,
        k_start: u64,
    ) -> Result<Schedule, PlanError> {
        if blocks.is_empty() {
            return Err(PlanError::InvalidOverride("no blocks given".into()));
        }
        if blocks.windows(2).any(|w| w[1] <= w[0]) || blocks[0] == 0 {
            return Err(PlanError::InvalidOverride(
                "block lengths must be positive and strictly increasing".into(),
            ));
        }
        let ks = match ks {
            None => (0..blocks.len() as u64).map(|i| k_start + i).collect(),
            Some(ks) => {
                if ks.len() != blocks.len() {
                    return Err(PlanError::InvalidOverride(
                        "one mixture index per block required".into(),
                    ));
                }
                if ks[0] < 2 || ks.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(PlanError::InvalidOverride(
                        "mixture indices must start at 2 or above and strictly increase".into(),
                    ));
                }
                ks
            }
        };
        Ok(Schedule {
            kind: ScheduleKind::Practical,
            k_start,
            exponent: 0,
            growth_c: (1, 1),
            blocks: blocks.into_iter().zip(ks).collect(),
            faithful: false,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn faithful(&self) -> bool {
        self.faithful
    }

    pub fn k_start(&self) -> u64 {
        self.k_start
    }

    pub fn exponent(&self) -> Option<u32> {
        match self.kind {
            ScheduleKind::Practical => None,
            _ => Some(self.exponent),
        }
    }

    fn gap(&self, l: u64) -> BigUint {
        match self.kind {
            ScheduleKind::PaperPoly => {
                BigUint::from(l + 1).pow(self.exponent) - BigUint::from(l).pow(self.exponent)
            }
            ScheduleKind::GrowthConstrained => {
                let (num, den) = self.growth_c;
                let raw = BigUint::from(num) * BigUint::from(l).pow(self.exponent - 1);
                // ceil(raw / den), at least one step per block
                let g = (raw + (den - 1)) / den;
                g.max(BigUint::from(1u32))
            }
            ScheduleKind::Practical => unreachable!("practical blocks are tabulated"),
        }
    }

    /// Normalized start of the block with index `k >= k_start`; the first
    /// block starts at 0.
    pub fn start_of(&self, k: u64) -> BigUint {
        match self.kind {
            ScheduleKind::PaperPoly => {
                BigUint::from(k).pow(self.exponent) - BigUint::from(self.k_start).pow(self.exponent)
            }
            ScheduleKind::GrowthConstrained => {
                let mut acc = BigUint::from(0u32);
                for l in self.k_start..k {
                    acc += self.gap(l);
                }
                acc
            }
            ScheduleKind::Practical => {
                let pos = self
                    .blocks
                    .iter()
                    .position(|&(_, bk)| bk == k)
                    .unwrap_or(self.blocks.len());
                self.blocks[..pos]
                    .iter()
                    .map(|&(len, _)| BigUint::from(len))
                    .sum()
            }
        }
    }

    /// Block covering normalized time `t`. Blocks are left-closed: the
    /// first time of each block already uses its kernel.
    pub fn block_at(&self, t: u64) -> Result<ActiveBlock, PlanError> {
        match self.kind {
            ScheduleKind::Practical => {
                let mut acc: u128 = 0;
                for &(len, k) in &self.blocks {
                    let end = acc + len as u128;
                    if (t as u128) < end {
                        return Ok(ActiveBlock {
                            k,
                            end: u64::try_from(end).ok(),
                        });
                    }
                    acc = end;
                }
                Err(PlanError::ScheduleExhausted { t })
            }
            _ => {
                let t_big = BigUint::from(t);
                let mut k = self.k_start;
                let mut next = self.start_of(k + 1);
                while t_big >= next {
                    k += 1;
                    next += self.gap(k);
                }
                Ok(ActiveBlock {
                    k,
                    end: u64::try_from(&next).ok(),
                })
            }
        }
    }

    /// Total tabulated length, practical kind only.
    pub fn practical_len(&self) -> Option<u128> {
        match self.kind {
            ScheduleKind::Practical => Some(self.blocks.iter().map(|&(l, _)| l as u128).sum()),
            _ => None,
        }
    }

    /// First blocks as `(k, normalized start)` rows.
    pub fn boundary_table(&self, count: usize) -> Vec<BoundaryRow> {
        let mut rows = Vec::new();
        match self.kind {
            ScheduleKind::Practical => {
                let mut acc: u128 = 0;
                for &(len, k) in self.blocks.iter().take(count) {
                    rows.push(BoundaryRow {
                        k,
                        start: acc.to_string(),
                    });
                    acc += len as u128;
                }
            }
            _ => {
                let mut acc = BigUint::from(0u32);
                for i in 0..count as u64 {
                    let k = self.k_start + i;
                    rows.push(BoundaryRow {
                        k,
                        start: acc.to_string(),
                    });
                    acc += self.gap(k);
                }
            }
        }
        rows
    }

    pub fn summary(&self, table_rows: usize) -> ScheduleSummary {
        ScheduleSummary {
            kind: self.kind,
            faithful: self.faithful,
            k_start: self.k_start,
            exponent: self.exponent(),
            boundaries: self.boundary_table(table_rows),
        }
    }

    /// Exact check of the growth floor `t_{l+1} - t_l >= c * l^(5N-1)` over
    /// the first `upto` blocks; `c` is 1 for the exact polynomial schedule
    /// and the configured constant for the growth-constrained kind.
    /// Practical tables are not required to satisfy any floor.
    pub fn min_gap_holds(&self, upto: u64) -> bool {
        match self.kind {
            ScheduleKind::Practical => false,
            _ => {
                let (num, den) = match self.kind {
                    ScheduleKind::PaperPoly => (1, 1),
                    _ => self.growth_c,
                };
                (self.k_start..self.k_start + upto).all(|l| {
                    let gap = self.gap(l);
                    let floor = BigUint::from(num) * BigUint::from(l).pow(self.exponent - 1);
                    gap * BigUint::from(den) >= floor
                })
            }
        }
    }
}

/// Resolves a schedule request against the chain it will drive: the block
/// exponent is `5N` for the `N` states the chain actually runs on, and the
/// first mixture index is `kbar + 1`.
pub fn make_schedule(
    choice: &ScheduleChoice,
    d: &Distribution,
    g: &Graph,
) -> Result<Schedule, PlanError> {
    let kbar = d.kbar();
    if kbar > KBAR_CAP {
        return Err(PlanError::KbarTooLarge(KBAR_CAP));
    }
    let k_start = kbar + 1;
    match choice {
        ScheduleChoice::PaperPoly => Ok(Schedule::paper_poly(g.n(), k_start)),
        ScheduleChoice::GrowthConstrained { c_num, c_den } => {
            Schedule::growth_constrained(g.n(), k_start, *c_num, *c_den)
        }
        ScheduleChoice::Practical { blocks, ks } => {
            Schedule::practical(blocks.clone(), ks.clone(), k_start)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlanMode {
    Constant,
    Homogeneous,
    Nonhomogeneous,
    Infeasible,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpsilonInfo {
    pub epsilon: f64,
    pub k: u64,
}

#[derive(Debug)]
enum PlanDetail {
    Constant {
        atom: String,
    },
    Homogeneous {
        kernel: Arc<StochasticKernel>,
        epsilon: Option<EpsilonInfo>,
    },
    Nonhomogeneous {
        schedule: Schedule,
        /// Restricted target the mixtures are built from.
        base: Distribution,
        kernels: Mutex<HashMap<u64, Arc<StochasticKernel>>>,
    },
    Infeasible {
        split_pair: (String, String),
    },
}

/// Everything a simulation needs: the graph the chain runs on, the target
/// to measure against, the initial law, and the kernel or kernel family.
/// Plans are immutable; the lazy kernel cache is internally synchronized so
/// concurrent simulations can share one plan.
#[derive(Debug)]
pub struct ChainPlan {
    case: CaseClass,
    mode: PlanMode,
    graph: Graph,
    target: Distribution,
    initial: Distribution,
    unreachable: Vec<String>,
    kbar: u64,
    detail: PlanDetail,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanSummary {
    #[serde(flatten)]
    pub case: CaseClass,
    pub mode: PlanMode,
    pub state_space: Vec<String>,
    pub unreachable: Vec<String>,
    pub kbar: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_k: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSummary>,
}

/// Smallest integer `k` with `k >= 1/eps` for the exact stored value of
/// `eps`. The naive product test can round `k * eps` up to 1.0 and accept
/// an index that is really too small, so the comparison uses the exactly
/// signed residual `k * eps - 1` from a fused multiply-add.
fn ceil_recip(eps: f64) -> u64 {
    let mut k = (1.0 / eps).floor().max(1.0) as u64;
    while (k as f64).mul_add(eps, -1.0) < 0.0 {
        k += 1;
    }
    while k > 1 && ((k - 1) as f64).mul_add(eps, -1.0) >= 0.0 {
        k -= 1;
    }
    k
}

/// Builds the chain plan for a target on a graph.
///
/// `schedule` and `epsilon` are mutually exclusive and are consulted only
/// when the support splits inside one component; the other cases have a
/// single canonical construction. `epsilon` requests a fixed mixture kernel
/// with `k = max(ceil(1/epsilon), kbar + 1)`, trading exact convergence for
/// homogeneity with empirical error at most `epsilon`.
pub fn plan(
    d: &Distribution,
    g: &Graph,
    schedule: Option<&ScheduleChoice>,
    epsilon: Option<f64>,
) -> Result<ChainPlan, PlanError> {
    if schedule.is_some() && epsilon.is_some() {
        return Err(PlanError::ConflictingOptions);
    }
    if let Some(e) = epsilon {
        if !(MIN_EPSILON..1.0).contains(&e) {
            return Err(PlanError::InvalidEpsilon(e));
        }
    }
    let case = classify(d, g)?;
    let kbar = d.kbar();
    match (&case.tag, &case.witness) {
        (CaseTag::Dirac, CaseWitness::Atom { atom }) => {
            let atom = atom.clone();
            let initial = Distribution::dirac(g.labels().to_vec(), &atom)?;
            Ok(ChainPlan {
                unreachable: g
                    .labels()
                    .iter()
                    .filter(|&l| *l != atom)
                    .cloned()
                    .collect(),
                case,
                mode: PlanMode::Constant,
                graph: g.clone(),
                target: d.clone(),
                initial,
                kbar,
                detail: PlanDetail::Constant { atom },
            })
        }
        (CaseTag::ConnectedSupport, CaseWitness::Support { support }) => {
            let sub_g = g.induced_subgraph(support)?;
            let sub_d = d.restrict(&d.support())?;
            let kernel = Arc::new(StochasticKernel::build(&sub_d, &sub_g)?);
            let initial = Distribution::uniform(sub_g.labels().to_vec())?;
            Ok(ChainPlan {
                unreachable: g
                    .labels()
                    .iter()
                    .filter(|l| !support.contains(l))
                    .cloned()
                    .collect(),
                case,
                mode: PlanMode::Homogeneous,
                graph: sub_g,
                target: sub_d,
                initial,
                kbar,
                detail: PlanDetail::Homogeneous {
                    kernel,
                    epsilon: None,
                },
            })
        }
        (CaseTag::SupportInOneComponent, CaseWitness::InComponent { component, .. }) => {
            if kbar > KBAR_CAP {
                return Err(PlanError::KbarTooLarge(KBAR_CAP));
            }
            let sub_g = g.induced_subgraph(component)?;
            let keep: Vec<usize> = component
                .iter()
                .map(|l| d.index_of(l).expect("component labels come from d"))
                .collect();
            let sub_d = d.restrict(&keep)?;
            let initial = Distribution::uniform(sub_g.labels().to_vec())?;
            let unreachable: Vec<String> = g
                .labels()
                .iter()
                .filter(|l| !component.contains(l))
                .cloned()
                .collect();
            let detail = match (schedule, epsilon) {
                (None, None) => return Err(PlanError::MissingSchedule),
                (None, Some(eps)) => {
                    let k = ceil_recip(eps).max(sub_d.kbar() + 1);
                    let mk = sub_d.mixture(k)?;
                    PlanDetail::Homogeneous {
                        kernel: Arc::new(StochasticKernel::build(&mk, &sub_g)?),
                        epsilon: Some(EpsilonInfo { epsilon: eps, k }),
                    }
                }
                (Some(choice), None) => PlanDetail::Nonhomogeneous {
                    schedule: make_schedule(choice, &sub_d, &sub_g)?,
                    base: sub_d.clone(),
                    kernels: Mutex::new(HashMap::new()),
                },
                (Some(_), Some(_)) => unreachable!("rejected above"),
            };
            Ok(ChainPlan {
                case,
                mode: match detail {
                    PlanDetail::Homogeneous { .. } => PlanMode::Homogeneous,
                    _ => PlanMode::Nonhomogeneous,
                },
                graph: sub_g,
                target: sub_d,
                initial,
                unreachable,
                kbar,
                detail,
            })
        }
        (CaseTag::SupportSplit, CaseWitness::Split { split_pair, .. }) => Ok(ChainPlan {
            detail: PlanDetail::Infeasible {
                split_pair: split_pair.clone(),
            },
            mode: PlanMode::Infeasible,
            graph: g.clone(),
            target: d.clone(),
            initial: Distribution::uniform(g.labels().to_vec())?,
            unreachable: Vec::new(),
            kbar,
            case,
        }),
        _ => unreachable!("classify pairs each tag with its witness"),
    }
}

impl ChainPlan {
    pub fn case(&self) -> &CaseClass {
        &self.case
    }

    pub fn mode(&self) -> PlanMode {
        self.mode
    }

    /// The graph the chain actually moves on (induced subgraph for the
    /// reduced cases).
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn state_space(&self) -> &[String] {
        self.graph.labels()
    }

    /// Target to measure empirical distance against, over the state space.
    pub fn target(&self) -> &Distribution {
        &self.target
    }

    pub fn initial(&self) -> &Distribution {
        &self.initial
    }

    /// States of the ambient graph this plan can never visit.
    pub fn unreachable(&self) -> &[String] {
        &self.unreachable
    }

    pub fn kbar(&self) -> u64 {
        self.kbar
    }

    pub fn atom(&self) -> Option<&str> {
        match &self.detail {
            PlanDetail::Constant { atom } => Some(atom),
            _ => None,
        }
    }

    pub fn fixed_kernel(&self) -> Option<Arc<StochasticKernel>> {
        match &self.detail {
            PlanDetail::Homogeneous { kernel, .. } => Some(Arc::clone(kernel)),
            _ => None,
        }
    }

    pub fn epsilon_info(&self) -> Option<EpsilonInfo> {
        match &self.detail {
            PlanDetail::Homogeneous { epsilon, .. } => *epsilon,
            _ => None,
        }
    }

    pub fn schedule(&self) -> Option<&Schedule> {
        match &self.detail {
            PlanDetail::Nonhomogeneous { schedule, .. } => Some(schedule),
            _ => None,
        }
    }

    pub fn split_pair(&self) -> Option<(&str, &str)> {
        match &self.detail {
            PlanDetail::Infeasible { split_pair } => {
                Some((split_pair.0.as_str(), split_pair.1.as_str()))
            }
            _ => None,
        }
    }

    /// Kernel for mixture index `k`, built on demand and memoized.
    pub fn kernel_for_k(&self, k: u64) -> Result<Arc<StochasticKernel>, PlanError> {
        match &self.detail {
            PlanDetail::Nonhomogeneous { base, kernels, .. } => {
                let mut cache = kernels.lock().expect("kernel cache poisoned");
                if let Some(kern) = cache.get(&k) {
                    return Ok(Arc::clone(kern));
                }
                let mk = base.mixture(k)?;
                let kern = Arc::new(StochasticKernel::build(&mk, &self.graph)?);
                cache.insert(k, Arc::clone(&kern));
                Ok(kern)
            }
            _ => Err(PlanError::WrongMode),
        }
    }

    /// Replaces the initial law. It must live on the plan's state space
    /// and, for a constant plan, on the atom alone.
    pub fn with_initial(mut self, initial: Distribution) -> Result<ChainPlan, PlanError> {
        if initial.labels() != self.graph.labels() {
            return Err(PlanError::LabelMismatch);
        }
        if let PlanDetail::Constant { atom } = &self.detail {
            for i in initial.support() {
                if initial.label(i) != atom {
                    return Err(PlanError::UnsupportedInitial(initial.label(i).to_owned()));
                }
            }
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn summary(&self) -> PlanSummary {
        PlanSummary {
            case: self.case.clone(),
            mode: self.mode,
            state_space: self.state_space().to_vec(),
            unreachable: self.unreachable.clone(),
            kbar: self.kbar,
            epsilon: self.epsilon_info().map(|e| e.epsilon),
            epsilon_k: self.epsilon_info().map(|e| e.k),
            p_value: self.fixed_kernel().map(|k| k.p_value()),
            schedule: self.schedule().map(|s| s.summary(20)),
        }
    }
}

/// Kernel in force at normalized time `t` of a time-dependent plan.
pub fn kernel_at_time(plan: &ChainPlan, t: u64) -> Result<Arc<StochasticKernel>, PlanError> {
    match plan.schedule() {
        Some(schedule) => plan.kernel_for_k(schedule.block_at(t)?.k),
        None => Err(PlanError::WrongMode),
    }
}
