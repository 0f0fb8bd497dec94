//! Seeded trajectory simulation for chain plans.
//!
//! A trajectory counts every state it occupies, including the initial one,
//! so a run of `steps` states makes `steps - 1` transitions. Reported
//! empirical distributions are visit counts over `steps`, and all distances
//! are total variation against the plan's target. Runs are deterministic in
//! `(seed, stream)`: replicas share a seed and get one stream each.

use crate::dist::{tv_from_masses, Distribution};
use crate::graph::Graph;
use crate::kernel::StochasticKernel;
use crate::planner::{ChainPlan, PlanError, PlanMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("plan is infeasible: {0:?} and {1:?} sit in different components")]
    InfeasiblePlan(String, String),
    #[error("a run needs at least one step")]
    ZeroSteps,
    #[error("state {0:?} is not part of this chain")]
    UnknownState(String),
    #[error("no function value for state {0:?}")]
    MissingFunctionValue(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvPoint {
    /// States counted so far when the distance was measured.
    pub step: u64,
    pub tv: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryReport {
    pub seed: u64,
    pub stream: u64,
    pub steps: u64,
    pub labels: Vec<String>,
    pub visit_counts: Vec<u64>,
    pub empirical: Vec<f64>,
    /// Distance to the target at each requested checkpoint; the final step
    /// is always present as the last entry.
    pub tv_trace: Vec<TvPoint>,
    /// Transitions that left the graph's closed neighborhoods, checked
    /// against the adjacency independently of the kernel. Always 0 unless
    /// the kernel construction is broken.
    pub consistency_violations: u64,
    pub final_state: String,
}

/// Pooled view of a replica batch: counts are summed before normalizing,
/// final distances are averaged across replicas.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicaPool {
    pub replicas: u64,
    pub steps: u64,
    pub seed: u64,
    pub labels: Vec<String>,
    pub pooled_empirical: Vec<f64>,
    pub pooled_tv: f64,
    pub mean_final_tv: f64,
    pub max_final_tv: f64,
    pub total_consistency_violations: u64,
}

/// Inverse-CDF draw from a distribution, same tail-pinning convention as
/// the kernel rows: the tail at and past the last positive mass is exactly
/// 1, so every draw in [0,1) lands on the support.
pub(crate) fn sample_from(d: &Distribution, u: f64) -> usize {
    let masses = d.masses();
    let last = (0..masses.len())
        .rev()
        .find(|&i| masses[i] > 0.0)
        .expect("distributions sum to 1");
    let mut acc = 0.0;
    for (i, &m) in masses.iter().enumerate().take(last) {
        acc += m;
        if u < acc {
            return i;
        }
    }
    last
}

/// One transition from `label` under `kernel`.
pub fn step(
    kernel: &StochasticKernel,
    label: &str,
    rng: &mut impl Rng,
) -> Result<String, SimError> {
    let i = kernel
        .base()
        .index_of(label)
        .ok_or_else(|| SimError::UnknownState(label.to_owned()))?;
    let j = kernel.sample_next_idx(i, rng.gen::<f64>());
    Ok(kernel.labels()[j].clone())
}

pub(crate) enum Stepper {
    Hold,
    Fixed(Arc<StochasticKernel>),
    Scheduled {
        kernel: Arc<StochasticKernel>,
        block_end: Option<u64>,
    },
}

impl Stepper {
    pub(crate) fn new(plan: &ChainPlan) -> Result<Stepper, SimError> {
        match plan.mode() {
            PlanMode::Constant => Ok(Stepper::Hold),
            PlanMode::Homogeneous => Ok(Stepper::Fixed(
                plan.fixed_kernel().expect("homogeneous plans carry a kernel"),
            )),
            PlanMode::Nonhomogeneous => {
                let schedule = plan.schedule().expect("scheduled plans carry a schedule");
                let block = schedule.block_at(0)?;
                Ok(Stepper::Scheduled {
                    kernel: plan.kernel_for_k(block.k)?,
                    block_end: block.end,
                })
            }
            PlanMode::Infeasible => {
                let (a, b) = plan.split_pair().expect("infeasible plans carry a witness");
                Err(SimError::InfeasiblePlan(a.to_owned(), b.to_owned()))
            }
        }
    }

    /// Next state index for the transition at time `t` (0-based).
    pub(crate) fn advance(
        &mut self,
        plan: &ChainPlan,
        t: u64,
        x: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize, SimError> {
        match self {
            Stepper::Hold => Ok(x),
            Stepper::Fixed(kernel) => Ok(kernel.sample_next_idx(x, rng.gen::<f64>())),
            Stepper::Scheduled { kernel, block_end } => {
                if block_end.is_some_and(|end| t >= end) {
                    let schedule = plan.schedule().expect("scheduled plan");
                    let block = schedule.block_at(t)?;
                    *kernel = plan.kernel_for_k(block.k)?;
                    *block_end = block.end;
                }
                Ok(kernel.sample_next_idx(x, rng.gen::<f64>()))
            }
        }
    }
}

/// Runs one trajectory on RNG stream `stream`.
pub fn run_stream(
    plan: &ChainPlan,
    steps: u64,
    seed: u64,
    stream: u64,
    checkpoints: &[u64],
) -> Result<TrajectoryReport, SimError> {
    run_stream_observed(plan, steps, seed, stream, checkpoints, |_, _| {})
}

/// [`run_stream`] with a callback receiving every visited state:
/// `observe(t, state_index)` fires for t = 0..steps-1 in order. The
/// trajectory is identical to the unobserved run for the same seed.
pub fn run_stream_observed(
    plan: &ChainPlan,
    steps: u64,
    seed: u64,
    stream: u64,
    checkpoints: &[u64],
    mut observe: impl FnMut(u64, usize),
) -> Result<TrajectoryReport, SimError> {
    if steps == 0 {
        return Err(SimError::ZeroSteps);
    }
    if let Some((a, b)) = plan.split_pair() {
        return Err(SimError::InfeasiblePlan(a.to_owned(), b.to_owned()));
    }
    if let Some(total) = plan.schedule().and_then(|s| s.practical_len()) {
        // transitions run at times 0..steps-1, all must be covered
        if total < (steps - 1) as u128 {
            return Err(SimError::Plan(PlanError::ScheduleExhausted {
                t: total as u64,
            }));
        }
    }

    let graph: &Graph = plan.graph();
    let target = plan.target().masses();
    let n = graph.n();
    let mut marks: Vec<u64> = checkpoints
        .iter()
        .copied()
        .filter(|&c| c >= 1 && c < steps)
        .collect();
    marks.sort_unstable();
    marks.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut stepper = Stepper::new(plan)?;
    let mut counts = vec![0u64; n];
    let mut x = sample_from(plan.initial(), rng.gen::<f64>());
    observe(0, x);
    counts[x] += 1;
    let mut visited = 1u64;
    let mut violations = 0u64;
    let mut trace = Vec::with_capacity(marks.len() + 1);
    let mut next_mark = 0usize;

    let tv_at = |counts: &[u64], visited: u64| {
        let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / visited as f64).collect();
        tv_from_masses(&emp, target)
    };

    if next_mark < marks.len() && marks[next_mark] == visited {
        trace.push(TvPoint {
            step: visited,
            tv: tv_at(&counts, visited),
        });
        next_mark += 1;
    }

    for t in 0..steps - 1 {
        let y = stepper.advance(plan, t, x, &mut rng)?;
        if !graph.adjacent_idx(x, y) {
            violations += 1;
        }
        x = y;
        observe(t + 1, x);
        counts[x] += 1;
        visited += 1;
        if next_mark < marks.len() && marks[next_mark] == visited {
            trace.push(TvPoint {
                step: visited,
                tv: tv_at(&counts, visited),
            });
            next_mark += 1;
        }
    }

    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / steps as f64).collect();
    trace.push(TvPoint {
        step: steps,
        tv: tv_from_masses(&empirical, target),
    });
    Ok(TrajectoryReport {
        seed,
        stream,
        steps,
        labels: graph.labels().to_vec(),
        visit_counts: counts,
        empirical,
        tv_trace: trace,
        consistency_violations: violations,
        final_state: graph.label(x).to_owned(),
    })
}

/// Runs one trajectory on stream 0.
pub fn run(
    plan: &ChainPlan,
    steps: u64,
    seed: u64,
    checkpoints: &[u64],
) -> Result<TrajectoryReport, SimError> {
    run_stream(plan, steps, seed, 0, checkpoints)
}

/// Runs `replicas` independent trajectories, stream `r` for replica `r`,
/// in parallel. Results are ordered by replica index and bitwise
/// reproducible for a given seed.
pub fn run_replicas(
    plan: &ChainPlan,
    steps: u64,
    seed: u64,
    replicas: u64,
    checkpoints: &[u64],
) -> Result<Vec<TrajectoryReport>, SimError> {
    (0..replicas)
        .into_par_iter()
        .map(|r| run_stream(plan, steps, seed, r, checkpoints))
        .collect()
}

/// Pools a replica batch against the plan's target.
pub fn pool_replicas(plan: &ChainPlan, reports: &[TrajectoryReport]) -> ReplicaPool {
    assert!(!reports.is_empty(), "cannot pool zero replicas");
    let n = reports[0].labels.len();
    let mut pooled = vec![0u64; n];
    let mut sum_tv = 0.0f64;
    let mut max_tv = 0.0f64;
    let mut violations = 0u64;
    for r in reports {
        for (acc, &c) in pooled.iter_mut().zip(&r.visit_counts) {
            *acc += c;
        }
        let last = r.tv_trace.last().expect("trace always has a final point");
        sum_tv += last.tv;
        max_tv = max_tv.max(last.tv);
        violations += r.consistency_violations;
    }
    let total: u64 = reports.iter().map(|r| r.steps).sum();
    let pooled_empirical: Vec<f64> = pooled.iter().map(|&c| c as f64 / total as f64).collect();
    ReplicaPool {
        replicas: reports.len() as u64,
        steps: reports[0].steps,
        seed: reports[0].seed,
        labels: reports[0].labels.clone(),
        pooled_tv: tv_from_masses(&pooled_empirical, plan.target().masses()),
        pooled_empirical,
        mean_final_tv: sum_tv / reports.len() as f64,
        max_final_tv: max_tv,
        total_consistency_violations: violations,
    }
}

/// Time average of `f` along the trajectory.
pub fn ergodic_average(
    report: &TrajectoryReport,
    f: &HashMap<String, f64>,
) -> Result<f64, SimError> {
    let mut acc = 0.0;
    for (label, &e) in report.labels.iter().zip(&report.empirical) {
        let v = f
            .get(label)
            .ok_or_else(|| SimError::MissingFunctionValue(label.clone()))?;
        acc += e * v;
    }
    Ok(acc)
}

/// Expectation of `f` under a distribution, for comparing against
/// [`ergodic_average`].
pub fn expectation(d: &Distribution, f: &HashMap<String, f64>) -> Result<f64, SimError> {
    let mut acc = 0.0;
    for i in 0..d.n() {
        let v = f
            .get(d.label(i))
            .ok_or_else(|| SimError::MissingFunctionValue(d.label(i).to_owned()))?;
        acc += d.mass(i) * v;
    }
    Ok(acc)
}

/// A replica counts as stuck when it spends more than this fraction of its
/// time in the starting state.
pub const STUCK_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub replicas: u64,
    pub steps: u64,
    pub seed: u64,
    pub stuck_threshold: f64,
    /// Fraction of replicas stuck in the starting state.
    pub stuck_fraction: f64,
    pub mean_final_tv: f64,
    pub mean_start_occupancy: f64,
}

/// Demonstrates why mixture schedules must grow slowly: on the four-state
/// graph s1-s3-s4-s2 with target mass half on s1 and half on s2, doubling
/// the mixture index every step shrinks the escape probability from s1 so
/// fast that the total escape mass stays below one half. A positive
/// fraction of walkers freezes at s1 forever and the empirical law cannot
/// converge. Growth past `2^53` stops changing f64 kernel entries, so the
/// per-step index is capped there; the residual escape mass beyond the cap
/// is below `2^-53` per step.
pub fn counterexample_scenario(steps: u64, replicas: u64, seed: u64) -> CounterexampleReport {
    let labels: Vec<String> = ["s1", "s2", "s3", "s4"].iter().map(|s| s.to_string()).collect();
    let graph = Graph::new(
        labels.clone(),
        &[
            ("s1".into(), "s3".into()),
            ("s3".into(), "s4".into()),
            ("s2".into(), "s4".into()),
        ],
    )
    .expect("fixed instance is valid");
    let target = Distribution::new(labels, vec![0.5, 0.5, 0.0, 0.0]).expect("valid target");

    // kernel for step t uses mixture index 2^(min(t,52)+1)
    let kernels: Vec<StochasticKernel> = (0..=52u32)
        .map(|l| {
            let mk = target.mixture(1u64 << (l + 1)).expect("low-mass set is s3, s4");
            StochasticKernel::build(&mk, &graph).expect("mixture is positive and graph connected")
        })
        .collect();
    let target_masses = target.masses();

    let per_replica: Vec<(bool, f64, f64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            let mut counts = [0u64; 4];
            let mut x = 0usize; // start at s1, the state the walk freezes in
            counts[x] += 1;
            for t in 0..steps - 1 {
                let l = t.min(52) as usize;
                x = kernels[l].sample_next_idx(x, rng.gen::<f64>());
                counts[x] += 1;
            }
            let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / steps as f64).collect();
            (
                emp[0] > STUCK_THRESHOLD,
                tv_from_masses(&emp, target_masses),
                emp[0],
            )
        })
        .collect();

    let stuck = per_replica.iter().filter(|&&(s, _, _)| s).count();
    CounterexampleReport {
        replicas,
        steps,
        seed,
        stuck_threshold: STUCK_THRESHOLD,
        stuck_fraction: stuck as f64 / replicas as f64,
        mean_final_tv: per_replica.iter().map(|&(_, tv, _)| tv).sum::<f64>() / replicas as f64,
        mean_start_occupancy: per_replica.iter().map(|&(_, _, o)| o).sum::<f64>()
            / replicas as f64,
    }
}
