//! Independent factor chains on strong products of graphs.
//!
//! A product target `mu(s_1,...,s_r) = prod_h mu_h(s_h)` on a strong
//! product of graphs never needs a chain on the joint space: running each
//! factor's chain independently and reading the tuple already gives a
//! consistent joint trajectory, because a strong-product edge is exactly
//! "every coordinate moves to itself or a neighbor". The joint empirical
//! law then converges to the product of the factor targets.
//!
//! The joint space is only materialized for bookkeeping, and only up to
//! [`JOINT_CAP`] composite states; past that the simulation tracks
//! marginals alone, which is the whole point of the factorization.

use crate::dist::{tv_from_masses, Distribution};
use crate::graph::{Graph, GraphError};
use crate::planner::{plan, ChainPlan, PlanError, PlanMode, ScheduleChoice};
use crate::simulator::{sample_from, SimError, Stepper, TrajectoryReport, TvPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Largest joint state space that is tracked explicitly.
pub const JOINT_CAP: u128 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum ProductError {
    #[error("a product needs at least one factor")]
    NoFactors,
    #[error("a run needs at least one step")]
    ZeroSteps,
    #[error("factor {index} is infeasible: {split_pair:?} sit in different components")]
    InfeasibleFactor {
        index: usize,
        split_pair: (String, String),
    },
    #[error("factor {index}: {source}")]
    Factor {
        index: usize,
        source: PlanError,
    },
    #[error("factor {index}: {source}")]
    FactorRun {
        index: usize,
        source: SimError,
    },
    #[error("joint labels cannot be composed: {0}")]
    JointBuild(#[from] GraphError),
    #[error("joint target disagrees with the factor product by {defect}")]
    JointTargetDefect { defect: f64 },
}

/// One factor of a product target: its own distribution, graph, and (when
/// its support splits inside a component) its own schedule or accuracy
/// target, exactly as in [`plan`].
#[derive(Debug, Clone)]
pub struct ProductFactor {
    pub target: Distribution,
    pub graph: Graph,
    pub schedule: Option<ScheduleChoice>,
    pub epsilon: Option<f64>,
}

#[derive(Debug)]
pub struct ProductSpec {
    plans: Vec<ChainPlan>,
    joint_graph: Option<Graph>,
    joint_target: Option<Distribution>,
    faithful: bool,
}

/// Plans every factor and, when the composite space is small enough,
/// builds the joint graph (left-fold strong product of the factor chains'
/// graphs) and the joint target (product measure in the same row-major
/// order). The two are cross-checked label by label.
pub fn build_product_spec(factors: &[ProductFactor]) -> Result<ProductSpec, ProductError> {
    if factors.is_empty() {
        return Err(ProductError::NoFactors);
    }
    let mut plans = Vec::with_capacity(factors.len());
    for (index, f) in factors.iter().enumerate() {
        let p = plan(&f.target, &f.graph, f.schedule.as_ref(), f.epsilon)
            .map_err(|source| ProductError::Factor { index, source })?;
        if p.mode() == PlanMode::Infeasible {
            let (a, b) = p.split_pair().expect("infeasible plans carry a witness");
            return Err(ProductError::InfeasibleFactor {
                index,
                split_pair: (a.to_owned(), b.to_owned()),
            });
        }
        plans.push(p);
    }

    // a factor converges to its exact target only if it is constant, a
    // plain fixed kernel, or driven by an unbounded schedule
    let faithful = plans.iter().all(|p| match p.mode() {
        PlanMode::Constant => true,
        PlanMode::Homogeneous => p.epsilon_info().is_none(),
        PlanMode::Nonhomogeneous => p.schedule().expect("scheduled").faithful(),
        PlanMode::Infeasible => unreachable!("rejected above"),
    });

    let joint_size: u128 = plans.iter().map(|p| p.graph().n() as u128).product();
    let (joint_graph, joint_target) = if joint_size <= JOINT_CAP {
        let mut jg = plans[0].graph().clone();
        let mut jm = plans[0].target().masses().to_vec();
        for p in &plans[1..] {
            jg = jg.strong_product(p.graph())?;
            let fm = p.target().masses();
            let mut next = Vec::with_capacity(jm.len() * fm.len());
            for &a in &jm {
                for &b in fm {
                    next.push(a * b);
                }
            }
            jm = next;
        }
        check_joint_consistency(&plans, &jg, &jm)?;
        let jt = Distribution::from_product(jg.labels().to_vec(), jm);
        (Some(jg), Some(jt))
    } else {
        (None, None)
    };

    Ok(ProductSpec {
        plans,
        joint_graph,
        joint_target,
        faithful,
    })
}

/// Row-major strides of the factor state spaces.
fn strides(plans: &[ChainPlan]) -> Vec<usize> {
    let mut s = vec![1usize; plans.len()];
    for h in (0..plans.len().saturating_sub(1)).rev() {
        s[h] = s[h + 1] * plans[h + 1].graph().n();
    }
    s
}

/// Independent route to the joint layout: decompose every joint index,
/// re-compose the label and re-multiply the masses, and compare with what
/// the graph fold produced.
fn check_joint_consistency(
    plans: &[ChainPlan],
    jg: &Graph,
    jm: &[f64],
) -> Result<(), ProductError> {
    let st = strides(plans);
    let mut worst = 0.0f64;
    for (idx, &jm_idx) in jm.iter().enumerate() {
        let mut label = String::new();
        let mut mass = 1.0f64;
        for (h, p) in plans.iter().enumerate() {
            let i = (idx / st[h]) % p.graph().n();
            mass *= p.target().mass(i);
            label = if h == 0 {
                p.graph().label(i).to_owned()
            } else {
                format!("({},{})", label, p.graph().label(i))
            };
        }
        if jg.label(idx) != label {
            return Err(ProductError::JointTargetDefect { defect: f64::NAN });
        }
        worst = worst.max((jm_idx - mass).abs());
    }
    if worst > 1e-12 {
        return Err(ProductError::JointTargetDefect { defect: worst });
    }
    Ok(())
}

impl ProductSpec {
    pub fn factors(&self) -> usize {
        self.plans.len()
    }

    pub fn plans(&self) -> &[ChainPlan] {
        &self.plans
    }

    pub fn joint_graph(&self) -> Option<&Graph> {
        self.joint_graph.as_ref()
    }

    pub fn joint_target(&self) -> Option<&Distribution> {
        self.joint_target.as_ref()
    }

    /// False when any factor only approximates its target (accuracy-target
    /// kernels, finite block tables).
    pub fn faithful(&self) -> bool {
        self.faithful
    }

    pub fn joint_size(&self) -> u128 {
        self.plans.iter().map(|p| p.graph().n() as u128).product()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductReport {
    pub steps: u64,
    pub seed: u64,
    pub faithful: bool,
    /// One report per factor, identical to a standalone run of that factor
    /// on RNG stream `h`.
    pub factors: Vec<TrajectoryReport>,
    /// Joint-space report; absent when the composite space exceeds the
    /// tracking cap. Its violation count is the number of steps where any
    /// factor broke adjacency.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint: Option<TrajectoryReport>,
    /// Max over tracked joint states of |joint empirical - product of
    /// marginal empiricals|.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factorization_defect: Option<f64>,
}

/// Advances all factor chains in lockstep for `steps` states, factor `h`
/// on RNG stream `h`. Factor trajectories are exactly what a standalone
/// run of that factor would produce; the joint tuple is derived from them.
pub fn run_product(
    spec: &ProductSpec,
    steps: u64,
    seed: u64,
    checkpoints: &[u64],
) -> Result<ProductReport, ProductError> {
    if steps == 0 {
        return Err(ProductError::ZeroSteps);
    }
    let r = spec.plans.len();
    for (index, p) in spec.plans.iter().enumerate() {
        if let Some(total) = p.schedule().and_then(|s| s.practical_len()) {
            if total < (steps - 1) as u128 {
                return Err(ProductError::FactorRun {
                    index,
                    source: SimError::Plan(PlanError::ScheduleExhausted { t: total as u64 }),
                });
            }
        }
    }

    let mut marks: Vec<u64> = checkpoints
        .iter()
        .copied()
        .filter(|&c| c >= 1 && c < steps)
        .collect();
    marks.sort_unstable();
    marks.dedup();

    let mut rngs: Vec<ChaCha8Rng> = (0..r)
        .map(|h| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(h as u64);
            rng
        })
        .collect();
    let mut steppers = Vec::with_capacity(r);
    for (index, p) in spec.plans.iter().enumerate() {
        steppers.push(
            Stepper::new(p).map_err(|source| ProductError::FactorRun { index, source })?,
        );
    }

    let mut xs: Vec<usize> = spec
        .plans
        .iter()
        .zip(&mut rngs)
        .map(|(p, rng)| sample_from(p.initial(), rng.gen::<f64>()))
        .collect();
    let mut counts: Vec<Vec<u64>> = spec.plans.iter().map(|p| vec![0; p.graph().n()]).collect();
    let mut violations = vec![0u64; r];
    let mut traces: Vec<Vec<TvPoint>> = vec![Vec::new(); r];

    let st = strides(&spec.plans);
    let joint_n = spec.joint_graph.as_ref().map(|g| g.n());
    let mut joint_counts = joint_n.map(|n| vec![0u64; n]);
    let mut joint_violations = 0u64;
    let mut joint_trace: Vec<TvPoint> = Vec::new();

    let joint_idx = |xs: &[usize]| -> usize { xs.iter().zip(&st).map(|(&x, &s)| x * s).sum() };
    let record = |counts: &mut Vec<Vec<u64>>, joint_counts: &mut Option<Vec<u64>>, xs: &[usize]| {
        for (c, &x) in counts.iter_mut().zip(xs) {
            c[x] += 1;
        }
        if let Some(jc) = joint_counts {
            jc[joint_idx(xs)] += 1;
        }
    };
    record(&mut counts, &mut joint_counts, &xs);
    let mut visited = 1u64;
    let mut next_mark = 0usize;

    let checkpoint =
        |visited: u64,
         counts: &[Vec<u64>],
         joint_counts: &Option<Vec<u64>>,
         traces: &mut Vec<Vec<TvPoint>>,
         joint_trace: &mut Vec<TvPoint>| {
            for (h, p) in spec.plans.iter().enumerate() {
                let emp: Vec<f64> = counts[h]
                    .iter()
                    .map(|&c| c as f64 / visited as f64)
                    .collect();
                traces[h].push(TvPoint {
                    step: visited,
                    tv: tv_from_masses(&emp, p.target().masses()),
                });
            }
            if let (Some(jc), Some(jt)) = (joint_counts, &spec.joint_target) {
                let emp: Vec<f64> = jc.iter().map(|&c| c as f64 / visited as f64).collect();
                joint_trace.push(TvPoint {
                    step: visited,
                    tv: tv_from_masses(&emp, jt.masses()),
                });
            }
        };
    if next_mark < marks.len() && marks[next_mark] == visited {
        checkpoint(visited, &counts, &joint_counts, &mut traces, &mut joint_trace);
        next_mark += 1;
    }

    for t in 0..steps - 1 {
        let mut any_violation = false;
        for h in 0..r {
            let p = &spec.plans[h];
            let y = steppers[h]
                .advance(p, t, xs[h], &mut rngs[h])
                .map_err(|source| ProductError::FactorRun { index: h, source })?;
            if !p.graph().adjacent_idx(xs[h], y) {
                violations[h] += 1;
                any_violation = true;
            }
            xs[h] = y;
        }
        if any_violation {
            joint_violations += 1;
        }
        record(&mut counts, &mut joint_counts, &xs);
        visited += 1;
        if next_mark < marks.len() && marks[next_mark] == visited {
            checkpoint(visited, &counts, &joint_counts, &mut traces, &mut joint_trace);
            next_mark += 1;
        }
    }

    let mut factors = Vec::with_capacity(r);
    let mut marginal_emp: Vec<Vec<f64>> = Vec::with_capacity(r);
    for (h, p) in spec.plans.iter().enumerate() {
        let empirical: Vec<f64> = counts[h].iter().map(|&c| c as f64 / steps as f64).collect();
        let mut tv_trace = std::mem::take(&mut traces[h]);
        tv_trace.push(TvPoint {
            step: steps,
            tv: tv_from_masses(&empirical, p.target().masses()),
        });
        factors.push(TrajectoryReport {
            seed,
            stream: h as u64,
            steps,
            labels: p.graph().labels().to_vec(),
            visit_counts: counts[h].clone(),
            empirical: empirical.clone(),
            tv_trace,
            consistency_violations: violations[h],
            final_state: p.graph().label(xs[h]).to_owned(),
        });
        marginal_emp.push(empirical);
    }

    let (joint, factorization_defect) = match (&spec.joint_graph, &spec.joint_target, joint_counts)
    {
        (Some(jg), Some(jt), Some(jc)) => {
            let empirical: Vec<f64> = jc.iter().map(|&c| c as f64 / steps as f64).collect();
            let mut defect = 0.0f64;
            for (idx, &e) in empirical.iter().enumerate() {
                let mut prod = 1.0f64;
                for (h, emp) in marginal_emp.iter().enumerate() {
                    prod *= emp[(idx / st[h]) % spec.plans[h].graph().n()];
                }
                defect = defect.max((e - prod).abs());
            }
            joint_trace.push(TvPoint {
                step: steps,
                tv: tv_from_masses(&empirical, jt.masses()),
            });
            (
                Some(TrajectoryReport {
                    seed,
                    stream: 0,
                    steps,
                    labels: jg.labels().to_vec(),
                    visit_counts: jc,
                    empirical,
                    tv_trace: joint_trace,
                    consistency_violations: joint_violations,
                    final_state: jg.label(joint_idx(&xs)).to_owned(),
                }),
                Some(defect),
            )
        }
        _ => (None, None),
    };

    Ok(ProductReport {
        steps,
        seed,
        faithful: spec.faithful,
        factors,
        joint,
        factorization_defect,
    })
}
