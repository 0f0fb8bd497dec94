//! Sampling from a target distribution under graph movement constraints.
//!
//! A walker on a finite graph can only step along edges. Given a target
//! distribution over the vertices, this crate decides whether some Markov
//! chain respecting the edges has that target as its long-run law, builds
//! the chain when one exists, and simulates it:
//!
//! * [`graph`]: undirected simple graphs over string labels, components,
//!   induced subgraphs, strong products.
//! * [`dist`]: distributions over label sets, total variation, the
//!   low-mass mixture family.
//! * [`kernel`]: the reversible transition kernel for a strictly positive
//!   target on a connected graph, plus contraction diagnostics.
//! * [`planner`]: the four-way feasibility classification and the
//!   resulting chain plans (constant, fixed kernel, scheduled kernels, or
//!   infeasible with a witness).
//! * [`simulator`]: seeded trajectory simulation, replica pools, and the
//!   freeze-out counterexample showing why schedules must grow slowly.
//! * [`product`]: independent coupling of per-factor chains over a strong
//!   product of graphs.

pub mod dist;
pub mod graph;
pub mod kernel;
pub mod planner;
pub mod product;
pub mod simulator;

pub use dist::Distribution;
pub use graph::Graph;
pub use kernel::StochasticKernel;
pub use planner::{classify, kernel_at_time, plan, CaseClass, CaseTag, ChainPlan, PlanMode};
