//! Command-line surface over the chain planner and simulator.
//!
//! Exit codes: 0 success, 2 validation or input errors, 3 infeasible
//! instances (the verdict is a result, so it gets its own code for
//! scripts to branch on). Errors go to stderr as one JSON object:
//! `{"error": CODE, "detail": "..."}`.

mod emit;
mod input;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphmc::dist::DistError;
use graphmc::graph::GraphError;
use graphmc::kernel::{lemma_bound_check, KernelError};
use graphmc::planner::{
    classify, plan, CaseTag, ChainPlan, PlanError, PlanMode, ScheduleChoice,
};
use graphmc::product::{build_product_spec, run_product, ProductError, ProductFactor};
use graphmc::simulator::{
    counterexample_scenario, pool_replicas, run, run_replicas, run_stream_observed, SimError,
};
use serde::Serialize;

/// Trace files stop growing after this many rows.
const TRACE_ROW_CAP: u64 = 10_000_000;

#[derive(Debug)]
pub struct CliError {
    code: &'static str,
    detail: String,
    exit: i32,
}

impl CliError {
    fn validation(code: &'static str, detail: impl Into<String>) -> Self {
        CliError {
            code,
            detail: detail.into(),
            exit: 2,
        }
    }

    fn infeasible(detail: impl Into<String>) -> Self {
        CliError {
            code: "INFEASIBLE",
            detail: detail.into(),
            exit: 3,
        }
    }

    fn stderr_json(&self) -> String {
        let detail = serde_json::to_string(&self.detail).expect("strings serialize");
        format!("{{\"error\":\"{}\",\"detail\":{}}}", self.code, detail)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::validation("IO", e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::validation("INVALID_GRAPH", e.to_string())
    }
}

impl From<DistError> for CliError {
    fn from(e: DistError) -> Self {
        CliError::validation("INVALID_DIST", e.to_string())
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        let code = match &e {
            KernelError::LabelMismatch => "LABEL_MISMATCH",
            KernelError::NotConnected => "NOT_CONNECTED",
            KernelError::ZeroMass(_) => "ZERO_MASS",
            KernelError::SingleState => "SINGLE_STATE",
            KernelError::NotStochastic { .. } => "KERNEL",
            KernelError::TooFewStates { .. } => "TOO_FEW_STATES",
            KernelError::InvalidK { .. } => "INVALID_K",
            KernelError::Dist(_) => "INVALID_DIST",
        };
        CliError::validation(code, e.to_string())
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Graph(inner) => inner.into(),
            PlanError::Dist(inner) => inner.into(),
            PlanError::Kernel(inner) => inner.into(),
            other => {
                let code = match &other {
                    PlanError::LabelMismatch => "LABEL_MISMATCH",
                    PlanError::ConflictingOptions => "CONFLICTING_OPTIONS",
                    PlanError::MissingSchedule => "MISSING_SCHEDULE",
                    PlanError::InvalidEpsilon(_) => "INVALID_EPSILON",
                    PlanError::InvalidOverride(_) => "INVALID_SCHEDULE",
                    PlanError::KbarTooLarge(_) => "KBAR_TOO_LARGE",
                    PlanError::WrongMode => "WRONG_MODE",
                    PlanError::ScheduleExhausted { .. } => "SCHEDULE_EXHAUSTED",
                    PlanError::UnsupportedInitial(_) => "INVALID_INITIAL",
                    _ => unreachable!("wrapped errors handled above"),
                };
                CliError::validation(code, other.to_string())
            }
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InfeasiblePlan(a, b) => CliError::infeasible(format!(
                "no graph-consistent chain exists: support states {a:?} and {b:?} \
                 lie in different components"
            )),
            SimError::ZeroSteps => CliError::validation("INVALID_STEPS", e.to_string()),
            SimError::UnknownState(_) | SimError::MissingFunctionValue(_) => {
                CliError::validation("INVALID_FUNCTION", e.to_string())
            }
            SimError::Plan(inner) => inner.into(),
        }
    }
}

impl From<ProductError> for CliError {
    fn from(e: ProductError) -> Self {
        match e {
            ProductError::InfeasibleFactor { index, split_pair } => {
                CliError::infeasible(format!(
                    "factor {index} has split support ({:?} vs {:?})",
                    split_pair.0, split_pair.1
                ))
            }
            ProductError::Factor { index, source } => {
                let mut err: CliError = source.into();
                err.detail = format!("factor {index}: {}", err.detail);
                err
            }
            ProductError::FactorRun { index, source } => {
                let mut err: CliError = source.into();
                err.detail = format!("factor {index}: {}", err.detail);
                err
            }
            ProductError::NoFactors => CliError::validation("INVALID_SPEC", e.to_string()),
            ProductError::ZeroSteps => CliError::validation("INVALID_STEPS", e.to_string()),
            ProductError::JointBuild(inner) => inner.into(),
            ProductError::JointTargetDefect { .. } => {
                CliError::validation("JOINT_DEFECT", e.to_string())
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "graphmc",
    version,
    about = "Plan and simulate graph-consistent Markov chains for a target distribution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Infer from the flags that are present.
    Auto,
    /// Fixed-accuracy homogeneous chain; requires --epsilon.
    Epsilon,
    /// Non-homogeneous chain over blocks; requires --schedule.
    Schedule,
}

#[derive(Args)]
struct OutArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: json (default) or csv field/value rows.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct InstanceArgs {
    /// Graph file: {"labels": [...], "edges": [["u","v"], ...]}.
    #[arg(long)]
    graph: PathBuf,
    /// Target distribution file: {"labels": [...], "mass": [...]}.
    #[arg(long)]
    dist: PathBuf,
}

#[derive(Args)]
struct ModeArgs {
    /// How to close the gap when the support is not connected.
    #[arg(long, value_enum, default_value_t = Mode::Auto)]
    mode: Mode,
    /// Accuracy for the fixed-index approximation, 0 < epsilon < 1.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Schedule request: "paper", "growth:C", or a schedule JSON file.
    #[arg(long)]
    schedule: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the instance into one of the four support cases.
    Classify {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Emit the executable chain plan (mode, thresholds, schedule table).
    Plan {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        mode: ModeArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Dump the transition kernel the plan would run.
    Kernel {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Mixture index for gapped supports (builds the kernel of mixture k).
        #[arg(long, conflicts_with = "epsilon")]
        k: Option<u64>,
        /// Accuracy; picks the smallest admissible mixture index.
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Check the contraction-coefficient bound for mixture index k.
    Dobrushin {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Mixture index; must exceed the positivity threshold.
        #[arg(long)]
        k: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the planned chain and report empirical statistics.
    Simulate {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        mode: ModeArgs,
        /// Trajectory length in visited states.
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Independent trajectories; > 1 reports the pooled statistics.
        #[arg(long, default_value_t = 1)]
        replicas: u64,
        /// Steps at which to record distance checkpoints, comma-separated.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<u64>,
        /// Write the visited (time, state) rows to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run independent factor chains and report joint plus marginals.
    Product {
        /// Spec file: {"factors": [{"graph": ..., "dist": ...,
        /// "schedule": ..., "epsilon": ...}, ...]}.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Replay the fast-doubling schedule that traps the chain.
    Counterexample {
        #[arg(long, default_value_t = 100_000)]
        steps: u64,
        #[arg(long, default_value_t = 1_000)]
        replicas: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn emit_report(report: &impl Serialize, out: &OutArgs) -> Result<(), CliError> {
    let text = match out.format {
        Format::Json => emit::to_json(report)?,
        Format::Csv => emit::to_csv(report)?,
    };
    emit::write_out(&text, out.out.as_deref())?;
    Ok(())
}

fn resolve_mode(args: &ModeArgs) -> Result<(Option<f64>, Option<ScheduleChoice>), CliError> {
    let schedule = args
        .schedule
        .as_deref()
        .map(|s| input::parse_schedule_spec(s, None))
        .transpose()?;
    match args.mode {
        Mode::Auto => {
            if args.epsilon.is_some() && schedule.is_some() {
                return Err(CliError::validation(
                    "CONFLICTING_OPTIONS",
                    "--epsilon and --schedule are mutually exclusive",
                ));
            }
            Ok((args.epsilon, schedule))
        }
        Mode::Epsilon => {
            if schedule.is_some() {
                return Err(CliError::validation(
                    "CONFLICTING_OPTIONS",
                    "--mode epsilon does not take --schedule",
                ));
            }
            if args.epsilon.is_none() {
                return Err(CliError::validation(
                    "MISSING_EPSILON",
                    "--mode epsilon requires --epsilon",
                ));
            }
            Ok((args.epsilon, None))
        }
        Mode::Schedule => {
            if args.epsilon.is_some() {
                return Err(CliError::validation(
                    "CONFLICTING_OPTIONS",
                    "--mode schedule does not take --epsilon",
                ));
            }
            if schedule.is_none() {
                return Err(CliError::validation(
                    "MISSING_SCHEDULE",
                    "--mode schedule requires --schedule",
                ));
            }
            Ok((None, schedule))
        }
    }
}

fn load_instance(
    instance: &InstanceArgs,
) -> Result<(graphmc::Graph, graphmc::Distribution), CliError> {
    Ok((
        input::load_graph(&instance.graph)?,
        input::load_dist(&instance.dist)?,
    ))
}

fn make_plan(instance: &InstanceArgs, mode: &ModeArgs) -> Result<ChainPlan, CliError> {
    let (g, d) = load_instance(instance)?;
    let (epsilon, schedule) = resolve_mode(mode)?;
    Ok(plan(&d, &g, schedule.as_ref(), epsilon)?)
}

fn cmd_classify(instance: &InstanceArgs, out: &OutArgs) -> Result<i32, CliError> {
    let (g, d) = load_instance(instance)?;
    let class = classify(&d, &g)?;
    emit_report(&class, out)?;
    Ok(if class.tag == CaseTag::SupportSplit { 3 } else { 0 })
}

fn cmd_plan(instance: &InstanceArgs, mode: &ModeArgs, out: &OutArgs) -> Result<i32, CliError> {
    let p = make_plan(instance, mode)?;
    emit_report(&p.summary(), out)?;
    Ok(if p.mode() == PlanMode::Infeasible { 3 } else { 0 })
}

fn cmd_kernel(
    instance: &InstanceArgs,
    k: Option<u64>,
    epsilon: Option<f64>,
    out: &OutArgs,
) -> Result<i32, CliError> {
    let (g, d) = load_instance(instance)?;
    let class = classify(&d, &g)?;
    let kernel = match class.tag {
        CaseTag::Dirac => {
            return Err(CliError::validation(
                "NO_KERNEL",
                "single-atom target runs a constant chain with no kernel",
            ))
        }
        CaseTag::SupportSplit => {
            return Err(CliError::infeasible(
                "support splits across components; no consistent chain exists",
            ))
        }
        CaseTag::ConnectedSupport => {
            if k.is_some() || epsilon.is_some() {
                return Err(CliError::validation(
                    "CONFLICTING_OPTIONS",
                    "connected support runs the exact kernel; drop --k/--epsilon",
                ));
            }
            plan(&d, &g, None, None)?
                .fixed_kernel()
                .expect("homogeneous plan carries a kernel")
        }
        CaseTag::SupportInOneComponent => match (k, epsilon) {
            (Some(k), None) => {
                let choice = ScheduleChoice::Practical {
                    blocks: vec![1],
                    ks: Some(vec![k]),
                };
                plan(&d, &g, Some(&choice), None)?.kernel_for_k(k)?
            }
            (None, Some(_)) => plan(&d, &g, None, epsilon)?
                .fixed_kernel()
                .expect("epsilon plan carries a kernel"),
            (None, None) => {
                return Err(CliError::validation(
                    "MISSING_INDEX",
                    "gapped support needs --k or --epsilon to pick a mixture kernel",
                ))
            }
            (Some(_), Some(_)) => unreachable!("clap rejects the pair"),
        },
    };
    emit_report(&kernel.dump(), out)?;
    Ok(0)
}

fn cmd_dobrushin(instance: &InstanceArgs, k: u64, out: &OutArgs) -> Result<i32, CliError> {
    let (g, d) = load_instance(instance)?;
    let report = lemma_bound_check(&d, &g, k)?;
    emit_report(&report, out)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    instance: &InstanceArgs,
    mode: &ModeArgs,
    steps: u64,
    seed: u64,
    replicas: u64,
    checkpoints: &[u64],
    trace: Option<&PathBuf>,
    out: &OutArgs,
) -> Result<i32, CliError> {
    let p = make_plan(instance, mode)?;
    if replicas > 1 {
        if trace.is_some() {
            return Err(CliError::validation(
                "CONFLICTING_OPTIONS",
                "--trace records a single trajectory; drop --replicas",
            ));
        }
        let reports = run_replicas(&p, steps, seed, replicas, checkpoints)?;
        emit_report(&pool_replicas(&p, &reports), out)?;
        return Ok(0);
    }
    let report = match trace {
        None => run(&p, steps, seed, checkpoints)?,
        Some(path) => {
            let labels: Vec<String> = p.graph().labels().to_vec();
            let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
            w.write_record(["time", "state"])
                .map_err(|e| CliError::validation("IO", e.to_string()))?;
            let mut rows = 0u64;
            let mut trace_err: Option<csv::Error> = None;
            let report = run_stream_observed(&p, steps, seed, 0, checkpoints, |t, idx| {
                if rows < TRACE_ROW_CAP && trace_err.is_none() {
                    if let Err(e) = w.write_record([t.to_string().as_str(), labels[idx].as_str()])
                    {
                        trace_err = Some(e);
                    }
                    rows += 1;
                }
            })?;
            if let Some(e) = trace_err {
                return Err(CliError::validation("IO", e.to_string()));
            }
            w.flush()?;
            report
        }
    };
    emit_report(&report, out)?;
    Ok(0)
}

fn cmd_product(
    spec: &Path,
    steps: u64,
    seed: u64,
    checkpoints: &[u64],
    out: &OutArgs,
) -> Result<i32, CliError> {
    let factors: Vec<ProductFactor> = input::load_product_spec(spec)?
        .into_iter()
        .map(|f| ProductFactor {
            target: f.dist,
            graph: f.graph,
            schedule: f.schedule,
            epsilon: f.epsilon,
        })
        .collect();
    let spec = build_product_spec(&factors)?;
    let report = run_product(&spec, steps, seed, checkpoints)?;
    emit_report(&report, out)?;
    Ok(0)
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Classify { instance, out } => cmd_classify(&instance, &out),
        Command::Plan {
            instance,
            mode,
            out,
        } => cmd_plan(&instance, &mode, &out),
        Command::Kernel {
            instance,
            k,
            epsilon,
            out,
        } => cmd_kernel(&instance, k, epsilon, &out),
        Command::Dobrushin { instance, k, out } => cmd_dobrushin(&instance, k, &out),
        Command::Simulate {
            instance,
            mode,
            steps,
            seed,
            replicas,
            checkpoints,
            trace,
            out,
        } => cmd_simulate(
            &instance,
            &mode,
            steps,
            seed,
            replicas,
            &checkpoints,
            trace.as_ref(),
            &out,
        ),
        Command::Product {
            spec,
            steps,
            seed,
            checkpoints,
            out,
        } => cmd_product(&spec, steps, seed, &checkpoints, &out),
        Command::Counterexample {
            steps,
            replicas,
            seed,
            out,
        } => {
            let report = counterexample_scenario(steps, replicas, seed);
            emit_report(&report, &out)?;
            Ok(0)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            let _ = writeln!(io::stderr(), "{}", e.stderr_json());
            std::process::exit(e.exit);
        }
    }
}
