//! Instance loading: graph/distribution JSON files, schedule requests
//! (token, growth constant, or file), and product spec files.

use std::fs;
use std::path::{Path, PathBuf};

use graphmc::dist::Distribution;
use graphmc::graph::Graph;
use graphmc::planner::ScheduleChoice;
use serde::Deserialize;

use crate::CliError;

pub fn load_graph(path: &Path) -> Result<Graph, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation("IO", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation("INVALID_GRAPH", format!("{}: {e}", path.display())))
}

pub fn load_dist(path: &Path) -> Result<Distribution, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation("IO", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation("INVALID_DIST", format!("{}: {e}", path.display())))
}

/// Schedule request grammar: `paper`, `growth:C` (C an integer or `N/D`
/// fraction), or a path to a JSON schedule file (`{"kind": ...}`).
pub fn parse_schedule_spec(spec: &str, base: Option<&Path>) -> Result<ScheduleChoice, CliError> {
    if spec == "paper" {
        return Ok(ScheduleChoice::PaperPoly);
    }
    if let Some(c) = spec.strip_prefix("growth:") {
        let (num, den) = match c.split_once('/') {
            Some((n, d)) => (n, d),
            None => (c, "1"),
        };
        let c_num: u64 = num.parse().map_err(|_| {
            CliError::validation("INVALID_SCHEDULE", format!("bad growth constant {c:?}"))
        })?;
        let c_den: u64 = den.parse().map_err(|_| {
            CliError::validation("INVALID_SCHEDULE", format!("bad growth constant {c:?}"))
        })?;
        return Ok(ScheduleChoice::GrowthConstrained { c_num, c_den });
    }
    let path = resolve(base, Path::new(spec));
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::validation("IO", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation("INVALID_SCHEDULE", format!("{}: {e}", path.display())))
}

fn resolve(base: Option<&Path>, path: &Path) -> PathBuf {
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_owned(),
    }
}

/// Product spec file: a list of factors, each pointing at its own graph
/// and distribution files, with an optional schedule (inline object or
/// the same token grammar as `--schedule`) or epsilon. Relative paths are
/// resolved against the spec file's directory.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductSpecFile {
    pub factors: Vec<FactorEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorEntry {
    pub graph: PathBuf,
    pub dist: PathBuf,
    #[serde(default)]
    pub schedule: Option<ScheduleEntry>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ScheduleEntry {
    Inline(ScheduleChoice),
    Request(String),
}

pub struct LoadedFactor {
    pub graph: Graph,
    pub dist: Distribution,
    pub schedule: Option<ScheduleChoice>,
    pub epsilon: Option<f64>,
}

pub fn load_product_spec(path: &Path) -> Result<Vec<LoadedFactor>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation("IO", format!("{}: {e}", path.display())))?;
    let spec: ProductSpecFile = serde_json::from_str(&text)
        .map_err(|e| CliError::validation("INVALID_SPEC", format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_owned);
    let base = base.as_deref();
    let mut factors = Vec::with_capacity(spec.factors.len());
    for entry in spec.factors {
        let schedule = match entry.schedule {
            None => None,
            Some(ScheduleEntry::Inline(choice)) => Some(choice),
            Some(ScheduleEntry::Request(token)) => Some(parse_schedule_spec(&token, base)?),
        };
        factors.push(LoadedFactor {
            graph: load_graph(&resolve(base, &entry.graph))?,
            dist: load_dist(&resolve(base, &entry.dist))?,
            schedule,
            epsilon: entry.epsilon,
        });
    }
    Ok(factors)
}
