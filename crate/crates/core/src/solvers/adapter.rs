//! Bridge to an external solver process.
//!
//! The process is invoked as `command [args...] MODEL SOLUTION`, reads the
//! model dump from `MODEL` and writes `var_name value` lines (plus an
//! optional `objective value` line) to `SOLUTION`. Exit code 0 means solved,
//! 2 means infeasible; anything else is a failure.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{SolverError, SolverResult};
use crate::model::{Assignment, CqmModel, Var};

/// Environment variable naming the adapter command when none is configured.
pub const ADAPTER_ENV: &str = "ICEPATH_ADAPTER_CMD";

/// Relative tolerance between reported and evaluated objectives.
const DISCREPANCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterConfig {
    /// Executable; falls back to the first word of `$ICEPATH_ADAPTER_CMD`.
    pub command: Option<String>,
    pub args: Vec<String>,
    /// Directory for the exchange files; a temporary one when unset.
    pub work_dir: Option<PathBuf>,
}

impl AdapterConfig {
    fn resolve(&self) -> Result<(String, Vec<String>), SolverError> {
        if let Some(cmd) = &self.command {
            return Ok((cmd.clone(), self.args.clone()));
        }
        let env = std::env::var(ADAPTER_ENV).map_err(|_| SolverError::AdapterUnavailable(format!("no command configured and ${ADAPTER_ENV} is unset")))?;
        let mut words = env.split_whitespace().map(str::to_string);
        let cmd = words.next().ok_or_else(|| SolverError::AdapterUnavailable(format!("${ADAPTER_ENV} is empty")))?;
        let mut args: Vec<String> = words.collect();
        args.extend(self.args.iter().cloned());
        Ok((cmd, args))
    }
}

/// Solution file text for an assignment: every variable in canonical order.
pub fn write_solution(model: &CqmModel, a: &Assignment, objective: Option<f64>) -> String {
    let mut out = String::new();
    if let Some(obj) = objective {
        writeln!(out, "objective {obj}").unwrap();
    }
    for v in model.variables() {
        writeln!(out, "{} {}", model.var_name(v), a.value(v)).unwrap();
    }
    out
}

/// Parses a solution file. Unlisted variables are 0, except that unlisted
/// slacks take their smallest feasible values for the listed edges.
pub fn parse_solution(model: &CqmModel, text: &str) -> Result<(Assignment, Option<f64>), SolverError> {
    let mut a = Assignment::zeros(model);
    let mut objective = None;
    let mut slack_given = [false; 2];
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: String| SolverError::Adapter(format!("solution line {}: {m}", n + 1));
        let (name, value) = line.split_once(char::is_whitespace).ok_or_else(|| bad("expected `name value`".into()))?;
        let value: f64 = value.trim().parse().map_err(|_| bad(format!("bad value {value:?}")))?;
        if name == "objective" {
            objective = Some(value);
            continue;
        }
        let var = model.var_by_name(name).ok_or_else(|| bad(format!("unknown variable {name:?}")))?;
        match var {
            Var::Shortfall => slack_given[0] = true,
            Var::Excess => slack_given[1] = true,
            _ => {}
        }
        a.set(var, value);
    }
    let count: f64 = a.x.iter().sum();
    let b = model.meta.bounds;
    if !slack_given[0] {
        a.shortfall = (b.l_min as f64 - count).max(0.0);
    }
    if !slack_given[1] {
        a.excess = (count - b.l_max as f64).max(0.0);
    }
    Ok((a, objective))
}

/// Runs the external solver and re-evaluates what it returns.
pub fn external_adapter(model: &CqmModel, cfg: &AdapterConfig) -> Result<SolverResult, SolverError> {
    let t0 = Instant::now();
    let (cmd, args) = cfg.resolve()?;
    let tmp;
    let dir = match &cfg.work_dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            d.clone()
        }
        None => {
            tmp = tempfile::tempdir()?;
            tmp.path().to_path_buf()
        }
    };
    let model_path = dir.join("model.cqm");
    let solution_path = dir.join("solution.txt");
    std::fs::write(&model_path, model.to_dump())?;
    let _ = std::fs::remove_file(&solution_path);
    let output = Command::new(&cmd)
        .args(&args)
        .arg(&model_path)
        .arg(&solution_path)
        .output()
        .map_err(|e| SolverError::AdapterUnavailable(format!("{cmd}: {e}")))?;
    let name = format!("adapter:{cmd}");
    match output.status.code() {
        Some(0) => {}
        Some(2) => {
            let mut r = SolverResult::from_assignment(model, Assignment::zeros(model), &name, 0, t0.elapsed());
            r.feasible = false;
            r.notes.push("external solver reported the model infeasible".into());
            return Ok(r);
        }
        code => {
            return Err(SolverError::Adapter(format!(
                "{cmd} exited with {code:?}: {}",
                String::from_utf8_lossy(&output.stderr).trim()
            )))
        }
    }
    let text = std::fs::read_to_string(&solution_path).map_err(|e| SolverError::Adapter(format!("reading solution: {e}")))?;
    let (assignment, reported) = parse_solution(model, &text)?;
    let mut r = SolverResult::from_assignment(model, assignment, &name, 0, t0.elapsed());
    r.reported_objective = reported;
    if let Some(rep) = reported {
        let scale = r.objective.abs().max(1e-12);
        if !((rep - r.objective).abs() / scale <= DISCREPANCY_TOL) {
            r.discrepancy = true;
            r.notes.push(format!("reported objective {rep} differs from evaluated {}", r.objective));
        }
    }
    Ok(r)
}
