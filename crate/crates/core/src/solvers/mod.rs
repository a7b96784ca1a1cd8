//! Solvers for routing models and other binary search spaces.
//!
//! Every routing solver returns a [`SolverResult`] whose objective comes from
//! [`crate::model::evaluate`], never from the solver's own bookkeeping.

mod adapter;
mod anneal;
mod exhaustive;
mod linegraph;
pub(crate) mod route_space;

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{evaluate, Assignment, CqmModel, Violation};

pub use adapter::{external_adapter, parse_solution, write_solution, AdapterConfig, ADAPTER_ENV};
pub use anneal::{anneal, AnnealOutcome, AnnealSchedule};
pub use exhaustive::{exhaustive, ExhaustiveOutcome, MAX_EXHAUSTIVE_VARS};
pub use linegraph::{solve_linegraph_dijkstra, solve_linegraph_with_limit, DEFAULT_EXPANSION_LIMIT};
pub use route_space::{RouteSpace, RouteState};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("{vars} binary variables exceed the exhaustive cap of {cap}")]
    TooManyVariables { vars: usize, cap: usize },
    #[error("adapter unavailable: {0}")]
    AdapterUnavailable(String),
    #[error("adapter failed: {0}")]
    Adapter(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Outcome of one solver run on a routing model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub assignment: Assignment,
    pub objective: f64,
    pub feasible: bool,
    pub violations: Vec<Violation>,
    pub wall_time: f64,
    pub solver_name: String,
    pub seed: u64,
    /// Objective claimed by an external solver, when one was reported.
    pub reported_objective: Option<f64>,
    /// Set when the reported objective disagrees with the evaluator.
    pub discrepancy: bool,
    /// Best search energy after each sweep of the first restart (annealing only).
    pub best_trace: Vec<f64>,
    pub notes: Vec<String>,
}

impl SolverResult {
    /// Evaluates `assignment` and wraps it.
    pub fn from_assignment(model: &CqmModel, assignment: Assignment, solver_name: &str, seed: u64, wall_time: Duration) -> Self {
        let ev = evaluate(model, &assignment);
        Self {
            assignment,
            objective: ev.objective,
            feasible: ev.feasible,
            violations: ev.violations,
            wall_time: wall_time.as_secs_f64(),
            solver_name: solver_name.to_string(),
            seed,
            reported_objective: None,
            discrepancy: false,
            best_trace: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Edge selection completed with flows and slacks, then evaluated.
    pub fn from_bits(model: &CqmModel, bits: &[bool], solver_name: &str, seed: u64, wall_time: Duration) -> Self {
        Self::from_assignment(model, Assignment::complete(model, bits), solver_name, seed, wall_time)
    }
}

/// A space of binary vectors with an energy that can be updated one flip at
/// a time. The energy includes the optimal setting of any continuous
/// variables for the current bits.
pub trait SearchSpace: Sync {
    type State: Clone + Send;

    fn num_vars(&self) -> usize;
    fn state(&self, bits: &[bool]) -> Self::State;
    fn bits<'a>(&self, s: &'a Self::State) -> &'a [bool];
    /// Cached energy of the state.
    fn energy(&self, s: &Self::State) -> f64;
    /// Energy recomputed from scratch for these bits.
    fn exact_energy(&self, bits: &[bool]) -> f64;
    /// Energy change if variable `i` were flipped.
    fn flip_delta(&self, s: &Self::State, i: usize) -> f64;
    fn flip(&self, s: &mut Self::State, i: usize);
    /// Hard constraints that the continuous completion cannot repair.
    fn is_feasible(&self, s: &Self::State) -> bool;
    /// Hard move filter; inadmissible states are never visited by annealing.
    fn is_admissible(&self, _s: &Self::State) -> bool {
        true
    }
    /// Replaces the cached energy by an exact recomputation.
    fn resync(&self, s: &mut Self::State);
}

/// Search spaces that can also be annealed.
pub trait AnnealSpace: SearchSpace {
    fn initial_state(&self, rng: &mut ChaCha8Rng) -> Self::State;
    /// Appends the variables to flip for one proposed move.
    fn propose(&self, s: &Self::State, rng: &mut ChaCha8Rng, flips: &mut Vec<usize>);
    /// Energy added to infeasible states during the search.
    fn infeasibility_penalty(&self) -> f64;
}

/// Total order used to pick among candidate solutions: feasible first, then
/// energy, then fewer active variables, then the lexicographically smallest
/// list of active indices.
pub fn candidate_order(a: (bool, f64, &[bool]), b: (bool, f64, &[bool])) -> std::cmp::Ordering {
    let active = |bits: &[bool]| bits.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| i).collect::<Vec<_>>();
    (!a.0)
        .cmp(&!b.0)
        .then(a.1.total_cmp(&b.1))
        .then_with(|| {
            let (x, y) = (active(a.2), active(b.2));
            x.len().cmp(&y.len()).then(x.cmp(&y))
        })
}

/// Independent random stream for restart `index` of a run seeded with `seed`.
pub fn restart_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Exhaustive search over a routing model.
pub fn solve_exhaustive(model: &CqmModel) -> Result<SolverResult, SolverError> {
    let t0 = std::time::Instant::now();
    let space = RouteSpace::new(model);
    let out = exhaustive(&space)?;
    let mut r = SolverResult::from_bits(model, &out.bits, "exhaustive", 0, t0.elapsed());
    if !out.feasible {
        r.notes.push("no assignment satisfies the hard constraints; reporting the lowest-energy infeasible one".into());
    }
    Ok(r)
}

/// Simulated annealing over a routing model.
pub fn solve_anneal(model: &CqmModel, schedule: &AnnealSchedule) -> SolverResult {
    let t0 = std::time::Instant::now();
    let space = RouteSpace::new(model);
    let out = anneal(&space, schedule);
    let mut r = SolverResult::from_bits(model, &out.bits, "anneal", schedule.seed, t0.elapsed());
    r.best_trace = out.trace;
    r.notes.push(format!("restarts completed: {}", out.restarts_completed));
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_prefers_feasible_then_energy_then_size() {
        use std::cmp::Ordering::*;
        let a = [true, false, true];
        let b = [false, true, false];
        assert_eq!(candidate_order((true, 5.0, &a), (false, 1.0, &b)), Less);
        assert_eq!(candidate_order((true, 1.0, &a), (true, 2.0, &b)), Less);
        assert_eq!(candidate_order((true, 1.0, &a), (true, 1.0, &b)), Greater);
        let c = [false, true, true];
        assert_eq!(candidate_order((true, 1.0, &a), (true, 1.0, &c)), Less);
    }

    #[test]
    fn restart_streams_differ() {
        use rand::Rng;
        let x: u64 = restart_rng(7, 0).gen();
        let y: u64 = restart_rng(7, 1).gen();
        let z: u64 = restart_rng(7, 0).gen();
        assert_ne!(x, y);
        assert_eq!(x, z);
    }
}
