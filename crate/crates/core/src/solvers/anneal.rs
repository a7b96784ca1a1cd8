use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{candidate_order, restart_rng, AnnealSpace};

/// Probe moves used to pick the initial temperature.
const PROBE_MOVES: usize = 100;
/// Target acceptance rate of uphill probe moves at the initial temperature.
const PROBE_ACCEPTANCE: f64 = 0.8;
/// Greedy passes after the last sweep.
const MAX_QUENCH_PASSES: usize = 50;

/// Geometric cooling with independent restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    /// `None` picks a temperature accepting ~80% of uphill probe moves.
    pub initial_temperature: Option<f64>,
    /// `None` uses a thousandth of the initial temperature.
    pub final_temperature: Option<f64>,
    pub sweeps: usize,
    pub restarts: usize,
    /// Wall-clock cap in seconds.
    pub time_budget: Option<f64>,
    pub seed: u64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            initial_temperature: None,
            final_temperature: None,
            sweeps: 300,
            restarts: 100,
            time_budget: None,
            seed: 0,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<(), String> {
        let t0 = self.initial_temperature;
        let t1 = self.final_temperature;
        for t in [t0, t1].into_iter().flatten() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(format!("temperature {t} must be positive and finite"));
            }
        }
        if let (Some(a), Some(b)) = (t0, t1) {
            if a < b {
                return Err(format!("initial temperature {a} is below final temperature {b}"));
            }
        }
        if self.sweeps < 1 || self.restarts < 1 {
            return Err("sweeps and restarts must be at least 1".into());
        }
        if let Some(b) = self.time_budget {
            if !(b > 0.0 && b.is_finite()) {
                return Err(format!("time budget {b} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealOutcome {
    pub bits: Vec<bool>,
    /// Exact energy of `bits`.
    pub energy: f64,
    pub feasible: bool,
    /// Best search energy after each sweep of restart 0.
    pub trace: Vec<f64>,
    pub restarts_completed: usize,
}

struct RestartResult {
    feasible: bool,
    energy: f64,
    bits: Vec<bool>,
    trace: Vec<f64>,
}

fn search_energy<S: AnnealSpace>(space: &S, st: &S::State) -> f64 {
    let e = space.energy(st);
    if space.is_feasible(st) {
        e
    } else {
        e + space.infeasibility_penalty()
    }
}

/// Applies `flips`; returns false (and restores the state) if the result is inadmissible.
fn apply<S: AnnealSpace>(space: &S, st: &mut S::State, flips: &[usize]) -> bool {
    for &i in flips {
        space.flip(st, i);
    }
    if space.is_admissible(st) {
        true
    } else {
        undo(space, st, flips);
        false
    }
}

fn undo<S: AnnealSpace>(space: &S, st: &mut S::State, flips: &[usize]) {
    for &i in flips.iter().rev() {
        space.flip(st, i);
    }
}

fn initial_temperature<S: AnnealSpace>(space: &S, st: &mut S::State, rng: &mut ChaCha8Rng) -> f64 {
    let base = search_energy(space, st);
    let mut flips = Vec::new();
    let mut uphill = Vec::new();
    for _ in 0..PROBE_MOVES {
        flips.clear();
        space.propose(st, rng, &mut flips);
        if flips.is_empty() || !apply(space, st, &flips) {
            continue;
        }
        let d = search_energy(space, st) - base;
        if d > 0.0 {
            uphill.push(d);
        }
        undo(space, st, &flips);
    }
    space.resync(st);
    if uphill.is_empty() {
        return 1.0;
    }
    let mean = uphill.iter().sum::<f64>() / uphill.len() as f64;
    -mean / PROBE_ACCEPTANCE.ln()
}

fn run_restart<S: AnnealSpace>(space: &S, sched: &AnnealSchedule, index: usize, deadline: Option<Instant>) -> Option<RestartResult> {
    if deadline.is_some_and(|d| Instant::now() >= d) {
        return None;
    }
    let mut rng = restart_rng(sched.seed, index as u64);
    let mut st = space.initial_state(&mut rng);
    let t0 = sched.initial_temperature.unwrap_or_else(|| initial_temperature(space, &mut st, &mut rng));
    let t1 = sched.final_temperature.unwrap_or(t0 / 1000.0).min(t0);
    let alpha = if sched.sweeps > 1 {
        (t1 / t0).powf(1.0 / (sched.sweeps - 1) as f64)
    } else {
        1.0
    };
    let moves = space.num_vars().max(1);
    let mut current = search_energy(space, &st);
    let mut best = (space.is_feasible(&st), current, space.bits(&st).to_vec());
    let mut trace = Vec::with_capacity(sched.sweeps);
    let mut temp = t0;
    let mut flips = Vec::new();
    for sweep in 0..sched.sweeps {
        for _ in 0..moves {
            flips.clear();
            space.propose(&st, &mut rng, &mut flips);
            if flips.is_empty() || !apply(space, &mut st, &flips) {
                continue;
            }
            let next = search_energy(space, &st);
            let delta = next - current;
            if delta <= 0.0 || rng.gen::<f64>() < (-delta / temp).exp() {
                current = next;
                if next < best.1 {
                    best = (space.is_feasible(&st), next, space.bits(&st).to_vec());
                }
            } else {
                undo(space, &mut st, &flips);
            }
        }
        space.resync(&mut st);
        current = search_energy(space, &st);
        trace.push(best.1);
        temp *= alpha;
        if deadline.is_some_and(|d| Instant::now() >= d) && sweep + 1 < sched.sweeps {
            break;
        }
    }
    // greedy single-flip descent from the best state
    let mut st = space.state(&best.2);
    let mut current = search_energy(space, &st);
    for _ in 0..MAX_QUENCH_PASSES {
        let mut improved = false;
        for i in 0..space.num_vars() {
            if space.flip_delta(&st, i) >= 0.0 && space.is_feasible(&st) {
                continue;
            }
            if !apply(space, &mut st, &[i]) {
                continue;
            }
            let next = search_energy(space, &st);
            if next < current - 1e-12 {
                current = next;
                improved = true;
            } else {
                undo(space, &mut st, &[i]);
            }
        }
        if !improved {
            break;
        }
    }
    let bits = space.bits(&st).to_vec();
    let feasible = space.is_feasible(&st);
    let energy = space.exact_energy(&bits);
    if let Some(last) = trace.last_mut() {
        *last = last.min(if feasible { energy } else { energy + space.infeasibility_penalty() });
    }
    Some(RestartResult {
        feasible,
        energy,
        bits,
        trace,
    })
}

/// Best of independent annealing restarts. Restart `k` draws from its own
/// random stream, so the result does not depend on thread count. With a
/// time budget, restarts run in thread-sized batches in index order and
/// stop at the deadline, finishing within one sweep of it.
pub fn anneal<S: AnnealSpace>(space: &S, sched: &AnnealSchedule) -> AnnealOutcome {
    let deadline = sched.time_budget.map(|b| Instant::now() + Duration::from_secs_f64(b));
    let mut results: Vec<(usize, RestartResult)> = Vec::new();
    match deadline {
        None => {
            results = (0..sched.restarts)
                .into_par_iter()
                .filter_map(|k| run_restart(space, sched, k, None).map(|r| (k, r)))
                .collect();
        }
        Some(d) => {
            let batch = rayon::current_num_threads().max(1);
            let mut k = 0;
            while k < sched.restarts && Instant::now() < d {
                let end = (k + batch).min(sched.restarts);
                let chunk: Vec<(usize, RestartResult)> = (k..end)
                    .into_par_iter()
                    .filter_map(|i| run_restart(space, sched, i, deadline).map(|r| (i, r)))
                    .collect();
                results.extend(chunk);
                k = end;
            }
        }
    }
    let restarts_completed = results.len();
    let trace = results.iter().find(|(k, _)| *k == 0).map(|(_, r)| r.trace.clone()).unwrap_or_default();
    let best = results
        .into_iter()
        .map(|(_, r)| r)
        .min_by(|a, b| candidate_order((a.feasible, a.energy, &a.bits), (b.feasible, b.energy, &b.bits)));
    match best {
        Some(r) => AnnealOutcome {
            bits: r.bits,
            energy: r.energy,
            feasible: r.feasible,
            trace,
            restarts_completed,
        },
        None => {
            // budget expired before any restart began: report the first initial state
            let mut rng = restart_rng(sched.seed, 0);
            let st = space.initial_state(&mut rng);
            let bits = space.bits(&st).to_vec();
            AnnealOutcome {
                energy: space.exact_energy(&bits),
                feasible: space.is_feasible(&st),
                bits,
                trace,
                restarts_completed: 0,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::solvers::{solve_anneal, solve_exhaustive, RouteSpace};

    fn quick() -> AnnealSchedule {
        AnnealSchedule {
            sweeps: 50,
            restarts: 8,
            seed: 11,
            ..AnnealSchedule::default()
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(AnnealSchedule::default().validate().is_ok());
        let bad = AnnealSchedule {
            initial_temperature: Some(1.0),
            final_temperature: Some(2.0),
            ..AnnealSchedule::default()
        };
        assert!(bad.validate().is_err());
        assert!(AnnealSchedule { sweeps: 0, ..AnnealSchedule::default() }.validate().is_err());
    }

    #[test]
    fn finds_flower_optimum() {
        let model = fixtures::flower_model(1.0);
        let ex = solve_exhaustive(&model).unwrap();
        let an = solve_anneal(&model, &quick());
        assert!(an.feasible);
        assert!((an.objective - ex.objective).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_answer() {
        let model = fixtures::flower_model(1.0);
        let a = anneal(&RouteSpace::new(&model), &quick());
        let b = anneal(&RouteSpace::new(&model), &quick());
        assert_eq!(a, b);
    }

    #[test]
    fn best_trace_is_monotone() {
        let model = fixtures::corridor_model(71.0, 72.0, 10.0, 13.0, 5, 3);
        let out = anneal(&RouteSpace::new(&model), &quick());
        assert_eq!(out.trace.len(), 50);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
