use super::{candidate_order, SearchSpace, SolverError};

/// Largest variable count the exhaustive search accepts.
pub const MAX_EXHAUSTIVE_VARS: usize = 22;

/// Incremental energies are recomputed from scratch this often.
const RESYNC_EVERY: u64 = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveOutcome {
    pub bits: Vec<bool>,
    pub energy: f64,
    /// False when no admissible assignment is feasible; `bits` is then the
    /// lowest-energy admissible one.
    pub feasible: bool,
    pub visited: u64,
}

/// Enumerates every assignment in Gray-code order, one flip per step.
/// Ties are broken by [`candidate_order`], so the result is deterministic.
pub fn exhaustive<S: SearchSpace>(space: &S) -> Result<ExhaustiveOutcome, SolverError> {
    let n = space.num_vars();
    if n > MAX_EXHAUSTIVE_VARS {
        return Err(SolverError::TooManyVariables {
            vars: n,
            cap: MAX_EXHAUSTIVE_VARS,
        });
    }
    let mut state = space.state(&vec![false; n]);
    let mut best: Option<(bool, f64, Vec<bool>)> = None;
    // screening slack for incremental round-off
    let tol = |e: f64| 1e-9 * (1.0 + e.abs());
    let total: u64 = 1 << n;
    for k in 0..total {
        if k > 0 {
            space.flip(&mut state, k.trailing_zeros() as usize);
            if k % RESYNC_EVERY == 0 {
                space.resync(&mut state);
            }
        }
        if !space.is_admissible(&state) {
            continue;
        }
        let e = space.energy(&state);
        let promising = match &best {
            None => true,
            Some((true, be, _)) => e <= be + tol(*be),
            Some((false, be, _)) => e <= be + tol(*be) || space.is_feasible(&state),
        };
        if !promising {
            continue;
        }
        let feasible = space.is_feasible(&state);
        if matches!(best, Some((true, _, _))) && !feasible {
            continue;
        }
        let bits = space.bits(&state);
        let exact = space.exact_energy(bits);
        let better = match &best {
            None => true,
            Some((bf, be, bb)) => candidate_order((feasible, exact, bits), (*bf, *be, bb)).is_lt(),
        };
        if better {
            best = Some((feasible, exact, bits.to_vec()));
        }
    }
    let (feasible, energy, bits) = best.unwrap_or((false, f64::INFINITY, vec![false; n]));
    Ok(ExhaustiveOutcome {
        bits,
        energy,
        feasible,
        visited: total,
    })
}
