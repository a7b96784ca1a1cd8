//! Synthetic binary quadratic benchmarks with cardinality bounds and
//! slack-relaxed quadratic constraints:
//!
//! ```text
//! min  sum c_i x_i + sum_{i<j} Q_ij x_i x_j + P (s1 + s2)
//! s.t. L <= sum x_i <= U
//!      T1 - (sum w_i x_i)^2       <= s1
//!      T2 - sum_{i<j} R_ij x_i x_j <= s2,   s1, s2 >= 0
//! ```

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envdata::quantile;
use crate::solvers::{anneal, exhaustive, AnnealSchedule, AnnealSpace, SearchSpace, MAX_EXHAUSTIVE_VARS};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("density must be in (0, 1], got {0}")]
    Density(f64),
    #[error("need at least 2 variables, got {0}")]
    Size(usize),
    #[error("assignment has {got} entries, instance has {want}")]
    Length { got: usize, want: usize },
    #[error("benchmark needs at least one {0}")]
    EmptyGrid(&'static str),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Distribution parameters; every value here is a tunable choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    /// `c_i ~ U[-c_range, c_range]`.
    pub c_range: f64,
    /// Nonzero `Q_ij ~ U[-q_range, q_range]`.
    pub q_range: f64,
    /// Nonzero `R_ij ~ U[-r_range, r_range]`.
    pub r_range: f64,
    pub lower_fraction: f64,
    pub upper_fraction: f64,
    /// Random assignments sampled to set `T1` and `T2`.
    pub threshold_samples: usize,
    pub threshold_quantile: f64,
    pub slack_penalty: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            c_range: 10.0,
            q_range: 5.0,
            r_range: 5.0,
            lower_fraction: 0.25,
            upper_fraction: 0.75,
            threshold_samples: 1000,
            threshold_quantile: 0.5,
            slack_penalty: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub n: usize,
    pub density: f64,
    pub seed: u64,
    pub params: SynthParams,
    pub c: Vec<f64>,
    /// Upper-triangular nonzero couplings `(i, j, Q_ij)`, `i < j`, sorted.
    pub q: Vec<(usize, usize, f64)>,
    pub w: Vec<f64>,
    /// Upper-triangular constraint couplings, sorted.
    pub r: Vec<(usize, usize, f64)>,
    pub l: usize,
    pub u: usize,
    pub t1: f64,
    pub t2: f64,
    pub slack_penalty: f64,
}

/// Sparse upper-triangular matrix with independent Bernoulli(density)
/// support; an empty draw gets one random pair so every instance couples.
fn sparse_upper(n: usize, density: f64, range: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                out.push((i, j, rng.gen_range(-range..=range)));
            }
        }
    }
    if out.is_empty() {
        let i = rng.gen_range(0..n - 1);
        let j = rng.gen_range(i + 1..n);
        out.push((i, j, rng.gen_range(-range..=range)));
    }
    out
}

pub fn generate(n: usize, density: f64, seed: u64, params: &SynthParams) -> Result<SyntheticInstance, SynthError> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(SynthError::Density(density));
    }
    if n < 2 {
        return Err(SynthError::Size(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-params.c_range..=params.c_range)).collect();
    let q = sparse_upper(n, density, params.q_range, &mut rng);
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let r = sparse_upper(n, density, params.r_range, &mut rng);
    let l = ((n as f64 * params.lower_fraction).ceil() as usize).min(n);
    let u = ((n as f64 * params.upper_fraction).ceil() as usize).clamp(l, n);

    let mut s1 = Vec::with_capacity(params.threshold_samples);
    let mut s2 = Vec::with_capacity(params.threshold_samples);
    for _ in 0..params.threshold_samples.max(1) {
        let x: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let wx: f64 = w.iter().zip(&x).filter(|(_, &b)| b).map(|(v, _)| v).sum();
        s1.push(wx * wx);
        s2.push(r.iter().filter(|(i, j, _)| x[*i] && x[*j]).map(|(_, _, v)| v).sum::<f64>());
    }
    s1.sort_by(f64::total_cmp);
    s2.sort_by(f64::total_cmp);
    Ok(SyntheticInstance {
        n,
        density,
        seed,
        params: params.clone(),
        c,
        q,
        w,
        r,
        l,
        u,
        t1: quantile(&s1, params.threshold_quantile),
        t2: quantile(&s2, params.threshold_quantile),
        slack_penalty: params.slack_penalty,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthEval {
    pub objective: f64,
    pub s1: f64,
    pub s2: f64,
    pub cardinality_ok: bool,
}

/// Objective with the smallest feasible slacks for `x`.
pub fn evaluate(inst: &SyntheticInstance, x: &[bool]) -> Result<SynthEval, SynthError> {
    if x.len() != inst.n {
        return Err(SynthError::Length { got: x.len(), want: inst.n });
    }
    let mut obj = 0.0;
    for i in 0..inst.n {
        if x[i] {
            obj += inst.c[i];
        }
    }
    for &(i, j, v) in &inst.q {
        if x[i] && x[j] {
            obj += v;
        }
    }
    let wx: f64 = (0..inst.n).filter(|&i| x[i]).map(|i| inst.w[i]).sum();
    let rx: f64 = inst.r.iter().filter(|(i, j, _)| x[*i] && x[*j]).map(|(_, _, v)| v).sum();
    let s1 = (inst.t1 - wx * wx).max(0.0);
    let s2 = (inst.t2 - rx).max(0.0);
    let k = x.iter().filter(|&&b| b).count();
    Ok(SynthEval {
        objective: obj + inst.slack_penalty * (s1 + s2),
        s1,
        s2,
        cardinality_ok: (inst.l..=inst.u).contains(&k),
    })
}

impl SyntheticInstance {
    pub fn quad_terms(&self) -> usize {
        self.q.len()
    }

    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        writeln!(s, "icepath-synth 1").unwrap();
        writeln!(s, "n {}", self.n).unwrap();
        writeln!(s, "density {}", self.density).unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        writeln!(s, "param c_range {}", p.c_range).unwrap();
        writeln!(s, "param q_range {}", p.q_range).unwrap();
        writeln!(s, "param r_range {}", p.r_range).unwrap();
        writeln!(s, "param lower_fraction {}", p.lower_fraction).unwrap();
        writeln!(s, "param upper_fraction {}", p.upper_fraction).unwrap();
        writeln!(s, "param threshold_samples {}", p.threshold_samples).unwrap();
        writeln!(s, "param threshold_quantile {}", p.threshold_quantile).unwrap();
        writeln!(s, "cardinality {} {}", self.l, self.u).unwrap();
        writeln!(s, "threshold T1 {}", self.t1).unwrap();
        writeln!(s, "threshold T2 {}", self.t2).unwrap();
        writeln!(s, "slack_penalty {}", self.slack_penalty).unwrap();
        for (i, v) in self.c.iter().enumerate() {
            writeln!(s, "c {i} {v}").unwrap();
        }
        for (i, j, v) in &self.q {
            writeln!(s, "q {i} {j} {v}").unwrap();
        }
        for (i, v) in self.w.iter().enumerate() {
            writeln!(s, "w {i} {v}").unwrap();
        }
        for (i, j, v) in &self.r {
            writeln!(s, "r {i} {j} {v}").unwrap();
        }
        s
    }
}

/// Checks that a dump carries every structural ingredient: binary variables
/// with linear costs, quadratic couplings, slack-penalized quadratic
/// constraints and cardinality bounds. Returns the list of problems.
pub fn lint_dump(text: &str) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    let count = |prefix: &str| text.lines().filter(|l| l.starts_with(prefix)).count();
    let n: Option<usize> = text.lines().find_map(|l| l.strip_prefix("n ")).and_then(|v| v.parse().ok());
    match n {
        None => problems.push("missing variable count".into()),
        Some(n) => {
            if count("c ") != n {
                problems.push(format!("expected {n} linear costs, found {}", count("c ")));
            }
            if count("w ") != n {
                problems.push(format!("expected {n} constraint weights, found {}", count("w ")));
            }
            for l in text.lines().filter(|l| l.starts_with("q ") || l.starts_with("r ")) {
                let f: Vec<usize> = l.split_whitespace().skip(1).take(2).filter_map(|v| v.parse().ok()).collect();
                if f.len() != 2 || f[0] >= f[1] || f[1] >= n {
                    problems.push(format!("coupling not upper-triangular: {l}"));
                }
            }
            match text.lines().find_map(|l| l.strip_prefix("cardinality ")) {
                Some(b) => {
                    let v: Vec<usize> = b.split_whitespace().filter_map(|x| x.parse().ok()).collect();
                    if v.len() != 2 || v[0] > v[1] || v[1] > n {
                        problems.push(format!("bad cardinality bounds {b}"));
                    }
                }
                None => problems.push("missing cardinality bounds".into()),
            }
        }
    }
    if count("q ") == 0 {
        problems.push("no quadratic couplings".into());
    }
    if count("r ") == 0 {
        problems.push("no quadratic constraint couplings".into());
    }
    if count("threshold T1 ") != 1 || count("threshold T2 ") != 1 {
        problems.push("missing soft-constraint thresholds".into());
    }
    let penalty: Option<f64> = text.lines().find_map(|l| l.strip_prefix("slack_penalty ")).and_then(|v| v.parse().ok());
    if !penalty.is_some_and(|p| p > 0.0) {
        problems.push("slack penalty missing or not positive".into());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}

/// Incremental search view of an instance; cardinality is a hard filter.
pub struct SynthSpace<'a> {
    pub inst: &'a SyntheticInstance,
    q: Vec<f64>,
    r: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthState {
    bits: Vec<bool>,
    qfield: Vec<f64>,
    rfield: Vec<f64>,
    base: f64,
    wx: f64,
    rx: f64,
    count: usize,
}

impl<'a> SynthSpace<'a> {
    pub fn new(inst: &'a SyntheticInstance) -> Self {
        let n = inst.n;
        let mut q = vec![0.0; n * n];
        let mut r = vec![0.0; n * n];
        for &(i, j, v) in &inst.q {
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
        for &(i, j, v) in &inst.r {
            r[i * n + j] = v;
            r[j * n + i] = v;
        }
        Self { inst, q, r }
    }

    fn slack_cost(&self, wx: f64, rx: f64) -> f64 {
        self.inst.slack_penalty * ((self.inst.t1 - wx * wx).max(0.0) + (self.inst.t2 - rx).max(0.0))
    }
}

impl SearchSpace for SynthSpace<'_> {
    type State = SynthState;

    fn num_vars(&self) -> usize {
        self.inst.n
    }

    fn state(&self, bits: &[bool]) -> SynthState {
        let n = self.inst.n;
        let mut st = SynthState {
            bits: vec![false; n],
            qfield: vec![0.0; n],
            rfield: vec![0.0; n],
            base: 0.0,
            wx: 0.0,
            rx: 0.0,
            count: 0,
        };
        for (i, &b) in bits.iter().enumerate() {
            if b {
                self.flip(&mut st, i);
            }
        }
        self.resync(&mut st);
        st
    }

    fn bits<'b>(&self, s: &'b SynthState) -> &'b [bool] {
        &s.bits
    }

    fn energy(&self, s: &SynthState) -> f64 {
        s.base + self.slack_cost(s.wx, s.rx)
    }

    fn exact_energy(&self, bits: &[bool]) -> f64 {
        evaluate(self.inst, bits).map(|e| e.objective).unwrap_or(f64::INFINITY)
    }

    fn flip_delta(&self, s: &SynthState, i: usize) -> f64 {
        let sign = if s.bits[i] { -1.0 } else { 1.0 };
        let wx = s.wx + sign * self.inst.w[i];
        let rx = s.rx + sign * s.rfield[i];
        sign * (self.inst.c[i] + s.qfield[i]) + self.slack_cost(wx, rx) - self.slack_cost(s.wx, s.rx)
    }

    fn flip(&self, s: &mut SynthState, i: usize) {
        let n = self.inst.n;
        let sign = if s.bits[i] { -1.0 } else { 1.0 };
        s.base += sign * (self.inst.c[i] + s.qfield[i]);
        s.wx += sign * self.inst.w[i];
        s.rx += sign * s.rfield[i];
        let (qrow, rrow) = (&self.q[i * n..(i + 1) * n], &self.r[i * n..(i + 1) * n]);
        for j in 0..n {
            s.qfield[j] += sign * qrow[j];
            s.rfield[j] += sign * rrow[j];
        }
        s.bits[i] = !s.bits[i];
        if s.bits[i] {
            s.count += 1;
        } else {
            s.count -= 1;
        }
    }

    fn is_feasible(&self, s: &SynthState) -> bool {
        self.is_admissible(s)
    }

    fn is_admissible(&self, s: &SynthState) -> bool {
        (self.inst.l..=self.inst.u).contains(&s.count)
    }

    fn resync(&self, s: &mut SynthState) {
        let n = self.inst.n;
        let mut base = 0.0;
        let mut wx = 0.0;
        let mut rx = 0.0;
        for i in 0..n {
            let mut qf = 0.0;
            let mut rf = 0.0;
            for j in 0..n {
                if s.bits[j] {
                    qf += self.q[i * n + j];
                    rf += self.r[i * n + j];
                }
            }
            s.qfield[i] = qf;
            s.rfield[i] = rf;
            if s.bits[i] {
                base += self.inst.c[i] + qf / 2.0;
                wx += self.inst.w[i];
                rx += rf / 2.0;
            }
        }
        s.base = base;
        s.wx = wx;
        s.rx = rx;
    }
}

impl AnnealSpace for SynthSpace<'_> {
    fn initial_state(&self, rng: &mut ChaCha8Rng) -> SynthState {
        let n = self.inst.n;
        let k = rng.gen_range(self.inst.l..=self.inst.u);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let mut bits = vec![false; n];
        for &i in &idx[..k] {
            bits[i] = true;
        }
        self.state(&bits)
    }

    fn propose(&self, s: &SynthState, rng: &mut ChaCha8Rng, flips: &mut Vec<usize>) {
        let n = self.inst.n;
        let i = rng.gen_range(0..n);
        flips.push(i);
        if rng.gen_bool(0.5) {
            // swap with a variable of the opposite value, keeping the count
            for _ in 0..8 {
                let j = rng.gen_range(0..n);
                if s.bits[j] != s.bits[i] {
                    flips.push(j);
                    break;
                }
            }
        }
    }

    fn infeasibility_penalty(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchSolver {
    Exhaustive,
    Anneal,
}

impl BenchSolver {
    pub fn name(self) -> &'static str {
        match self {
            BenchSolver::Exhaustive => "exhaustive",
            BenchSolver::Anneal => "anneal",
        }
    }
}

impl std::str::FromStr for BenchSolver {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exhaustive" => Ok(Self::Exhaustive),
            "anneal" => Ok(Self::Anneal),
            other => Err(format!("unknown benchmark solver {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub density: f64,
    pub quad_terms: usize,
    pub solver: String,
    pub seed: u64,
    /// Re-evaluated objective; `None` when the solver failed.
    pub objective: Option<f64>,
    pub feasible: bool,
    pub wall_time_s: f64,
    /// Relative gap to the exhaustive optimum, when it is known.
    pub gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

/// Mean results per (quadratic term count, solver).
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub quad_terms: usize,
    pub solver: String,
    pub runs: usize,
    pub mean_objective: f64,
    pub mean_wall_time_s: f64,
    pub feasible_fraction: f64,
}

pub const REPORT_HEADER: &str = "n,density,quad_terms,solver,seed,objective,feasible,wall_time_s,gap";

impl BenchReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{REPORT_HEADER}")?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                r.density,
                r.quad_terms,
                r.solver,
                r.seed,
                opt(r.objective),
                r.feasible,
                r.wall_time_s,
                opt(r.gap)
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> Vec<BenchSummary> {
        let mut groups: std::collections::BTreeMap<(usize, String), Vec<&BenchRow>> = Default::default();
        for r in &self.rows {
            groups.entry((r.quad_terms, r.solver.clone())).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|((quad_terms, solver), rows)| {
                let ok: Vec<f64> = rows.iter().filter_map(|r| r.objective).collect();
                BenchSummary {
                    quad_terms,
                    solver,
                    runs: rows.len(),
                    mean_objective: ok.iter().sum::<f64>() / ok.len().max(1) as f64,
                    mean_wall_time_s: rows.iter().map(|r| r.wall_time_s).sum::<f64>() / rows.len() as f64,
                    feasible_fraction: rows.iter().filter(|r| r.feasible).count() as f64 / rows.len() as f64,
                }
            })
            .collect()
    }
}

/// Relative gap of `value` above `optimum`.
pub fn relative_gap(value: f64, optimum: f64) -> f64 {
    let d = value - optimum;
    if d.abs() <= 1e-9 * (1.0 + optimum.abs()) {
        0.0
    } else {
        d / optimum.abs().max(1e-12)
    }
}

/// Solves one instance with one solver; returns `(bits, wall seconds)`.
pub fn solve_instance(inst: &SyntheticInstance, solver: BenchSolver, schedule: &AnnealSchedule) -> Result<(Vec<bool>, f64), String> {
    let t0 = Instant::now();
    let space = SynthSpace::new(inst);
    let bits = match solver {
        BenchSolver::Exhaustive => exhaustive(&space).map_err(|e| e.to_string())?.bits,
        BenchSolver::Anneal => anneal(&space, schedule).bits,
    };
    Ok((bits, t0.elapsed().as_secs_f64()))
}

/// Runs every solver on every `(size, density, seed)` instance. The anneal
/// schedule's seed is replaced by the instance seed. Failures are recorded
/// per row and the run continues.
pub fn run_benchmark(
    sizes: &[usize],
    densities: &[f64],
    solvers: &[BenchSolver],
    seeds: &[u64],
    params: &SynthParams,
    schedule: &AnnealSchedule,
) -> Result<BenchReport, SynthError> {
    for (name, empty) in [
        ("size", sizes.is_empty()),
        ("density", densities.is_empty()),
        ("solver", solvers.is_empty()),
        ("seed", seeds.is_empty()),
    ] {
        if empty {
            return Err(SynthError::EmptyGrid(name));
        }
    }
    let mut cells = Vec::new();
    for &n in sizes {
        for &d in densities {
            for &seed in seeds {
                cells.push((n, d, seed));
            }
        }
    }
    let rows: Vec<Vec<BenchRow>> = cells
        .par_iter()
        .map(|&(n, density, seed)| {
            let inst = match generate(n, density, seed, params) {
                Ok(i) => i,
                Err(e) => {
                    return solvers
                        .iter()
                        .map(|s| BenchRow {
                            n,
                            density,
                            quad_terms: 0,
                            solver: s.name().into(),
                            seed,
                            objective: None,
                            feasible: false,
                            wall_time_s: 0.0,
                            gap: None,
                            error: Some(e.to_string()),
                        })
                        .collect();
                }
            };
            let sched = AnnealSchedule { seed, ..schedule.clone() };
            let runs: Vec<(BenchSolver, Result<(Vec<bool>, f64), String>)> =
                solvers.iter().map(|&s| (s, solve_instance(&inst, s, &sched))).collect();
            let oracle = if n <= MAX_EXHAUSTIVE_VARS {
                let bits = runs
                    .iter()
                    .find(|(s, r)| *s == BenchSolver::Exhaustive && r.is_ok())
                    .map(|(_, r)| r.as_ref().expect("checked").0.clone())
                    .or_else(|| solve_instance(&inst, BenchSolver::Exhaustive, &sched).ok().map(|r| r.0));
                bits.and_then(|b| evaluate(&inst, &b).ok()).map(|e| e.objective)
            } else {
                None
            };
            runs.into_iter()
                .map(|(s, r)| match r {
                    Ok((bits, secs)) => {
                        let ev = evaluate(&inst, &bits).expect("solver returns n bits");
                        BenchRow {
                            n,
                            density,
                            quad_terms: inst.quad_terms(),
                            solver: s.name().into(),
                            seed,
                            objective: Some(ev.objective),
                            feasible: ev.cardinality_ok,
                            wall_time_s: secs,
                            gap: oracle.map(|o| relative_gap(ev.objective, o)),
                            error: None,
                        }
                    }
                    Err(e) => {
                        log::warn!("{} failed on n={n} seed={seed}: {e}", s.name());
                        BenchRow {
                            n,
                            density,
                            quad_terms: inst.quad_terms(),
                            solver: s.name().into(),
                            seed,
                            objective: None,
                            feasible: false,
                            wall_time_s: 0.0,
                            gap: None,
                            error: Some(e),
                        }
                    }
                })
                .collect()
        })
        .collect();
    Ok(BenchReport {
        rows: rows.into_iter().flatten().collect(),
    })
}
