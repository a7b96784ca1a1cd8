use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use icepath::envdata::{calibrate, load_samples, map_to_cells, write_features, Calibration, CellFeatures, EnvSchema};
use icepath::hexgrid::{polygons_from_geojson, GridSummary, Polygon};
use icepath::model::{build_model_with, CqmModel, PathBounds, Var};
use icepath::recovery::{export_geojson, extract_active, metrics, reconstruct, write_metrics_csv, MetricsRow, Route, RouteMetrics, ACTIVE_THRESHOLD};
use icepath::solvers::{
    external_adapter, solve_anneal, solve_exhaustive, solve_linegraph_with_limit, write_solution, AnnealSchedule, SolverResult,
};
use icepath::synthbench::{generate, run_benchmark, BenchReport};
use icepath::{CellId, CorridorGrid, GeoPoint};

use crate::config::{RunConfig, SolverKind};
use crate::error::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path.display(), e))
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path.display(), e))
}

fn read_polygons(path: &Path) -> Result<Vec<Polygon>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    polygons_from_geojson(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Grid of ocean cells for the configured corridor and land mask.
pub fn load_grid(cfg: &RunConfig) -> Result<(CorridorGrid, GridSummary), CliError> {
    let corridor = read_polygons(&cfg.corridor_path)?;
    let land = match &cfg.landmask_path {
        Some(p) => read_polygons(p)?,
        None => Vec::new(),
    };
    let (grid, summary) = CorridorGrid::build(&corridor, &land, cfg.resolution)?;
    if grid.is_empty() {
        log::warn!("corridor has no ocean cells ({} cells touch land)", summary.land_cells);
    }
    Ok((grid, summary))
}

#[derive(Debug, Clone, Serialize)]
struct SummaryRecord {
    resolution: u8,
    candidate_cells: usize,
    ocean_cells: usize,
    land_cells: usize,
    edges: usize,
    ocean_fraction: f64,
}

fn summary_json(resolution: u8, s: &GridSummary) -> String {
    let rec = SummaryRecord {
        resolution,
        candidate_cells: s.candidate_cells,
        ocean_cells: s.ocean_cells,
        land_cells: s.land_cells,
        edges: s.edges,
        ocean_fraction: s.ocean_fraction(),
    };
    serde_json::to_string_pretty(&rec).expect("summary serializes") + "\n"
}

/// Writes `grid.csv` and `grid_summary.json` to the output directory.
pub fn build_grid(cfg: &RunConfig) -> Result<GridSummary, CliError> {
    cfg.validate_inputs(false)?;
    let (grid, summary) = load_grid(cfg)?;
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("grid.csv");
    grid.write_dump(create_file(&path)?).map_err(|e| CliError::io(path.display(), e))?;
    write_file(&cfg.output_dir.join("grid_summary.json"), summary_json(cfg.resolution, &summary))?;
    log::info!(
        "{} ocean cells, {} land cells, {} edges, ocean fraction {:.3}",
        summary.ocean_cells,
        summary.land_cells,
        summary.edges,
        summary.ocean_fraction()
    );
    Ok(summary)
}

/// Per-cell features, thresholds and the day they describe.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub features: Vec<CellFeatures>,
    pub calibration: Calibration,
    pub date: NaiveDate,
    pub samples_used: usize,
    pub rejected_rows: usize,
}

pub fn load_features(cfg: &RunConfig, grid: &CorridorGrid) -> Result<FeatureSet, CliError> {
    let loaded = load_samples(&cfg.env_csv_path, &EnvSchema::default())?;
    for issue in loaded.rejected.iter().take(5) {
        log::warn!("rejected environmental row {}: {}", issue.row, issue.message);
    }
    if loaded.rejected.len() > 5 {
        log::warn!("{} more rows rejected", loaded.rejected.len() - 5);
    }
    let date = match cfg.date {
        Some(d) => d,
        None => loaded
            .samples
            .iter()
            .map(|s| s.time)
            .min()
            .ok_or_else(|| CliError::Validation("environmental file has no valid samples".into()))?,
    };
    let features = map_to_cells(&loaded.samples, grid, date);
    let calibration = calibrate(&features, &cfg.calibration)?;
    for (name, degenerate) in calibration.degenerate_fields() {
        if degenerate {
            log::warn!("{name} has no spread in the corridor; its penalty is zero");
        }
    }
    Ok(FeatureSet {
        samples_used: features.iter().map(|f| f.sample_count as usize).sum(),
        features,
        calibration,
        date,
        rejected_rows: loaded.rejected.len(),
    })
}

/// Writes `features.csv` and `calibration.toml` to the output directory.
pub fn map_features(cfg: &RunConfig) -> Result<FeatureSet, CliError> {
    cfg.validate_inputs(true)?;
    let (grid, _) = load_grid(cfg)?;
    let set = load_features(cfg, &grid)?;
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("features.csv");
    write_features(&set.features, create_file(&path)?)?;
    write_file(&cfg.output_dir.join("calibration.toml"), set.calibration.to_toml())?;
    log::info!("{} cells with data for {}, {} rows rejected", set.features.len(), set.date, set.rejected_rows);
    Ok(set)
}

/// A requested coordinate and the ocean cell it snapped to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Endpoint {
    pub requested: GeoPoint,
    pub cell: CellId,
    pub snap_km: f64,
}

fn snap(grid: &CorridorGrid, p: GeoPoint, name: &str) -> Result<Endpoint, CliError> {
    let p = GeoPoint::new(p.lat, p.lon).map_err(|e| CliError::Validation(format!("{name}: {e}")))?;
    let (cell, snap_km) = grid
        .nearest_cell(p)
        .ok_or_else(|| CliError::Validation(format!("cannot place {name}: the grid has no ocean cells")))?;
    log::info!("{name} snapped to {cell}, {snap_km:.2} km away");
    Ok(Endpoint {
        requested: p,
        cell,
        snap_km,
    })
}

/// Grid, features and model of a routing run.
#[derive(Debug, Clone)]
pub struct Routing {
    pub grid: CorridorGrid,
    pub features: FeatureSet,
    pub start: Endpoint,
    pub goal: Endpoint,
    pub model: CqmModel,
}

pub fn prepare_routing(cfg: &RunConfig) -> Result<Routing, CliError> {
    cfg.validate_routing()?;
    let (grid, _) = load_grid(cfg)?;
    let features = load_features(cfg, &grid)?;
    let start = snap(&grid, cfg.start, "start")?;
    let goal = snap(&grid, cfg.goal, "goal")?;
    let bounds = match cfg.bounds {
        Some(b) => b,
        None => PathBounds::for_endpoints(start.cell, goal.cell)?,
    };
    let model = build_model_with(&grid, &features.features, &features.calibration, &cfg.weights, start.cell, goal.cell, bounds, cfg.deviation)?;
    log::info!(
        "model: {} nodes, {} edge variables, {} quadratic terms",
        model.nodes.len(),
        model.num_edges(),
        model.num_quadratic_terms()
    );
    Ok(Routing {
        grid,
        features,
        start,
        goal,
        model,
    })
}

/// Runs the configured solver; the run seed drives the annealer.
pub fn run_solver(model: &CqmModel, cfg: &RunConfig) -> Result<SolverResult, CliError> {
    let schedule = AnnealSchedule {
        seed: cfg.seed,
        ..cfg.solver.anneal.clone()
    };
    let mut r = match cfg.solver.name {
        SolverKind::Linegraph => solve_linegraph_with_limit(model, cfg.solver.expansion_limit),
        SolverKind::Exhaustive => solve_exhaustive(model)?,
        SolverKind::Anneal => solve_anneal(model, &schedule),
        SolverKind::Adapter => external_adapter(model, &cfg.solver.adapter)?,
    };
    r.seed = cfg.seed;
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
struct ModelRecord {
    nodes: usize,
    edges: usize,
    quad_terms: usize,
    l_min: u32,
    l_max: u32,
    calibration_hash: String,
}

#[derive(Debug, Clone, Serialize)]
struct RouteRecord<'a> {
    cells: &'a [CellId],
    relinked_edges: Vec<String>,
    metrics: &'a RouteMetrics,
}

/// Contents of `result.json`.
#[derive(Debug, Clone, Serialize)]
struct ResultRecord<'a> {
    solver: &'a str,
    seed: u64,
    feasible: bool,
    objective: f64,
    reported_objective: Option<f64>,
    discrepancy: bool,
    wall_time_s: f64,
    violations: Vec<(String, f64)>,
    notes: &'a [String],
    date: NaiveDate,
    start: Endpoint,
    goal: Endpoint,
    model: ModelRecord,
    active_edges: Vec<String>,
    flows: Vec<(String, f64)>,
    shortfall: f64,
    excess: f64,
    route: Option<RouteRecord<'a>>,
    best_trace: &'a [f64],
}

/// Solver output plus the recovered route, if the result is feasible.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub result: SolverResult,
    pub route: Option<Route>,
    pub metrics: Option<RouteMetrics>,
    pub start: Endpoint,
    pub goal: Endpoint,
    pub output_dir: PathBuf,
}

/// Recovers the route of a feasible result and writes the run bundle to `dir`.
pub fn write_bundle(dir: &Path, cfg: &RunConfig, routing: &Routing, result: SolverResult) -> Result<OptimizeOutcome, CliError> {
    let model = &routing.model;
    create_dir(dir)?;
    let (route, route_metrics) = if result.feasible {
        let sub = extract_active(model, &result.assignment, ACTIVE_THRESHOLD)?;
        let route = reconstruct(&sub, model)?;
        let m = metrics(&route)?;
        export_geojson(&route, &m, &dir.join("route.geojson"))?;
        let row = MetricsRow::new(&result.solver_name, model, result.objective, &m, result.wall_time);
        let path = dir.join("metrics.csv");
        write_metrics_csv(create_file(&path)?, &[row]).map_err(|e| CliError::io(path.display(), e))?;
        (Some(route), Some(m))
    } else {
        (None, None)
    };
    let a = &result.assignment;
    let record = ResultRecord {
        solver: &result.solver_name,
        seed: result.seed,
        feasible: result.feasible,
        objective: result.objective,
        reported_objective: result.reported_objective,
        discrepancy: result.discrepancy,
        wall_time_s: result.wall_time,
        violations: result.violations.iter().map(|v| (v.constraint.clone(), v.magnitude)).collect(),
        notes: &result.notes,
        date: routing.features.date,
        start: routing.start,
        goal: routing.goal,
        model: ModelRecord {
            nodes: model.nodes.len(),
            edges: model.num_edges(),
            quad_terms: model.num_quadratic_terms(),
            l_min: model.meta.bounds.l_min,
            l_max: model.meta.bounds.l_max,
            calibration_hash: model.meta.calibration_hash.clone(),
        },
        active_edges: a.active_edges(ACTIVE_THRESHOLD).into_iter().map(|e| model.var_name(Var::Edge(e))).collect(),
        flows: (0..a.f.len()).filter(|&k| a.f[k] > 0.0).map(|k| (model.var_name(Var::Flow(k)), a.f[k])).collect(),
        shortfall: a.shortfall,
        excess: a.excess,
        route: route.as_ref().zip(route_metrics.as_ref()).map(|(r, m)| RouteRecord {
            cells: &r.cells,
            relinked_edges: r.relinked_edges.iter().map(|e| e.to_string()).collect(),
            metrics: m,
        }),
        best_trace: &result.best_trace,
    };
    write_file(&dir.join("result.json"), serde_json::to_string_pretty(&record).expect("record serializes") + "\n")?;
    write_file(&dir.join("config.toml"), cfg.to_toml())?;
    write_file(&dir.join("calibration.toml"), routing.features.calibration.to_toml())?;
    Ok(OptimizeOutcome {
        result,
        route,
        metrics: route_metrics,
        start: routing.start,
        goal: routing.goal,
        output_dir: dir.to_path_buf(),
    })
}

/// Full pipeline; writes `result.json`, `route.geojson`, `metrics.csv`,
/// `config.toml` and `calibration.toml`. An infeasible result still writes
/// the result record and config echo.
pub fn optimize(cfg: &RunConfig) -> Result<OptimizeOutcome, CliError> {
    let routing = prepare_routing(cfg)?;
    let result = run_solver(&routing.model, cfg)?;
    log::info!("{}: objective {:.6}, feasible {}, {:.3} s", result.solver_name, result.objective, result.feasible, result.wall_time);
    for note in &result.notes {
        log::warn!("{note}");
    }
    write_bundle(&cfg.output_dir, cfg, &routing, result)
}

/// Synthetic benchmark campaign; writes `bench.csv`, `bench_summary.csv`,
/// the config echo and one instance dump per generated instance.
pub fn bench(cfg: &RunConfig) -> Result<BenchReport, CliError> {
    cfg.validate_common()?;
    let b = &cfg.bench;
    b.schedule.validate().map_err(CliError::Validation)?;
    let report = run_benchmark(&b.sizes, &b.densities, &b.solvers, &b.seeds, &b.params, &b.schedule)?;
    let inst_dir = cfg.output_dir.join("instances");
    create_dir(&inst_dir)?;
    for &n in &b.sizes {
        for &d in &b.densities {
            for &seed in &b.seeds {
                if let Ok(inst) = generate(n, d, seed, &b.params) {
                    write_file(&inst_dir.join(format!("n{n}_d{d}_s{seed}.txt")), inst.to_dump())?;
                }
            }
        }
    }
    let path = cfg.output_dir.join("bench.csv");
    report.write_csv(create_file(&path)?).map_err(|e| CliError::io(path.display(), e))?;
    let mut summary = String::from("quad_terms,solver,runs,mean_objective,mean_wall_time_s,feasible_fraction\n");
    for s in report.summary() {
        summary.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.quad_terms, s.solver, s.runs, s.mean_objective, s.mean_wall_time_s, s.feasible_fraction
        ));
    }
    write_file(&cfg.output_dir.join("bench_summary.csv"), summary)?;
    write_file(&cfg.output_dir.join("config.toml"), cfg.to_toml())?;
    for r in report.rows.iter().filter(|r| r.error.is_some()) {
        log::warn!("{} n={} seed={}: {}", r.solver, r.n, r.seed, r.error.as_deref().unwrap_or_default());
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub budget: f64,
    pub objective: f64,
    pub km: f64,
    pub zigzag_pct: f64,
    pub co2_kg: f64,
    pub feasible: bool,
    pub cells: Vec<CellId>,
}

pub const SWEEP_HEADER: &str = "budget,objective,km,zigzag_pct,co2_kg";

/// Runs the annealer once per time budget with the shared run seed. Each
/// run writes a bundle under `budget_<seconds>/`; the table goes to
/// `budget_sweep.csv`.
pub fn budget_sweep(cfg: &RunConfig, budgets: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    if budgets.is_empty() {
        return Err(CliError::Validation("budget list is empty".into()));
    }
    if let Some(b) = budgets.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        return Err(CliError::Validation(format!("budget {b} must be positive")));
    }
    if cfg.solver.name != SolverKind::Anneal {
        log::info!("budget sweep always uses the annealer (configured: {})", cfg.solver.name.name());
    }
    let routing = prepare_routing(cfg)?;
    let mut rows = Vec::new();
    let mut csv = format!("{SWEEP_HEADER}\n");
    for &budget in budgets {
        let mut run = cfg.clone();
        run.solver.name = SolverKind::Anneal;
        run.solver.anneal.time_budget = Some(budget);
        run.output_dir = cfg.output_dir.join(format!("budget_{budget}"));
        let result = run_solver(&routing.model, &run)?;
        let out = write_bundle(&run.output_dir, &run, &routing, result)?;
        let m = out.metrics.unwrap_or(RouteMetrics {
            length_km: f64::NAN,
            zigzag_raw: f64::NAN,
            zigzag_pct: f64::NAN,
            co2_kg: f64::NAN,
            selected_nodes: 0,
        });
        log::info!("budget {budget} s: objective {:.6}", out.result.objective);
        csv.push_str(&format!("{budget},{},{},{},{}\n", out.result.objective, m.length_km, m.zigzag_pct, m.co2_kg));
        rows.push(SweepRow {
            budget,
            objective: out.result.objective,
            km: m.length_km,
            zigzag_pct: m.zigzag_pct,
            co2_kg: m.co2_kg,
            feasible: out.result.feasible,
            cells: out.route.map(|r| r.cells).unwrap_or_default(),
        });
    }
    create_dir(&cfg.output_dir)?;
    write_file(&cfg.output_dir.join("budget_sweep.csv"), csv)?;
    write_file(&cfg.output_dir.join("config.toml"), cfg.to_toml())?;
    Ok(rows)
}

/// Solves a model dump and writes a solution file, following the external
/// adapter protocol; usable as the adapter command itself.
pub fn solve_dump(model_path: &Path, solution_path: &Path, cfg: &RunConfig) -> Result<SolverResult, CliError> {
    if cfg.solver.name == SolverKind::Adapter {
        return Err(CliError::Validation("solve-dump needs a built-in solver".into()));
    }
    let text = fs::read_to_string(model_path).map_err(|e| CliError::io(model_path.display(), e))?;
    let model = CqmModel::from_dump(&text)?;
    let result = run_solver(&model, cfg)?;
    write_file(solution_path, write_solution(&model, &result.assignment, Some(result.objective)))?;
    Ok(result)
}
