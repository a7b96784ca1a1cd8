use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use icepath::synthbench::BenchSolver;
use icepath_cli::{commands, CliError, RunConfig, SolverKind};

/// Sea-ice aware route optimization on a hexagonal ocean grid.
///
/// Exit codes: 0 success, 2 infeasible, 3 invalid input, 4 I/O error,
/// 5 external solver failure.
#[derive(Parser, Debug)]
#[command(name = "icepath", version)]
struct Cli {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured solver.
    #[arg(long, global = true)]
    solver: Option<String>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tile the corridor into ocean cells and write the grid dump.
    BuildGrid,
    /// Map environmental samples onto the grid and calibrate thresholds.
    MapFeatures,
    /// Build the routing model, solve it and write the run bundle.
    Optimize,
    /// Run the synthetic benchmark campaign.
    Bench,
    /// Re-run the annealer under several time budgets with one seed.
    BudgetSweep {
        /// Comma-separated budgets in seconds; the config list when omitted.
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<f64>>,
    },
    /// Solve a model dump and write a solution file (adapter protocol).
    SolveDump { model: PathBuf, solution: PathBuf },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let mut c = RunConfig::default();
            c.resolve_paths(&std::env::current_dir().map_err(|e| CliError::io("current directory", e))?);
            c
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(name) = &cli.solver {
        if matches!(cli.command, Command::Bench) {
            let s: BenchSolver = name.parse().map_err(CliError::Validation)?;
            cfg.bench.solvers = vec![s];
        } else {
            cfg.solver.name = name.parse::<SolverKind>().map_err(CliError::Validation)?;
        }
    }
    cfg.solver.anneal.seed = cfg.seed;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("threads: {e}")))?;
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::BuildGrid => {
            commands::build_grid(&cfg)?;
            Ok(true)
        }
        Command::MapFeatures => {
            commands::map_features(&cfg)?;
            Ok(true)
        }
        Command::Optimize => {
            let out = commands::optimize(&cfg)?;
            if let Some(m) = out.metrics {
                println!(
                    "objective {:.6}  cells {}  km {:.4}  zigzag {:.4}%  co2 {:.2} kg",
                    out.result.objective, m.selected_nodes, m.length_km, m.zigzag_pct, m.co2_kg
                );
            }
            Ok(out.result.feasible)
        }
        Command::Bench => {
            let report = commands::bench(&cfg)?;
            println!("{} benchmark rows written to {}", report.rows.len(), cfg.output_dir.display());
            Ok(true)
        }
        Command::BudgetSweep { budgets } => {
            let list = budgets.clone().unwrap_or_else(|| cfg.budgets.clone());
            let rows = commands::budget_sweep(&cfg, &list)?;
            for r in &rows {
                println!("budget {:>6} s  objective {:.6}  km {:.4}", r.budget, r.objective, r.km);
            }
            Ok(rows.iter().all(|r| r.feasible))
        }
        Command::SolveDump { model, solution } => {
            let r = commands::solve_dump(model, solution, &cfg)?;
            Ok(r.feasible)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("no feasible solution");
            ExitCode::from(2)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
