use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use icepath::envdata::CalibrationPolicy;
use icepath::model::{DeviationStrategy, PathBounds, Weights};
use icepath::solvers::{AdapterConfig, AnnealSchedule, DEFAULT_EXPANSION_LIMIT};
use icepath::synthbench::{BenchSolver, SynthParams};
use icepath::GeoPoint;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Linegraph,
    Exhaustive,
    Anneal,
    Adapter,
}

impl std::str::FromStr for SolverKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linegraph" => Ok(Self::Linegraph),
            "exhaustive" => Ok(Self::Exhaustive),
            "anneal" => Ok(Self::Anneal),
            "adapter" => Ok(Self::Adapter),
            other => Err(format!("unknown solver {other:?} (linegraph, exhaustive, anneal, adapter)")),
        }
    }
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Linegraph => "linegraph",
            Self::Exhaustive => "exhaustive",
            Self::Anneal => "anneal",
            Self::Adapter => "adapter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub name: SolverKind,
    pub anneal: AnnealSchedule,
    pub adapter: AdapterConfig,
    /// Branch-and-bound node cap of the line-graph search.
    pub expansion_limit: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            name: SolverKind::default(),
            anneal: AnnealSchedule::default(),
            adapter: AdapterConfig::default(),
            expansion_limit: DEFAULT_EXPANSION_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub densities: Vec<f64>,
    pub solvers: Vec<BenchSolver>,
    pub seeds: Vec<u64>,
    pub params: SynthParams,
    pub schedule: AnnealSchedule,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![8, 12, 16],
            densities: vec![0.2, 0.5],
            solvers: vec![BenchSolver::Exhaustive, BenchSolver::Anneal],
            seeds: vec![1, 2, 3],
            params: SynthParams::default(),
            schedule: AnnealSchedule::default(),
        }
    }
}

/// Everything one run needs; serializes to the config echo of a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corridor_path: PathBuf,
    pub landmask_path: Option<PathBuf>,
    pub env_csv_path: PathBuf,
    pub resolution: u8,
    /// Day of samples to use; the earliest day in the file when unset.
    pub date: Option<NaiveDate>,
    pub start: GeoPoint,
    pub goal: GeoPoint,
    pub weights: Weights,
    /// Derived from the endpoints when unset.
    pub bounds: Option<PathBounds>,
    pub deviation: DeviationStrategy,
    pub calibration: CalibrationPolicy,
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub budgets: Vec<f64>,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corridor_path: PathBuf::new(),
            landmask_path: None,
            env_csv_path: PathBuf::new(),
            resolution: 5,
            date: None,
            start: GeoPoint { lat: 0.0, lon: 0.0 },
            goal: GeoPoint { lat: 0.0, lon: 0.0 },
            weights: Weights::default(),
            bounds: None,
            deviation: DeviationStrategy::default(),
            calibration: CalibrationPolicy::default(),
            solver: SolverConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            budgets: vec![5.0, 15.0, 30.0, 60.0],
            bench: BenchConfig::default(),
        }
    }
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.as_os_str().is_empty() || p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads a config file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.corridor_path = absolute(base, &self.corridor_path);
        self.env_csv_path = absolute(base, &self.env_csv_path);
        self.landmask_path = self.landmask_path.as_deref().map(|p| absolute(base, p));
        self.output_dir = absolute(base, &self.output_dir);
        if let Some(w) = &self.solver.adapter.work_dir {
            self.solver.adapter.work_dir = Some(absolute(base, w));
        }
    }

    /// Checks the settings shared by every command.
    pub fn validate_common(&self) -> Result<(), CliError> {
        if i64::try_from(self.seed).is_err() {
            return Err(CliError::Validation(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        Ok(())
    }

    /// Checks everything the grid, feature and routing commands read.
    pub fn validate_inputs(&self, need_env: bool) -> Result<(), CliError> {
        self.validate_common()?;
        let must_exist = |what: &str, p: &Path| {
            if p.as_os_str().is_empty() {
                Err(CliError::Validation(format!("{what} is not set")))
            } else if !p.is_file() {
                Err(CliError::Validation(format!("{what} {} does not exist", p.display())))
            } else {
                Ok(())
            }
        };
        must_exist("corridor_path", &self.corridor_path)?;
        if let Some(p) = &self.landmask_path {
            must_exist("landmask_path", p)?;
        }
        if need_env {
            must_exist("env_csv_path", &self.env_csv_path)?;
        }
        icepath::hexgrid::CellId::from_axial(self.resolution, 0, 0).map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(())
    }

    /// Checks a routing run: inputs plus endpoints, weights, bounds and solver settings.
    pub fn validate_routing(&self) -> Result<(), CliError> {
        self.validate_inputs(true)?;
        for (name, p) in [("start", self.start), ("goal", self.goal)] {
            GeoPoint::new(p.lat, p.lon).map_err(|e| CliError::Validation(format!("{name}: {e}")))?;
        }
        self.weights.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if let Some(b) = self.bounds {
            PathBounds::new(b.l_min, b.l_max).map_err(|e| CliError::Validation(e.to_string()))?;
        }
        self.solver.anneal.validate().map_err(CliError::Validation)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("resolutoin = 4\n").is_err());
    }

    #[test]
    fn partial_config_gets_defaults() {
        let cfg = RunConfig::from_toml("seed = 9\n[solver]\nname = \"anneal\"\n[solver.anneal]\nsweeps = 10\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.solver.name, SolverKind::Anneal);
        assert_eq!(cfg.solver.anneal.sweeps, 10);
        assert_eq!(cfg.solver.anneal.restarts, 100);
        assert_eq!(cfg.resolution, 5);
    }
}
