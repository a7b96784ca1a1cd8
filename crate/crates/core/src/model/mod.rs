//! Constrained quadratic routing model over binary edge variables and unit flows.

mod cqm;
mod dump;
mod eval;
mod penalties;

use serde::{Deserialize, Serialize};

use crate::hexgrid::{CellId, GridError};

pub use cqm::{build_model, build_model_with, Arc, CqmModel, Constraint, DegreeBlock, ModelMeta, Sense, TurnTerm, Var};
pub use eval::{evaluate, Assignment, Evaluation, Violation, FEASIBILITY_TOL};
pub use penalties::{degree_penalty, edge_cost, pair_penalties, turn_penalty, turn_weight, DeviationStrategy, PairPenalties, TrackAxis};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("invalid path bounds: {0}")]
    Bounds(String),
    #[error("{0} is not an ocean cell of the grid")]
    NotInGrid(CellId),
    #[error("start and goal are the same cell {0}")]
    SameEndpoints(CellId),
    #[error("no path between {0} and {1} in the grid adjacency")]
    Disconnected(CellId, CellId),
    #[error("edges {0} and {1} do not share exactly one vertex")]
    NotAdjacentEdges(EdgeKey, EdgeKey),
    #[error("model dump line {line}: {message}")]
    Dump { line: usize, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Objective weights. Every field is a nonnegative finite real and `h > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub k_safety: f64,
    pub w_thick: f64,
    pub w_age: f64,
    pub w_conc: f64,
    pub w_snow: f64,
    pub w_side: f64,
    pub w_lat: f64,
    /// Connectivity constant added to every edge.
    pub h: f64,
    pub w_turn: f64,
    pub w_deg: f64,
    pub w_len: f64,
    /// Experimental drift term, per m/s of the faster endpoint drift. Off by default.
    pub w_drift: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            k_safety: 1.0,
            w_thick: 1.0,
            w_age: 1.0,
            w_conc: 1.0,
            w_snow: 1.0,
            w_side: 1.0,
            w_lat: 1.0,
            h: 0.01,
            w_turn: 1.0,
            w_deg: 1.0,
            w_len: 1.0,
            w_drift: 0.0,
        }
    }
}

impl Weights {
    pub fn named(&self) -> [(&'static str, f64); 12] {
        [
            ("k_safety", self.k_safety),
            ("w_thick", self.w_thick),
            ("w_age", self.w_age),
            ("w_conc", self.w_conc),
            ("w_snow", self.w_snow),
            ("w_side", self.w_side),
            ("w_lat", self.w_lat),
            ("h", self.h),
            ("w_turn", self.w_turn),
            ("w_deg", self.w_deg),
            ("w_len", self.w_len),
            ("w_drift", self.w_drift),
        ]
    }

    pub fn set(&mut self, name: &str, v: f64) -> bool {
        let slot = match name {
            "k_safety" => &mut self.k_safety,
            "w_thick" => &mut self.w_thick,
            "w_age" => &mut self.w_age,
            "w_conc" => &mut self.w_conc,
            "w_snow" => &mut self.w_snow,
            "w_side" => &mut self.w_side,
            "w_lat" => &mut self.w_lat,
            "h" => &mut self.h,
            "w_turn" => &mut self.w_turn,
            "w_deg" => &mut self.w_deg,
            "w_len" => &mut self.w_len,
            "w_drift" => &mut self.w_drift,
            _ => return false,
        };
        *slot = v;
        true
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in self.named() {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::Weights(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if self.h <= 0.0 {
            return Err(ModelError::Weights("h must be > 0".into()));
        }
        Ok(())
    }
}

/// Admissible range for the number of selected edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathBounds {
    pub l_min: u32,
    pub l_max: u32,
}

impl PathBounds {
    pub fn new(l_min: u32, l_max: u32) -> Result<Self, ModelError> {
        if l_min < 1 || l_min > l_max {
            return Err(ModelError::Bounds(format!("need 1 <= l_min <= l_max, got {l_min}..{l_max}")));
        }
        Ok(Self { l_min, l_max })
    }

    /// Lattice distance between the endpoints, up to three times that.
    pub fn for_endpoints(s: CellId, g: CellId) -> Result<Self, ModelError> {
        let d = s
            .hex_distance(g)
            .ok_or_else(|| ModelError::Bounds(format!("{s} and {g} are at different resolutions")))?;
        let d = u32::try_from(d.max(1)).map_err(|_| ModelError::Bounds("endpoints too far apart".into()))?;
        Self::new(d, d.saturating_mul(3))
    }
}

/// Undirected edge with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    pub i: CellId,
    pub j: CellId,
}

impl EdgeKey {
    /// Canonical key; `None` for a self loop.
    pub fn new(a: CellId, b: CellId) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self { i: a, j: b }),
            std::cmp::Ordering::Greater => Some(Self { i: b, j: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// The vertex shared with `other` when the two edges meet in exactly one cell.
    pub fn pivot(&self, other: &EdgeKey) -> Option<CellId> {
        let shared: Vec<CellId> = [self.i, self.j].into_iter().filter(|v| *v == other.i || *v == other.j).collect();
        match shared.as_slice() {
            [v] => Some(*v),
            _ => None,
        }
    }

    pub fn other(&self, v: CellId) -> CellId {
        if v == self.i {
            self.j
        } else {
            self.i
        }
    }

    pub fn var_name(&self) -> String {
        format!("x_{}_{}", self.i, self.j)
    }
}

impl std::fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}
