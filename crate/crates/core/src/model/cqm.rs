use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;

use super::penalties::{edge_cost, pair_penalties, turn_weight, DeviationStrategy, TrackAxis};
use super::{EdgeKey, ModelError, PathBounds, Weights};
use crate::envdata::{Calibration, CellFeatures};
use crate::geo::GeoPoint;
use crate::hexgrid::{CellId, CorridorGrid};

/// A model variable, by index into the owning model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    /// Binary activation of `edges[i]`.
    Edge(usize),
    /// Continuous flow on `arcs[a]`, bounded to `[0, 1]`.
    Flow(usize),
    /// Length shortfall below `l_min`, `>= 0`.
    Shortfall,
    /// Length excess above `l_max`, `>= 0`.
    Excess,
}

/// Directed arc over node indices; arcs `2e` and `2e + 1` are the two
/// directions of edge `e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub edge: usize,
    pub from: usize,
    pub to: usize,
}

/// Turning penalty between two edges meeting at `pivot`; `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnTerm {
    pub a: usize,
    pub b: usize,
    pub pivot: usize,
    pub coef: f64,
}

/// Soft degree target of one vertex over its incident edges.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeBlock {
    pub node: usize,
    pub target: u32,
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub start: CellId,
    pub goal: CellId,
    pub bounds: PathBounds,
    pub weights: Weights,
    pub calibration_hash: String,
}

/// Binary edge variables, unit-flow arcs and the quadratic objective.
///
/// Objective: `sum c_e x_e + sum w_ab x_a x_b + w_deg sum_v phi(deg v)
/// + w_len (shortfall^2 + excess^2)` with `phi` from [`super::degree_penalty`].
#[derive(Debug, Clone, PartialEq)]
pub struct CqmModel {
    pub meta: ModelMeta,
    /// Sorted cell ids; node index = position.
    pub nodes: Vec<CellId>,
    pub centroids: Vec<GeoPoint>,
    /// Sorted edge keys; edge index = position.
    pub edges: Vec<EdgeKey>,
    /// `(i, j)` node indices of each edge, `i < j`.
    pub edge_nodes: Vec<(usize, usize)>,
    /// Linear cost `c_e`.
    pub costs: Vec<f64>,
    /// One term per pair of edges sharing exactly one vertex, sorted by `(a, b)`.
    pub turns: Vec<TurnTerm>,
    pub degree: Vec<DegreeBlock>,
    pub arcs: Vec<Arc>,
    /// Edge indices incident to each node.
    pub incident: Vec<Vec<usize>>,
    /// For each edge, `(other edge, coefficient)` of its turn terms.
    pub turn_partners: Vec<Vec<(usize, f64)>>,
    pub start: usize,
    pub goal: usize,
}

impl CqmModel {
    /// Assembles a model from explicit nodes and edge costs. Turning
    /// penalties are derived from the centroids and `weights.w_turn`.
    /// Connectivity between the endpoints is not checked.
    pub fn from_parts(
        nodes: Vec<(CellId, GeoPoint)>,
        edges: Vec<(EdgeKey, f64)>,
        start: CellId,
        goal: CellId,
        bounds: PathBounds,
        weights: Weights,
        calibration_hash: String,
    ) -> Result<Self, ModelError> {
        weights.validate()?;
        if start == goal {
            return Err(ModelError::SameEndpoints(start));
        }
        let by_id: BTreeMap<CellId, GeoPoint> = nodes.into_iter().collect();
        let nodes: Vec<CellId> = by_id.keys().copied().collect();
        let centroids: Vec<GeoPoint> = by_id.values().copied().collect();
        let index = |id: CellId| nodes.binary_search(&id).map_err(|_| ModelError::NotInGrid(id));
        let (s, g) = (index(start)?, index(goal)?);

        let by_edge: BTreeMap<EdgeKey, f64> = edges.into_iter().collect();
        let mut edge_keys = Vec::with_capacity(by_edge.len());
        let mut edge_nodes = Vec::with_capacity(by_edge.len());
        let mut costs = Vec::with_capacity(by_edge.len());
        let mut incident = vec![Vec::new(); nodes.len()];
        for (k, (e, c)) in by_edge.into_iter().enumerate() {
            let (i, j) = (index(e.i)?, index(e.j)?);
            incident[i].push(k);
            incident[j].push(k);
            edge_keys.push(e);
            edge_nodes.push((i, j));
            costs.push(c);
        }

        let mut turns = Vec::new();
        for (v, inc) in incident.iter().enumerate() {
            for (x, &a) in inc.iter().enumerate() {
                for &b in &inc[x + 1..] {
                    let far = |e: usize| {
                        let (i, j) = edge_nodes[e];
                        if i == v {
                            j
                        } else {
                            i
                        }
                    };
                    let coef = turn_weight(centroids[far(a)], centroids[v], centroids[far(b)], weights.w_turn);
                    turns.push(TurnTerm {
                        a: a.min(b),
                        b: a.max(b),
                        pivot: v,
                        coef,
                    });
                }
            }
        }
        turns.sort_by_key(|t| (t.a, t.b));

        let mut turn_partners = vec![Vec::new(); edge_keys.len()];
        for t in &turns {
            turn_partners[t.a].push((t.b, t.coef));
            turn_partners[t.b].push((t.a, t.coef));
        }
        let degree = incident
            .iter()
            .enumerate()
            .map(|(v, inc)| DegreeBlock {
                node: v,
                target: if v == s || v == g { 1 } else { 2 },
                edges: inc.clone(),
            })
            .collect();
        let arcs = edge_nodes
            .iter()
            .enumerate()
            .flat_map(|(e, &(i, j))| [Arc { edge: e, from: i, to: j }, Arc { edge: e, from: j, to: i }])
            .collect();

        Ok(Self {
            meta: ModelMeta {
                start,
                goal,
                bounds,
                weights,
                calibration_hash,
            },
            nodes,
            centroids,
            edges: edge_keys,
            edge_nodes,
            costs,
            turns,
            degree,
            arcs,
            incident,
            turn_partners,
            start: s,
            goal: g,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_quadratic_terms(&self) -> usize {
        self.turns.len()
    }

    pub fn node_index(&self, id: CellId) -> Option<usize> {
        self.nodes.binary_search(&id).ok()
    }

    pub fn edge_index(&self, e: &EdgeKey) -> Option<usize> {
        self.edges.binary_search(e).ok()
    }

    /// Edge joining two node indices, if any.
    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.incident[u].iter().copied().find(|&e| {
            let (i, j) = self.edge_nodes[e];
            (i == u && j == v) || (i == v && j == u)
        })
    }

    /// Arc index of edge `e` traversed from node `from`.
    pub fn arc_from(&self, e: usize, from: usize) -> usize {
        if self.edge_nodes[e].0 == from {
            2 * e
        } else {
            2 * e + 1
        }
    }

    pub fn other_end(&self, e: usize, v: usize) -> usize {
        let (i, j) = self.edge_nodes[e];
        if i == v {
            j
        } else {
            i
        }
    }

    pub fn var_name(&self, v: Var) -> String {
        match v {
            Var::Edge(e) => self.edges[e].var_name(),
            Var::Flow(a) => {
                let arc = self.arcs[a];
                format!("f_{}_{}", self.nodes[arc.from], self.nodes[arc.to])
            }
            Var::Shortfall => "s_short".into(),
            Var::Excess => "s_excess".into(),
        }
    }

    /// Every variable in canonical order: edges, arcs, then the two slacks.
    pub fn variables(&self) -> Vec<Var> {
        let mut v: Vec<Var> = (0..self.edges.len()).map(Var::Edge).collect();
        v.extend((0..self.arcs.len()).map(Var::Flow));
        v.push(Var::Shortfall);
        v.push(Var::Excess);
        v
    }

    /// Looks a variable up by its dump name.
    pub fn var_by_name(&self, name: &str) -> Option<Var> {
        match name {
            "s_short" => return Some(Var::Shortfall),
            "s_excess" => return Some(Var::Excess),
            _ => {}
        }
        let (kind, rest) = name.split_at_checked(2)?;
        let (a, b) = rest.split_once('_')?;
        let (a, b): (CellId, CellId) = (a.parse().ok()?, b.parse().ok()?);
        match kind {
            "x_" => {
                let key = EdgeKey::new(a, b)?;
                (key.i == a).then_some(())?;
                self.edge_index(&key).map(Var::Edge)
            }
            "f_" => {
                let (u, v) = (self.node_index(a)?, self.node_index(b)?);
                let e = self.edge_between(u, v)?;
                Some(Var::Flow(self.arc_from(e, u)))
            }
            _ => None,
        }
    }

    /// Hard constraints: flow conservation per node, arc capacity coupling,
    /// and the two length slacks.
    pub fn constraints(&self) -> Vec<Constraint> {
        let mut out = Vec::with_capacity(self.nodes.len() + self.arcs.len() + 2);
        for (v, id) in self.nodes.iter().enumerate() {
            let mut terms = Vec::new();
            for &e in &self.incident[v] {
                terms.push((Var::Flow(self.arc_from(e, v)), 1.0));
                terms.push((Var::Flow(self.arc_from(e, self.other_end(e, v))), -1.0));
            }
            terms.sort_by_key(|t| t.0);
            let rhs = if v == self.start {
                1.0
            } else if v == self.goal {
                -1.0
            } else {
                0.0
            };
            out.push(Constraint {
                name: format!("flow_{id}"),
                terms,
                sense: Sense::Eq,
                rhs,
            });
        }
        for (a, arc) in self.arcs.iter().enumerate() {
            out.push(Constraint {
                name: format!("cap_{}_{}", self.nodes[arc.from], self.nodes[arc.to]),
                terms: vec![(Var::Edge(arc.edge), -1.0), (Var::Flow(a), 1.0)],
                sense: Sense::Le,
                rhs: 0.0,
            });
        }
        let all_edges = || (0..self.edges.len()).map(|e| (Var::Edge(e), 1.0));
        let mut terms: Vec<(Var, f64)> = all_edges().collect();
        terms.push((Var::Shortfall, 1.0));
        out.push(Constraint {
            name: "len_min".into(),
            terms,
            sense: Sense::Ge,
            rhs: self.meta.bounds.l_min as f64,
        });
        let mut terms: Vec<(Var, f64)> = all_edges().collect();
        terms.push((Var::Excess, -1.0));
        out.push(Constraint {
            name: "len_max".into(),
            terms,
            sense: Sense::Le,
            rhs: self.meta.bounds.l_max as f64,
        });
        out
    }

    /// Whether the endpoints are joined in the full edge set.
    pub fn endpoints_connected(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([self.start]);
        seen[self.start] = true;
        while let Some(u) = queue.pop_front() {
            if u == self.goal {
                return true;
            }
            for &e in &self.incident[u] {
                let v = self.other_end(e, u);
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        false
    }
}

/// Builds the routing model for one corridor day.
pub fn build_model(
    grid: &CorridorGrid,
    features: &[CellFeatures],
    cal: &Calibration,
    weights: &Weights,
    start: CellId,
    goal: CellId,
    bounds: PathBounds,
) -> Result<CqmModel, ModelError> {
    build_model_with(grid, features, cal, weights, start, goal, bounds, DeviationStrategy::default())
}

#[allow(clippy::too_many_arguments)]
pub fn build_model_with(
    grid: &CorridorGrid,
    features: &[CellFeatures],
    cal: &Calibration,
    weights: &Weights,
    start: CellId,
    goal: CellId,
    bounds: PathBounds,
    deviation: DeviationStrategy,
) -> Result<CqmModel, ModelError> {
    weights.validate()?;
    if start == goal {
        return Err(ModelError::SameEndpoints(start));
    }
    let centroid = |id: CellId| grid.get(id).map(|c| c.centroid).ok_or(ModelError::NotInGrid(id));
    let axis = TrackAxis::new(centroid(start)?, centroid(goal)?, deviation);
    if !grid_connected(grid, start, goal) {
        return Err(ModelError::Disconnected(start, goal));
    }
    let by_cell: BTreeMap<CellId, &CellFeatures> = features.iter().map(|f| (f.cell, f)).collect();
    let edges: Vec<(EdgeKey, f64)> = grid
        .edges()
        .into_par_iter()
        .map(|(a, b)| {
            let pp = pair_penalties(
                by_cell.get(&a).copied(),
                by_cell.get(&b).copied(),
                cal,
                &axis,
                (grid.cells[&a].centroid, grid.cells[&b].centroid),
            );
            (EdgeKey { i: a, j: b }, edge_cost(&pp, weights))
        })
        .collect();
    let nodes = grid.cells.values().map(|c| (c.id, c.centroid)).collect();
    CqmModel::from_parts(nodes, edges, start, goal, bounds, *weights, cal.hash())
}

fn grid_connected(grid: &CorridorGrid, s: CellId, g: CellId) -> bool {
    let mut seen = std::collections::BTreeSet::from([s]);
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        if u == g {
            return true;
        }
        for &v in grid.neighbors(u).unwrap_or(&[]) {
            if seen.insert(v) {
                queue.push_back(v);
            }
        }
    }
    false
}
