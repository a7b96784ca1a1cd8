//! Route reconstruction from solver output, relinking, metrics and export.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::geo::{haversine, interpolate, turn_angle, GeoPoint};
use crate::hexgrid::CellId;
use crate::model::{Assignment, CqmModel, EdgeKey};
use crate::solvers::route_space::Ord64;

/// Activation threshold; values must exceed it strictly.
pub const ACTIVE_THRESHOLD: f64 = 0.5;
/// Cargo mass in tonnes for the emission proxy.
pub const CARGO_TONNES: f64 = 50_000.0;
/// Emission factor in grams of CO2 per tonne-kilometre.
pub const EMISSION_G_PER_TKM: f64 = 10.0;
/// Maximum spacing of exported polyline samples.
pub const POLYLINE_STEP_KM: f64 = 25.0;

#[derive(Debug, thiserror::Error)]
pub enum RecoveryError {
    #[error("start and goal are not connected even in the full graph")]
    Unrecoverable,
    #[error("route needs at least 2 cells, got {0}")]
    TooShort(usize),
    #[error("assignment does not match the model's variables")]
    Shape,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Edges the solver switched on, with positive flow arcs as direction hints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActiveSubgraph {
    /// Model edge indices, ascending.
    pub edges: Vec<usize>,
    /// `(arc, flow)` for arcs of active edges carrying positive flow.
    pub flows: Vec<(usize, f64)>,
}

pub fn extract_active(model: &CqmModel, a: &Assignment, threshold: f64) -> Result<ActiveSubgraph, RecoveryError> {
    if a.x.len() != model.edges.len() || a.f.len() != model.arcs.len() {
        return Err(RecoveryError::Shape);
    }
    let edges = a.active_edges(threshold);
    let mut flows = Vec::new();
    for &e in &edges {
        for arc in [2 * e, 2 * e + 1] {
            if a.f[arc] > 0.0 {
                flows.push((arc, a.f[arc]));
            }
        }
    }
    Ok(ActiveSubgraph { edges, flows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub cells: Vec<CellId>,
    /// Cell centroids, one per cell.
    pub vertices: Vec<GeoPoint>,
    /// Great-circle samples between consecutive centroids.
    pub polyline: Vec<GeoPoint>,
    pub relinked_edges: Vec<EdgeKey>,
}

impl Route {
    /// Route through explicit points; cells are left empty when unknown.
    pub fn from_points(cells: Vec<CellId>, vertices: Vec<GeoPoint>, relinked_edges: Vec<EdgeKey>) -> Self {
        Self {
            polyline: sample_polyline(&vertices, POLYLINE_STEP_KM),
            cells,
            vertices,
            relinked_edges,
        }
    }

    /// Model edge indices along the route.
    pub fn edge_indices(&self, model: &CqmModel) -> Vec<usize> {
        self.cells
            .windows(2)
            .filter_map(|w| {
                let (u, v) = (model.node_index(w[0])?, model.node_index(w[1])?);
                model.edge_between(u, v)
            })
            .collect()
    }
}

/// Great-circle samples every at most `step_km`, including both ends.
pub fn sample_polyline(vertices: &[GeoPoint], step_km: f64) -> Vec<GeoPoint> {
    let mut out = Vec::new();
    if let Some(&first) = vertices.first() {
        out.push(first);
    }
    for w in vertices.windows(2) {
        let n = (haversine(w[0], w[1]) / step_km).ceil().max(1.0) as usize;
        for k in 1..=n {
            out.push(if k == n { w[1] } else { interpolate(w[0], w[1], k as f64 / n as f64) });
        }
    }
    out
}

/// Dijkstra over nodes with per-edge weights; `None` marks an unusable edge.
fn cheapest_node_path(model: &CqmModel, weight: impl Fn(usize) -> Option<f64>) -> Option<Vec<usize>> {
    let n = model.nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[model.start] = 0.0;
    heap.push(Reverse((Ord64(0.0), model.start)));
    while let Some(Reverse((Ord64(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == model.goal {
            break;
        }
        for &e in &model.incident[u] {
            let Some(w) = weight(e) else { continue };
            let v = model.other_end(e, u);
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = u;
                heap.push(Reverse((Ord64(nd), v)));
            }
        }
    }
    if !dist[model.goal].is_finite() {
        return None;
    }
    let mut path = vec![model.goal];
    while *path.last().expect("nonempty") != model.start {
        path.push(prev[*path.last().expect("nonempty")]);
    }
    path.reverse();
    Some(path)
}

/// Walks the largest positive flow out of each node; `None` if it stalls or loops.
fn follow_flow(model: &CqmModel, sub: &ActiveSubgraph) -> Option<Vec<usize>> {
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.nodes.len()];
    for &(arc, f) in &sub.flows {
        out[model.arcs[arc].from].push((arc, f));
    }
    let mut seen = vec![false; model.nodes.len()];
    let mut path = vec![model.start];
    seen[model.start] = true;
    let mut u = model.start;
    while u != model.goal {
        let (arc, _) = out[u]
            .iter()
            .filter(|(a, _)| !seen[model.arcs[*a].to])
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))?;
        u = model.arcs[*arc].to;
        seen[u] = true;
        path.push(u);
    }
    Some(path)
}

/// Orders the active edges into a simple start-goal route. Positive flow
/// decides the direction when it forms a path; otherwise the cheapest path
/// inside the active edges is used. If the active edges do not connect start
/// and goal, the cheapest completion over the full graph (active edges free)
/// is taken and its new edges are recorded as relinked.
pub fn reconstruct(sub: &ActiveSubgraph, model: &CqmModel) -> Result<Route, RecoveryError> {
    let mut active = vec![false; model.edges.len()];
    for &e in &sub.edges {
        active[e] = true;
    }
    let inside = cheapest_node_path(model, |e| active[e].then_some(model.costs[e]));
    let (path, relinked) = match inside {
        Some(p) => (follow_flow(model, sub).unwrap_or(p), Vec::new()),
        None => {
            let p = cheapest_node_path(model, |e| Some(if active[e] { 0.0 } else { model.costs[e] })).ok_or(RecoveryError::Unrecoverable)?;
            let added = p
                .windows(2)
                .map(|w| model.edge_between(w[0], w[1]).expect("path follows edges"))
                .filter(|&e| !active[e])
                .map(|e| model.edges[e])
                .collect();
            (p, added)
        }
    };
    Ok(Route::from_points(
        path.iter().map(|&u| model.nodes[u]).collect(),
        path.iter().map(|&u| model.centroids[u]).collect(),
        relinked,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteMetrics {
    pub length_km: f64,
    pub zigzag_raw: f64,
    pub zigzag_pct: f64,
    pub co2_kg: f64,
    pub selected_nodes: usize,
}

pub fn co2_kg(length_km: f64) -> f64 {
    length_km * CARGO_TONNES * EMISSION_G_PER_TKM / 1000.0
}

pub fn metrics(route: &Route) -> Result<RouteMetrics, RecoveryError> {
    let mut m = point_metrics(&route.vertices)?;
    if !route.cells.is_empty() {
        m.selected_nodes = route.cells.len();
    }
    Ok(m)
}

/// Metrics of a vertex sequence: exact centroid-to-centroid length and turning.
pub fn point_metrics(points: &[GeoPoint]) -> Result<RouteMetrics, RecoveryError> {
    if points.len() < 2 {
        return Err(RecoveryError::TooShort(points.len()));
    }
    let length_km: f64 = points.windows(2).map(|w| haversine(w[0], w[1])).sum();
    let zigzag_raw: f64 = points.windows(3).map(|w| 1.0 - turn_angle(w[0], w[1], w[2]).cos()).sum();
    let interior = points.len() - 2;
    let zigzag_pct = if interior == 0 {
        0.0
    } else {
        (100.0 * zigzag_raw / (2.0 * interior as f64)).clamp(0.0, 100.0)
    };
    Ok(RouteMetrics {
        length_km,
        zigzag_raw,
        zigzag_pct,
        co2_kg: co2_kg(length_km),
        selected_nodes: points.len(),
    })
}

/// Splits a polyline at the antimeridian into pieces that never jump across it.
/// Points lying on the meridian are not repeated, and pieces reduced to a
/// single point are dropped.
pub fn split_antimeridian(points: &[GeoPoint]) -> Vec<Vec<[f64; 2]>> {
    fn push(cur: &mut Vec<[f64; 2]>, p: [f64; 2]) {
        if cur.last() != Some(&p) {
            cur.push(p);
        }
    }
    let mut parts: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut cur: Vec<[f64; 2]> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            let q = points[i - 1];
            if (p.lon - q.lon).abs() > 180.0 {
                let edge = if q.lon > 0.0 { 180.0 } else { -180.0 };
                let lon2 = p.lon + 2.0 * edge;
                let t = if lon2 == q.lon { 0.5 } else { (edge - q.lon) / (lon2 - q.lon) };
                let lat = q.lat + t * (p.lat - q.lat);
                push(&mut cur, [edge, lat]);
                parts.push(std::mem::take(&mut cur));
                cur.push([-edge, lat]);
            }
        }
        push(&mut cur, [p.lon, p.lat]);
    }
    parts.push(cur);
    parts.retain(|part| part.len() >= 2);
    parts
}

pub fn route_geojson(route: &Route, m: &RouteMetrics) -> Value {
    let parts = split_antimeridian(&route.polyline);
    let geometry = if parts.len() == 1 {
        json!({"type": "LineString", "coordinates": parts[0]})
    } else {
        json!({"type": "MultiLineString", "coordinates": parts})
    };
    let relinked: Vec<String> = route.relinked_edges.iter().map(|e| e.to_string()).collect();
    let mut features = vec![json!({
        "type": "Feature",
        "geometry": geometry,
        "properties": {
            "kind": "route",
            "length_km": m.length_km,
            "zigzag_raw": m.zigzag_raw,
            "zigzag_pct": m.zigzag_pct,
            "co2_kg": m.co2_kg,
            "selected_nodes": m.selected_nodes,
            "relinked_edges": relinked,
        }
    })];
    for (i, p) in route.vertices.iter().enumerate() {
        let cell = route.cells.get(i).map(|c| c.to_string());
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [p.lon, p.lat]},
            "properties": {"kind": "cell", "index": i, "cell": cell}
        }));
    }
    json!({"type": "FeatureCollection", "features": features})
}

pub fn export_geojson(route: &Route, m: &RouteMetrics, path: &Path) -> Result<(), RecoveryError> {
    if route.vertices.len() < 2 {
        return Err(RecoveryError::TooShort(route.vertices.len()));
    }
    let text = serde_json::to_string_pretty(&route_geojson(route, m)).expect("json values serialize");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub const METRICS_HEADER: &str = "solver,nodes,quad_terms,objective,selected_nodes,km,zigzag_pct,co2_kg,time_s";

/// One row of the route comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub solver: String,
    pub nodes: usize,
    pub quad_terms: usize,
    pub objective: f64,
    pub selected_nodes: usize,
    pub km: f64,
    pub zigzag_pct: f64,
    pub co2_kg: f64,
    pub time_s: f64,
}

impl MetricsRow {
    pub fn new(solver: &str, model: &CqmModel, objective: f64, m: &RouteMetrics, time_s: f64) -> Self {
        Self {
            solver: solver.into(),
            nodes: model.nodes.len(),
            quad_terms: model.num_quadratic_terms(),
            objective,
            selected_nodes: m.selected_nodes,
            km: m.length_km,
            zigzag_pct: m.zigzag_pct,
            co2_kg: m.co2_kg,
            time_s,
        }
    }
}

pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.solver, r.nodes, r.quad_terms, r.objective, r.selected_nodes, r.km, r.zigzag_pct, r.co2_kg, r.time_s
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geo::destination;
    use crate::solvers::solve_exhaustive;
    use approx::assert_abs_diff_eq;

    fn gp(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn threshold_is_strict() {
        let model = fixtures::flower_model(1.0);
        let mut a = Assignment::zeros(&model);
        assert!(extract_active(&model, &a, ACTIVE_THRESHOLD).unwrap().edges.is_empty());
        a.x[0] = 0.5;
        a.x[1] = 0.51;
        assert_eq!(extract_active(&model, &a, ACTIVE_THRESHOLD).unwrap().edges, vec![1]);
    }

    #[test]
    fn exhaustive_route_is_its_path() {
        let model = fixtures::flower_model(1.0);
        let r = solve_exhaustive(&model).unwrap();
        let sub = extract_active(&model, &r.assignment, ACTIVE_THRESHOLD).unwrap();
        let route = reconstruct(&sub, &model).unwrap();
        assert!(route.relinked_edges.is_empty());
        let mut got = route.edge_indices(&model);
        got.sort();
        assert_eq!(got, sub.edges);
        assert_eq!(route.cells[0], model.meta.start);
        assert_eq!(*route.cells.last().unwrap(), model.meta.goal);
    }

    #[test]
    fn straight_and_sixty_degree_turns() {
        let m = point_metrics(&[gp(0.0, 0.0), gp(0.0, 1.0), gp(0.0, 2.0)]).unwrap();
        assert_abs_diff_eq!(m.zigzag_raw, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.zigzag_pct, 0.0, epsilon = 1e-9);
        let pivot = gp(0.0, 0.0);
        let from = destination(pivot, 180f64.to_radians(), 50.0);
        let to = destination(pivot, 60f64.to_radians(), 50.0);
        let m = point_metrics(&[from, pivot, to]).unwrap();
        assert_abs_diff_eq!(m.zigzag_raw, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(m.zigzag_pct, 25.0, epsilon = 1e-7);
        assert!(matches!(point_metrics(&[pivot]), Err(RecoveryError::TooShort(1))));
    }

    #[test]
    fn co2_is_linear() {
        assert_abs_diff_eq!(co2_kg(4043.2914), 2_021_645.7, epsilon = 1e-6);
        assert_eq!(co2_kg(1.0), 500.0);
    }

    #[test]
    fn antimeridian_split() {
        let pts = [gp(70.0, 179.0), gp(70.2, -179.0)];
        let parts = split_antimeridian(&pts);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].last().unwrap()[0], 180.0);
        assert_eq!(parts[1][0][0], -180.0);
        assert_abs_diff_eq!(parts[0].last().unwrap()[1], 70.1, epsilon = 1e-12);
        let on_meridian = split_antimeridian(&[gp(71.0, 179.5), gp(71.1, -180.0), gp(71.2, -179.5)]);
        assert_eq!(on_meridian, vec![vec![[179.5, 71.0], [180.0, 71.1]], vec![[-180.0, 71.1], [-179.5, 71.2]]]);
        let ends_on_meridian = split_antimeridian(&[gp(71.0, 179.5), gp(71.1, -180.0)]);
        assert_eq!(ends_on_meridian, vec![vec![[179.5, 71.0], [180.0, 71.1]]]);
        assert_eq!(split_antimeridian(&[gp(1.0, 1.0), gp(2.0, 2.0)]).len(), 1);
    }

    #[test]
    fn polyline_spacing() {
        let v = [gp(70.0, 0.0), gp(71.0, 3.0)];
        let pl = sample_polyline(&v, POLYLINE_STEP_KM);
        assert!(pl.windows(2).all(|w| haversine(w[0], w[1]) <= POLYLINE_STEP_KM + 1e-9));
        assert_eq!(pl.first(), v.first());
        assert_eq!(pl.last(), v.last());
    }
}
