use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use icepath::fixtures::{flower_grid, flower_model, random_small_model};
use icepath::geo::{destination, interpolate, turn_angle};
use icepath::model::{evaluate, Assignment, CqmModel, EdgeKey, PathBounds, Weights};
use icepath::recovery::{co2_kg, export_geojson, extract_active, metrics, point_metrics, reconstruct, route_geojson, Route, RouteMetrics, ACTIVE_THRESHOLD};
use icepath::solvers::{solve_anneal, AnnealSchedule};
use icepath::{haversine, CellId, GeoPoint};

fn arb_point() -> impl Strategy<Value = GeoPoint> {
    (-85.0f64..85.0, -180.0f64..180.0).prop_map(|(lat, lon)| GeoPoint::new(lat, lon).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn zigzag_percentage_is_bounded(points in proptest::collection::vec(arb_point(), 2..12)) {
        let m = point_metrics(&points).unwrap();
        prop_assert!((0.0..=100.0).contains(&m.zigzag_pct));
        let any_turn = points.windows(3).any(|w| turn_angle(w[0], w[1], w[2]) > 1e-6);
        if any_turn {
            prop_assert!(m.zigzag_pct > 0.0);
        }
    }

    #[test]
    fn straight_great_circle_has_no_zigzag(a in arb_point(), b in arb_point(), k in 3usize..12) {
        prop_assume!(haversine(a, b) > 100.0 && haversine(a, b) < 15_000.0);
        let points: Vec<GeoPoint> = (0..=k).map(|i| interpolate(a, b, i as f64 / k as f64)).collect();
        let m = point_metrics(&points).unwrap();
        prop_assert!(m.zigzag_pct.abs() <= 1e-9, "{}", m.zigzag_pct);
    }

    #[test]
    fn co2_is_five_hundred_kg_per_km(km in 1e-3f64..50_000.0) {
        let ratio = co2_kg(km) / km;
        prop_assert!((ratio - 500.0).abs() <= 1e-12 * 500.0);
    }
}

fn has_path(m: &CqmModel, active: &[bool]) -> bool {
    let mut seen = vec![false; m.nodes.len()];
    let mut stack = vec![m.start];
    seen[m.start] = true;
    while let Some(u) = stack.pop() {
        for &e in &m.incident[u] {
            let v = m.other_end(e, u);
            if active[e] && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen[m.goal]
}

fn check_route(m: &CqmModel, r: &Route) {
    assert_eq!(r.cells.first(), Some(&m.meta.start));
    assert_eq!(r.cells.last(), Some(&m.meta.goal));
    let mut sorted = r.cells.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), r.cells.len(), "repeated cell");
    assert!(r.cells.windows(2).all(|w| w[0].is_neighbor(w[1])));
    assert_eq!(r.edge_indices(m).len(), r.cells.len() - 1);
}

/// Random outputs: annealer results and random edge subsets with completed flows.
fn random_outputs(seed: u64) -> Vec<(CqmModel, Assignment)> {
    let m = random_small_model(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let sched = AnnealSchedule {
        sweeps: 5,
        restarts: 1,
        seed,
        ..AnnealSchedule::default()
    };
    out.push((m.clone(), solve_anneal(&m, &sched).assignment));
    for _ in 0..10 {
        let p = rng.gen_range(0.1..0.9);
        let bits: Vec<bool> = (0..m.num_edges()).map(|_| rng.gen_bool(p)).collect();
        out.push((m.clone(), Assignment::complete(&m, &bits)));
    }
    out
}

#[test]
fn no_relinking_when_active_edges_connect() {
    let mut connected = 0;
    for seed in 0..60 {
        for (m, a) in random_outputs(seed) {
            let sub = extract_active(&m, &a, ACTIVE_THRESHOLD).unwrap();
            let active: Vec<bool> = a.x.iter().map(|&x| x > ACTIVE_THRESHOLD).collect();
            let r = reconstruct(&sub, &m).unwrap();
            check_route(&m, &r);
            if has_path(&m, &active) {
                connected += 1;
                assert!(r.relinked_edges.is_empty(), "seed {seed}");
                assert!(r.edge_indices(&m).iter().all(|&e| active[e]));
            } else {
                assert!(!r.relinked_edges.is_empty());
            }
        }
    }
    assert!(connected > 50);
}

/// Turn terms of the route that involve at least one relinked edge.
fn relinked_turn_terms(m: &CqmModel, route_edges: &[usize], relinked: &[usize]) -> f64 {
    m.turns
        .iter()
        .filter(|t| route_edges.contains(&t.a) && route_edges.contains(&t.b) && (relinked.contains(&t.a) || relinked.contains(&t.b)))
        .map(|t| t.coef)
        .sum()
}

#[test]
fn route_objective_within_raw_plus_relinked_cost() {
    let (mut relinked_runs, mut over_linear_bound) = (0, 0);
    for seed in 0..60 {
        for (m, a) in random_outputs(seed) {
            let raw = evaluate(&m, &a).objective;
            let sub = extract_active(&m, &a, ACTIVE_THRESHOLD).unwrap();
            let r = reconstruct(&sub, &m).unwrap();
            let route_edges = r.edge_indices(&m);
            let mut bits = vec![false; m.num_edges()];
            for &e in &route_edges {
                bits[e] = true;
            }
            let route_obj = evaluate(&m, &Assignment::complete(&m, &bits)).objective;
            let relinked: Vec<usize> = r.relinked_edges.iter().map(|k| m.edge_index(k).unwrap()).collect();
            let relinked_cost: f64 = relinked.iter().map(|&e| m.costs[e]).sum();
            if relinked.is_empty() {
                assert!(route_obj <= raw + 1e-9, "seed {seed}: route {route_obj} raw {raw}");
                continue;
            }
            relinked_runs += 1;
            if route_obj > raw + relinked_cost + 1e-9 {
                over_linear_bound += 1;
            }
            // the joints between relinked and solver edges add turn terms of their own
            let bound = raw + relinked_cost + relinked_turn_terms(&m, &route_edges, &relinked);
            assert!(route_obj <= bound + 1e-9, "seed {seed}: route {route_obj} bound {bound}");
        }
    }
    assert!(relinked_runs > 20);
    eprintln!("{over_linear_bound} of {relinked_runs} relinked routes exceed raw + relinked edge cost alone");
}

fn line_model(len: i64, start: usize, goal: usize) -> (CqmModel, Vec<CellId>) {
    let ids: Vec<CellId> = (0..len).map(|k| CellId::from_axial(5, 40 + k, -20).unwrap()).collect();
    let nodes = ids.iter().map(|&c| (c, c.centroid())).collect();
    let edges = ids.windows(2).enumerate().map(|(k, w)| (EdgeKey::new(w[0], w[1]).unwrap(), 1.0 + k as f64 / 10.0)).collect();
    let m = CqmModel::from_parts(nodes, edges, ids[start], ids[goal], PathBounds::new(1, 20).unwrap(), Weights::default(), "line".into()).unwrap();
    (m, ids)
}

fn select(m: &CqmModel, pairs: &[(CellId, CellId)]) -> Assignment {
    let mut bits = vec![false; m.num_edges()];
    for &(a, b) in pairs {
        bits[m.edge_index(&EdgeKey::new(a, b).unwrap()).unwrap()] = true;
    }
    Assignment::complete(m, &bits)
}

#[test]
fn pendant_edge_is_dropped() {
    let m = flower_model(1.0);
    let (s, g) = (m.meta.start, m.meta.goal);
    let centre = m.nodes.iter().copied().find(|c| c.is_neighbor(s) && c.is_neighbor(g)).unwrap();
    let pendant = m.nodes.iter().copied().find(|&c| c != s && c != g && c != centre).unwrap();
    let a = select(&m, &[(s, centre), (centre, g), (centre, pendant)]);
    let r = reconstruct(&extract_active(&m, &a, ACTIVE_THRESHOLD).unwrap(), &m).unwrap();
    assert_eq!(r.cells, vec![s, centre, g]);
    assert!(r.relinked_edges.is_empty());
}

#[test]
fn gap_on_a_line_is_bridged() {
    let (m, ids) = line_model(6, 0, 5);
    let a = select(&m, &[(ids[0], ids[1]), (ids[1], ids[2]), (ids[4], ids[5])]);
    let r = reconstruct(&extract_active(&m, &a, ACTIVE_THRESHOLD).unwrap(), &m).unwrap();
    assert_eq!(r.cells, ids);
    assert_eq!(r.relinked_edges, vec![EdgeKey::new(ids[2], ids[3]).unwrap(), EdgeKey::new(ids[3], ids[4]).unwrap()]);
    let m2 = metrics(&r).unwrap();
    assert!(m2.zigzag_pct < 1e-6);
}

fn pairs(path: &[CellId]) -> Vec<(CellId, CellId)> {
    path.windows(2).map(|w| (w[0], w[1])).collect()
}

#[test]
fn flow_direction_beats_cost_when_present() {
    let (_, _, ring) = flower_grid();
    let m = flower_model(1.0);
    let north = [ring[0], ring[1], ring[2], ring[3]];
    let south = [ring[0], ring[5], ring[4], ring[3]];
    let cost = |p: &[CellId]| -> f64 { pairs(p).iter().map(|&(a, b)| m.costs[m.edge_index(&EdgeKey::new(a, b).unwrap()).unwrap()]).sum() };
    let (cheap, dear) = if cost(&north) <= cost(&south) { (north, south) } else { (south, north) };

    let mut a = select(&m, &pairs(&dear));
    for (x, y) in pairs(&cheap) {
        a.x[m.edge_index(&EdgeKey::new(x, y).unwrap()).unwrap()] = 1.0;
    }
    let r = reconstruct(&extract_active(&m, &a, ACTIVE_THRESHOLD).unwrap(), &m).unwrap();
    assert_eq!(r.cells, dear.to_vec());

    a.f.iter_mut().for_each(|f| *f = 0.0);
    let r = reconstruct(&extract_active(&m, &a, ACTIVE_THRESHOLD).unwrap(), &m).unwrap();
    assert_eq!(r.cells, cheap.to_vec());
}

#[test]
fn half_activation_is_not_active() {
    let (m, ids) = line_model(3, 0, 2);
    let mut a = select(&m, &pairs(&ids));
    a.x[1] = 0.5;
    let sub = extract_active(&m, &a, ACTIVE_THRESHOLD).unwrap();
    assert_eq!(sub.edges, vec![0]);
    let r = reconstruct(&sub, &m).unwrap();
    assert_eq!(r.relinked_edges, vec![m.edges[1]]);
}

fn lint_geojson(v: &Value) -> Vec<Vec<[f64; 2]>> {
    assert_eq!(v["type"], "FeatureCollection");
    let features = v["features"].as_array().unwrap();
    let line = &features[0]["geometry"];
    let parts: Vec<Vec<[f64; 2]>> = match line["type"].as_str().unwrap() {
        "LineString" => vec![serde_json::from_value(line["coordinates"].clone()).unwrap()],
        "MultiLineString" => serde_json::from_value(line["coordinates"].clone()).unwrap(),
        other => panic!("unexpected geometry {other}"),
    };
    for part in &parts {
        assert!(part.len() >= 2);
        for p in part {
            assert!((-180.0..=180.0).contains(&p[0]) && (-90.0..=90.0).contains(&p[1]), "{p:?}");
        }
        for w in part.windows(2) {
            assert!((w[1][0] - w[0][0]).abs() <= 180.0, "segment jumps the antimeridian: {w:?}");
        }
    }
    for f in &features[1..] {
        assert_eq!(f["geometry"]["type"], "Point");
    }
    parts
}

fn route_of(cells: Vec<CellId>) -> (Route, RouteMetrics) {
    let vertices = cells.iter().map(|c| c.centroid()).collect();
    let r = Route::from_points(cells, vertices, Vec::new());
    let m = metrics(&r).unwrap();
    (r, m)
}

#[test]
fn two_cell_route_is_a_two_point_line() {
    let a = CellId::from_axial(5, 10, 10).unwrap();
    let (r, m) = route_of(vec![a, a.lattice_neighbors()[0]]);
    let v = route_geojson(&r, &m);
    assert_eq!(v["features"][0]["geometry"]["type"], "LineString");
    assert_eq!(lint_geojson(&v)[0].len(), 2);
}

#[test]
fn antimeridian_route_is_split_and_round_trips() {
    let west = icepath::hexgrid::cell_at(GeoPoint::new(71.5, 179.0).unwrap(), 5).unwrap();
    let mut cells = vec![west];
    while !(-179.7..0.0).contains(&cells.last().unwrap().centroid().lon) {
        let last = *cells.last().unwrap();
        let target = destination(last.centroid(), std::f64::consts::FRAC_PI_2, 40.0);
        let next = last.lattice_neighbors().into_iter().min_by(|a, b| haversine(a.centroid(), target).total_cmp(&haversine(b.centroid(), target))).unwrap();
        cells.push(next);
    }
    let (r, m) = route_of(cells);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("route.geojson");
    export_geojson(&r, &m, &path).unwrap();
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["features"][0]["geometry"]["type"], "MultiLineString");
    let parts = lint_geojson(&v);
    assert_eq!(parts.len(), 2);
    let same = |p: [f64; 2], q: &GeoPoint| {
        let dlon = (p[0] - q.lon).rem_euclid(360.0);
        dlon.min(360.0 - dlon) <= 1e-9 && (p[1] - q.lat).abs() <= 1e-9
    };
    let coords = parts.concat();
    let mut k = 0;
    for q in &r.polyline {
        while k < coords.len() && !same(coords[k], q) {
            assert_eq!(coords[k][0].abs(), 180.0, "extra coordinate {:?}", coords[k]);
            k += 1;
        }
        assert!(k < coords.len(), "polyline point {q:?} missing from export");
        k += 1;
    }
    for (i, f) in v["features"].as_array().unwrap()[1..].iter().enumerate() {
        let c = &r.vertices[i];
        let xy: [f64; 2] = serde_json::from_value(f["geometry"]["coordinates"].clone()).unwrap();
        assert!((xy[0] - c.lon).abs() <= 1e-9 && (xy[1] - c.lat).abs() <= 1e-9);
    }
    assert!((v["features"][0]["properties"]["co2_kg"].as_f64().unwrap() - 500.0 * m.length_km).abs() < 1e-6);
}

#[test]
fn polyline_samples_are_close_and_exact_at_vertices() {
    let (_, ids) = line_model(8, 0, 7);
    let (r, metrics) = route_of(ids);
    for w in r.polyline.windows(2) {
        assert!(haversine(w[0], w[1]) <= 25.0 + 1e-9);
    }
    let sampled: f64 = r.polyline.windows(2).map(|w| haversine(w[0], w[1])).sum();
    assert!((sampled - metrics.length_km).abs() <= 1e-6 * metrics.length_km);
    assert_eq!(r.polyline.first(), r.vertices.first());
    assert_eq!(r.polyline.last(), r.vertices.last());
}
