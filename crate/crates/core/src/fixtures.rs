//! Deterministic synthetic corridors, ice fields and small routing models
//! for tests, examples and benchmarks.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envdata::{calibrate, Calibration, CalibrationPolicy, CellFeatures, EnvSample};
use crate::geo::GeoPoint;
use crate::hexgrid::{cell_at, CellId, CorridorGrid, Polygon};
use crate::model::{build_model, CqmModel, EdgeKey, PathBounds, Weights};

/// Day used by all synthetic fields.
pub fn fixture_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 9, 15).expect("valid date")
}

fn gp(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).expect("fixture coordinates are valid")
}

/// Smooth thickness/age/concentration/snow/drift values at a point plus noise.
fn ice_values(p: GeoPoint, phase: f64, rng: &mut ChaCha8Rng) -> [Option<f64>; 6] {
    let wave = 0.5 + 0.5 * (p.lat.to_radians() * 9.0 + crate::geo::shift_lon(p.lon).to_radians() * 4.0 + phase).sin();
    let thick = 0.2 + 2.5 * wave + rng.gen_range(0.0..0.3);
    let age = 0.8 * thick + rng.gen_range(0.0..0.5);
    let conc = (0.45 + 0.5 * wave + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
    let snow = 0.05 + 0.1 * thick * rng.gen_range(0.5..1.0);
    [
        Some(thick),
        Some(age),
        Some(conc),
        Some(snow),
        Some(rng.gen_range(-0.2..0.2)),
        Some(rng.gen_range(-0.2..0.2)),
    ]
}

/// One synthetic feature record per grid cell.
pub fn ice_features(grid: &CorridorGrid, seed: u64) -> Vec<CellFeatures> {
    let phase = ChaCha8Rng::seed_from_u64(seed).gen_range(0.0..std::f64::consts::TAU);
    grid.cells
        .values()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ c.id.raw());
            CellFeatures {
                cell: c.id,
                time: fixture_date(),
                values: ice_values(c.centroid, phase, &mut rng),
                sample_count: 1,
                field_counts: [1; 6],
            }
        })
        .collect()
}

/// Random gridded samples spread over the grid's cells, some with missing fields.
pub fn ice_samples(grid: &CorridorGrid, n: usize, seed: u64) -> Vec<EnvSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let cells: Vec<GeoPoint> = grid.cells.values().map(|c| c.centroid).collect();
    (0..n)
        .map(|_| {
            let c = cells[rng.gen_range(0..cells.len())];
            let p = gp((c.lat + rng.gen_range(-0.1..0.1)).clamp(-90.0, 90.0), c.lon + rng.gen_range(-0.3..0.3));
            let mut values = ice_values(p, phase, &mut rng);
            for v in &mut values {
                if rng.gen_bool(0.05) {
                    *v = None;
                }
            }
            EnvSample {
                point: p,
                time: fixture_date(),
                values,
            }
        })
        .collect()
}

pub fn default_calibration(features: &[CellFeatures]) -> Calibration {
    calibrate(features, &CalibrationPolicy::default()).expect("fixture features are nonempty")
}

/// Ocean grid of a lat/lon rectangle without land.
pub fn corridor_grid(south: f64, north: f64, west: f64, east: f64, resolution: u8) -> CorridorGrid {
    let poly = Polygon::rectangle(south, west, north, east).expect("valid rectangle");
    CorridorGrid::build(&[poly], &[], resolution).expect("grid builds").0
}

/// Full-size corridor for scale checks: 70-75N, 170E-165W.
pub fn reference_corridor() -> CorridorGrid {
    corridor_grid(70.0, 75.0, 170.0, -165.0, 5)
}

/// Routing model over a rectangle from its west edge to its east edge at mid latitude.
pub fn corridor_model(south: f64, north: f64, west: f64, east: f64, resolution: u8, seed: u64) -> CqmModel {
    let grid = corridor_grid(south, north, west, east, resolution);
    let mid = (south + north) / 2.0;
    let s = grid.nearest_cell(gp(mid, west)).expect("nonempty grid").0;
    let g = grid.nearest_cell(gp(mid, east)).expect("nonempty grid").0;
    model_on(&grid, s, g, seed, &Weights::default())
}

/// About 500 cells across the antimeridian.
pub fn medium_model(seed: u64) -> CqmModel {
    corridor_model(71.0, 73.0, 172.0, -171.5, 5, seed)
}

/// Builds a model on `grid` with a synthetic ice field and default bounds.
pub fn model_on(grid: &CorridorGrid, s: CellId, g: CellId, seed: u64, weights: &Weights) -> CqmModel {
    let feats = ice_features(grid, seed);
    let cal = default_calibration(&feats);
    let bounds = PathBounds::for_endpoints(s, g).expect("same resolution");
    build_model(grid, &feats, &cal, weights, s, g, bounds).expect("fixture model builds")
}

/// A cell and its six neighbours, near the antimeridian.
pub fn flower_grid() -> (CorridorGrid, CellId, Vec<CellId>) {
    let center = cell_at(gp(72.0, 179.8), 5).expect("valid cell");
    let ring = center.lattice_neighbors();
    let mut ids = ring.clone();
    ids.push(center);
    (CorridorGrid::from_cells(5, ids).expect("valid cells"), center, ring)
}

/// Seven-cell flower with start and goal on opposite rim cells.
pub fn flower_model(w_turn: f64) -> CqmModel {
    let (grid, _, ring) = flower_grid();
    let w = Weights { w_turn, ..Weights::default() };
    model_on(&grid, ring[0], ring[3], 5, &w)
}

/// Two separate edges; start and goal are not connected.
pub fn disconnected_model() -> CqmModel {
    let a = cell_at(gp(72.0, 20.0), 5).expect("valid cell");
    let b = a.lattice_neighbors()[0];
    let c = cell_at(gp(72.0, 25.0), 5).expect("valid cell");
    let d = c.lattice_neighbors()[0];
    let nodes = [a, b, c, d].iter().map(|&x| (x, x.centroid())).collect();
    let edges = vec![(EdgeKey::new(a, b).expect("distinct"), 1.0), (EdgeKey::new(c, d).expect("distinct"), 1.0)];
    CqmModel::from_parts(nodes, edges, a, c, PathBounds::new(1, 3).expect("valid"), Weights::default(), "none".into()).expect("valid parts")
}

/// Random connected blob of 4 to 12 cells with at most 22 edges; every third
/// seed straddles the antimeridian. Start is random and the goal is the
/// cell farthest from it on the lattice.
pub fn random_small_grid(seed: u64) -> (CorridorGrid, CellId, CellId) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lat = rng.gen_range(66.0..80.0);
    let lon = if seed % 3 == 0 {
        if rng.gen_bool(0.5) {
            179.95
        } else {
            -179.95
        }
    } else {
        rng.gen_range(-180.0..180.0)
    };
    let center = cell_at(gp(lat, lon), 5).expect("valid cell");
    let target = rng.gen_range(4..=12);
    let mut order = vec![center];
    let mut set = BTreeSet::from([center]);
    while order.len() < target {
        let base = order[rng.gen_range(0..order.len())];
        let ns = base.lattice_neighbors();
        let n = ns[rng.gen_range(0..ns.len())];
        if set.insert(n) {
            order.push(n);
        }
    }
    loop {
        let grid = CorridorGrid::from_cells(5, order.iter().copied()).expect("valid cells");
        if grid.edges().len() <= 22 {
            let s = order[rng.gen_range(0..order.len())];
            let g = *order
                .iter()
                .max_by_key(|&&c| (s.hex_distance(c).unwrap_or(0), std::cmp::Reverse(c)))
                .expect("nonempty");
            return (grid, s, g);
        }
        // the newest cell was attached to an older one, so dropping it keeps the blob connected
        order.pop();
    }
}

pub fn random_small_model(seed: u64) -> CqmModel {
    let (grid, s, g) = random_small_grid(seed);
    model_on(&grid, s, g, seed, &Weights::default())
}
