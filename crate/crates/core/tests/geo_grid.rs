use std::collections::BTreeSet;

use icepath::fixtures;
use icepath::geo::{shift_lon, GeoPoint};
use icepath::hexgrid::{cell_pitch_km, filter_land, normalize_longitudes, polygon_to_cells, CellId, CorridorGrid, Polygon};
use icepath::{haversine, EARTH_RADIUS_KM};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gp(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

/// Chord-length great-circle distance, written independently of the library.
fn chord_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let v = |lat: f64, lon: f64| {
        let (a, b) = (lat.to_radians(), lon.to_radians());
        [a.cos() * b.cos(), a.cos() * b.sin(), a.sin()]
    };
    let (a, b) = (v(lat1, lon1), v(lat2, lon2));
    let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    EARTH_RADIUS_KM * sin.atan2(dot)
}

#[test]
fn haversine_agrees_with_independent_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let (la1, lo1) = (rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..180.0));
        let (la2, lo2) = (rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..180.0));
        let want = chord_distance(la1, lo1, la2, lo2);
        let got = haversine(gp(la1, lo1), gp(la2, lo2));
        assert!((got - want).abs() <= 1e-6 * want.max(1e-9), "{got} vs {want}");
    }
}

#[test]
fn haversine_frozen_values() {
    let cases = [
        ((89.0, 0.0), (89.0, 180.0), 222.38985328911858),
        ((0.0, 0.0), (0.0, 90.0), 10007.543398010284),
        ((70.0, 170.0), (72.0, -175.0), 584.8447285143235),
        ((-33.9, 151.2), (51.5, -0.1), 16994.717998752094),
    ];
    for ((a, b), (c, d), want) in cases {
        let got = haversine(gp(a, b), gp(c, d));
        assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
    }
}

proptest! {
    #[test]
    fn haversine_is_a_metric(la1 in -90.0..=90.0f64, lo1 in -180.0..180.0f64, la2 in -90.0..=90.0f64, lo2 in -180.0..180.0f64,
                             la3 in -90.0..=90.0f64, lo3 in -180.0..180.0f64) {
        let (a, b, c) = (gp(la1, lo1), gp(la2, lo2), gp(la3, lo3));
        let ab = haversine(a, b);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - haversine(b, a)).abs() <= 1e-9);
        prop_assert!(haversine(a, a) <= 1e-9);
        prop_assert!(ab <= haversine(a, c) + haversine(c, b) + 1e-6);
    }
}

fn side(p: GeoPoint) -> f64 {
    shift_lon(p.lon) - 180.0
}

#[test]
fn antimeridian_cells_have_neighbours_across() {
    let grid = fixtures::reference_corridor();
    let pitch = cell_pitch_km(grid.resolution);
    let mut checked = 0;
    for c in grid.cells.values() {
        if haversine(c.centroid, gp(c.centroid.lat, 180.0)) > pitch {
            continue;
        }
        checked += 1;
        let across = c.neighbors.iter().any(|n| side(n.centroid()) * side(c.centroid) <= 0.0);
        assert!(across, "{} has no neighbour across the meridian", c.id);
    }
    assert!(checked > 10);
}

fn build_in_pool(threads: usize, poly: &Polygon, land: &[Polygon]) -> (BTreeSet<CellId>, BTreeSet<CellId>) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let shifted = normalize_longitudes(poly).unwrap();
        let land: Vec<_> = land.iter().map(|p| normalize_longitudes(p).unwrap()).collect();
        let cells = polygon_to_cells(&shifted, 5).unwrap();
        let ocean = filter_land(&cells, &land);
        (cells, ocean)
    })
}

#[test]
fn grid_construction_is_thread_independent() {
    let poly = Polygon::rectangle(70.0, 170.0, 75.0, -165.0).unwrap();
    let land = vec![Polygon::rectangle(71.0, 175.0, 71.6, 177.0).unwrap(), Polygon::rectangle(73.5, -170.0, 74.0, -168.0).unwrap()];
    let one = build_in_pool(1, &poly, &land);
    let again = build_in_pool(1, &poly, &land);
    let four = build_in_pool(4, &poly, &land);
    assert_eq!(one, again);
    assert_eq!(one, four);
    assert!(one.1.len() < one.0.len());
}

/// Even-odd point-in-ring test in shifted lon/lat.
fn in_ring(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = ring.len();
    for i in 0..n {
        let (xi, yi) = ring[i];
        let (xj, yj) = ring[(i + n - 1) % n];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

fn segments_cross(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let orient = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0)
}

#[test]
fn no_ocean_cell_touches_land() {
    let corridor = Polygon::rectangle(70.0, 175.0, 72.5, -172.0).unwrap();
    let land_polys = vec![
        Polygon::rectangle(70.8, 178.0, 71.3, -179.0).unwrap(),
        Polygon::new(vec![vec![gp(71.8, -176.0), gp(72.2, -174.5), gp(71.5, -174.0)]]).unwrap(),
    ];
    let (grid, summary) = CorridorGrid::build(&[corridor], &land_polys, 5).unwrap();
    assert!(summary.land_cells > 0);
    let land: Vec<Vec<(f64, f64)>> = land_polys
        .iter()
        .map(|p| p.rings[0].iter().map(|q| (shift_lon(q.lon), q.lat)).collect())
        .collect();
    for c in grid.cells.values() {
        let hex: Vec<(f64, f64)> = c.id.boundary(8).iter().map(|q| (shift_lon(q.lon), q.lat)).collect();
        for ring in &land {
            assert!(hex.iter().all(|&(x, y)| !in_ring(ring, x, y)), "{} has a boundary point on land", c.id);
            assert!(ring.iter().all(|&(x, y)| !in_ring(&hex, x, y)), "land vertex inside {}", c.id);
            for i in 0..hex.len() {
                for j in 0..ring.len() {
                    let (a, b) = (hex[i], hex[(i + 1) % hex.len()]);
                    let (p, q) = (ring[j], ring[(j + 1) % ring.len()]);
                    assert!(!segments_cross(a, b, p, q), "{} boundary crosses land", c.id);
                }
            }
        }
    }
}
