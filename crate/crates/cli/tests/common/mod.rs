#![allow(dead_code)]

use std::path::{Path, PathBuf};

use icepath::envdata::write_samples;
use icepath::fixtures;
use icepath::geo::destination;
use icepath::hexgrid::{cell_at, cell_radius_km, CellId};
use icepath::{CorridorGrid, GeoPoint};
use icepath_cli::{RunConfig, SolverKind};

pub fn gp(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

/// GeoJSON Polygon from `(lat, lon)` vertices.
pub fn polygon_geojson(vertices: &[GeoPoint]) -> String {
    let mut ring: Vec<[f64; 2]> = vertices.iter().map(|p| [p.lon, p.lat]).collect();
    ring.push(ring[0]);
    serde_json::json!({"type": "Polygon", "coordinates": [ring]}).to_string()
}

pub fn multipolygon_geojson(polys: &[Vec<GeoPoint>]) -> String {
    let coords: Vec<Vec<Vec<[f64; 2]>>> = polys
        .iter()
        .map(|v| {
            let mut ring: Vec<[f64; 2]> = v.iter().map(|p| [p.lon, p.lat]).collect();
            ring.push(ring[0]);
            vec![ring]
        })
        .collect();
    serde_json::json!({"type": "MultiPolygon", "coordinates": coords}).to_string()
}

pub fn rectangle(south: f64, north: f64, west: f64, east: f64) -> Vec<GeoPoint> {
    vec![gp(south, west), gp(south, east), gp(north, east), gp(north, west)]
}

/// Regular polygon of `radius_km` around `center`.
pub fn circle(center: GeoPoint, radius_km: f64, sides: usize) -> Vec<GeoPoint> {
    (0..sides)
        .map(|k| destination(center, std::f64::consts::TAU * k as f64 / sides as f64, radius_km))
        .collect()
}

/// Center cell of the seven-cell fixture.
pub fn tiny_center() -> CellId {
    cell_at(gp(72.0, 179.8), 5).unwrap()
}

/// Writes corridor and environmental files for `corridor` and a config that
/// routes from `start` to `goal`; returns the config path.
pub fn write_case(dir: &Path, corridor: &str, start: GeoPoint, goal: GeoPoint, samples: usize, seed: u64) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("corridor.geojson"), corridor).unwrap();
    let cfg = RunConfig {
        corridor_path: "corridor.geojson".into(),
        env_csv_path: "env.csv".into(),
        start,
        goal,
        seed,
        output_dir: "out".into(),
        ..RunConfig::default()
    };
    let mut abs = cfg.clone();
    abs.resolve_paths(dir);
    let (grid, _) = icepath_cli::commands::load_grid(&abs).unwrap();
    write_env(&dir.join("env.csv"), &grid, samples, seed);
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

pub fn write_env(path: &Path, grid: &CorridorGrid, samples: usize, seed: u64) {
    let s = fixtures::ice_samples(grid, samples, seed);
    write_samples(&s, std::fs::File::create(path).unwrap()).unwrap();
}

/// Seven-cell flower around the antimeridian, routed rim to rim.
pub fn tiny_case(dir: &Path) -> PathBuf {
    let center = tiny_center();
    let ring = center.lattice_neighbors();
    let corridor = polygon_geojson(&circle(center.centroid(), 0.95 * cell_radius_km(5), 24));
    write_case(dir, &corridor, ring[0].centroid(), ring[3].centroid(), 300, 4)
}

/// About a hundred cells straddling the antimeridian.
pub fn small_case(dir: &Path) -> PathBuf {
    let corridor = polygon_geojson(&rectangle(71.0, 72.0, 178.0, -178.5));
    write_case(dir, &corridor, gp(71.5, 178.1), gp(71.5, -178.6), 2000, 7)
}

pub fn load(path: &Path) -> RunConfig {
    RunConfig::load(path).unwrap()
}

pub fn with_solver(mut cfg: RunConfig, s: SolverKind) -> RunConfig {
    cfg.solver.name = s;
    cfg
}

/// Bundle files with wall-clock fields blanked.
pub fn masked_bundle(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for name in names {
        let text = std::fs::read_to_string(dir.join(&name)).unwrap();
        let masked = match name.as_str() {
            "result.json" => text
                .lines()
                .map(|l| if l.trim_start().starts_with("\"wall_time_s\"") { "  \"wall_time_s\": <masked>," } else { l })
                .collect::<Vec<_>>()
                .join("\n"),
            "metrics.csv" => text
                .lines()
                .map(|l| match l.rsplit_once(',') {
                    Some((head, _)) if !l.starts_with("solver,") => format!("{head},<masked>"),
                    _ => l.to_string(),
                })
                .collect::<Vec<_>>()
                .join("\n"),
            _ => text,
        };
        out.push((name, masked));
    }
    out
}
