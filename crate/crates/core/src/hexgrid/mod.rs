//! Hexagonal tessellation of an ocean corridor.

mod grid;
pub mod lattice;
pub mod polygon;

pub use grid::{cell_intersects, filter_land, neighbors, polygon_to_cells, CorridorGrid, GridSummary, HexCell};
pub use lattice::{cell_area_km2, cell_at, cell_pitch_km, cell_radius_km, CellId, MAX_RESOLUTION, MIN_RESOLUTION};
pub use polygon::{normalize_longitudes, polygons_from_geojson, Polygon, ShiftedPolygon};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("malformed polygon: {0}")]
    MalformedPolygon(String),
    #[error("unsupported resolution {0} (supported: 3-8)")]
    Resolution(u8),
    #[error("invalid cell: {0}")]
    InvalidCell(String),
    #[error("geojson: {0}")]
    GeoJson(String),
    #[error("grid dump: {0}")]
    Dump(String),
}
