use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use super::lattice::{self, check_resolution, CellId};
use super::polygon::{normalize_longitudes, ring_bbox, Polygon, ShiftedPolygon};
use super::GridError;
use crate::geo::{haversine, shift_lon, unshift_lon, GeoPoint};

/// Edge subdivisions used when tracing a hexagon boundary for intersection tests.
const BOUNDARY_SUBDIVISIONS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct HexCell {
    pub id: CellId,
    pub centroid: GeoPoint,
    /// Routable neighbours; always ocean cells of the same grid.
    pub neighbors: Vec<CellId>,
    pub is_ocean: bool,
}

/// Ocean cells of a corridor plus the cells removed by the land mask.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CorridorGrid {
    pub resolution: u8,
    pub cells: BTreeMap<CellId, HexCell>,
    /// Corridor cells dropped because they touch land.
    pub land_cells: BTreeSet<CellId>,
    pub bbox: Vec<Polygon>,
}

/// Summary written next to a grid dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSummary {
    pub candidate_cells: usize,
    pub ocean_cells: usize,
    pub land_cells: usize,
    pub edges: usize,
}

impl GridSummary {
    pub fn ocean_fraction(&self) -> f64 {
        if self.candidate_cells == 0 {
            0.0
        } else {
            self.ocean_cells as f64 / self.candidate_cells as f64
        }
    }
}

/// Lattice neighbours of a cell, independent of any grid.
pub fn neighbors(id: CellId) -> Result<Vec<CellId>, GridError> {
    CellId::from_raw(id.raw())?;
    Ok(id.lattice_neighbors())
}

/// Hexagon boundary in shifted lon/lat, unwrapped so the ring stays within
/// 180° of the shifted centroid longitude.
fn shifted_hex_ring(cell: CellId) -> (f64, Vec<(f64, f64)>) {
    let c = shift_lon(cell.centroid().lon);
    let ring = cell
        .boundary(BOUNDARY_SUBDIVISIONS)
        .into_iter()
        .map(|p| {
            let mut x = shift_lon(p.lon);
            if x - c > 180.0 {
                x -= 360.0;
            } else if c - x > 180.0 {
                x += 360.0;
            }
            (x, p.lat)
        })
        .collect();
    (c, ring)
}

/// Whether a cell's centroid or hexagon boundary touches the polygon.
pub fn cell_intersects(poly: &ShiftedPolygon, cell: CellId) -> bool {
    let (cx, ring) = shifted_hex_ring(cell);
    let cy = cell.centroid().lat;
    let b = poly.bbox();
    for offset in [0.0, 360.0, -360.0] {
        let rb = ring_bbox(&ring);
        if rb[2] + offset < b[0] || rb[0] + offset > b[2] {
            continue;
        }
        if poly.contains(cx + offset, cy) {
            return true;
        }
        let moved: Vec<(f64, f64)> = ring.iter().map(|&(x, y)| (x + offset, y)).collect();
        if poly.intersects_ring(&moved) {
            return true;
        }
    }
    false
}

/// Cells whose centroid or boundary intersects the (normalized) polygon.
pub fn polygon_to_cells(poly: &ShiftedPolygon, resolution: u8) -> Result<BTreeSet<CellId>, GridError> {
    check_resolution(resolution)?;
    // trace the boundary densely in the projected plane to bound the candidates
    let (mut xmin, mut ymin, mut xmax, mut ymax) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for ring in &poly.rings {
        for w in ring.windows(2) {
            let ((x1, y1), (x2, y2)) = (w[0], w[1]);
            let steps = (((x2 - x1).abs().max((y2 - y1).abs())) / 0.05).ceil().max(1.0) as usize;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                let lon = unshift_lon((x1 + t * (x2 - x1)).rem_euclid(360.0));
                let lat = (y1 + t * (y2 - y1)).clamp(-90.0, 90.0);
                let (px, py) = lattice::project(GeoPoint { lat, lon });
                xmin = xmin.min(px);
                xmax = xmax.max(px);
                ymin = ymin.min(py);
                ymax = ymax.max(py);
            }
        }
    }
    let mut out = BTreeSet::new();
    if !xmin.is_finite() {
        return Ok(out);
    }
    let size = lattice::cell_radius_km(resolution);
    let pad = 2.0 * size;
    let r_lo = ((ymin - pad) / (1.5 * size)).floor() as i64;
    let r_hi = ((ymax + pad) / (1.5 * size)).ceil() as i64;
    let width = 3f64.sqrt() * size;
    for r in r_lo..=r_hi {
        let shift = r as f64 / 2.0;
        let q_lo = ((xmin - pad) / width - shift).floor() as i64;
        let q_hi = ((xmax + pad) / width - shift).ceil() as i64;
        for q in q_lo..=q_hi {
            let Ok(cell) = CellId::from_axial(resolution, q, r) else {
                continue;
            };
            if cell_intersects(poly, cell) {
                out.insert(cell);
            }
        }
    }
    Ok(out)
}

/// Drops every cell whose hexagon touches any land polygon.
pub fn filter_land(cells: &BTreeSet<CellId>, land: &[ShiftedPolygon]) -> BTreeSet<CellId> {
    cells
        .iter()
        .copied()
        .filter(|&c| !land.iter().any(|l| cell_intersects(l, c)))
        .collect()
}

impl CorridorGrid {
    /// Full pipeline: shift, tile the corridor, mask land, link neighbours.
    pub fn build(corridor: &[Polygon], land: &[Polygon], resolution: u8) -> Result<(Self, GridSummary), GridError> {
        check_resolution(resolution)?;
        let mut candidates = BTreeSet::new();
        for poly in corridor {
            candidates.extend(polygon_to_cells(&normalize_longitudes(poly)?, resolution)?);
        }
        let land_shifted = land.iter().map(normalize_longitudes).collect::<Result<Vec<_>, _>>()?;
        let ocean = filter_land(&candidates, &land_shifted);
        let land_cells: BTreeSet<CellId> = candidates.difference(&ocean).copied().collect();
        let mut grid = Self::from_cells(resolution, ocean)?;
        grid.land_cells = land_cells;
        grid.bbox = corridor.to_vec();
        let summary = grid.summary();
        Ok((grid, summary))
    }

    /// Grid made of exactly these ocean cells, linked by lattice adjacency.
    pub fn from_cells(resolution: u8, ids: impl IntoIterator<Item = CellId>) -> Result<Self, GridError> {
        check_resolution(resolution)?;
        let ids: BTreeSet<CellId> = ids.into_iter().collect();
        if let Some(bad) = ids.iter().find(|c| c.resolution() != resolution) {
            return Err(GridError::InvalidCell(format!("{bad} is not at level {resolution}")));
        }
        let cells = ids
            .iter()
            .map(|&id| {
                let mut neighbors: Vec<CellId> = id.lattice_neighbors().into_iter().filter(|n| ids.contains(n)).collect();
                neighbors.sort();
                let cell = HexCell {
                    id,
                    centroid: id.centroid(),
                    neighbors,
                    is_ocean: true,
                };
                (id, cell)
            })
            .collect();
        Ok(Self {
            resolution,
            cells,
            land_cells: BTreeSet::new(),
            bbox: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, id: CellId) -> bool {
        self.cells.contains_key(&id)
    }

    pub fn get(&self, id: CellId) -> Option<&HexCell> {
        self.cells.get(&id)
    }

    /// Routable neighbours of a grid cell.
    pub fn neighbors(&self, id: CellId) -> Result<&[CellId], GridError> {
        self.cells
            .get(&id)
            .map(|c| c.neighbors.as_slice())
            .ok_or_else(|| GridError::InvalidCell(format!("{id} is not in the grid")))
    }

    /// Undirected adjacency as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(CellId, CellId)> {
        self.cells
            .values()
            .flat_map(|c| c.neighbors.iter().filter(move |&&n| c.id < n).map(move |&n| (c.id, n)))
            .collect()
    }

    pub fn summary(&self) -> GridSummary {
        GridSummary {
            candidate_cells: self.cells.len() + self.land_cells.len(),
            ocean_cells: self.cells.len(),
            land_cells: self.land_cells.len(),
            edges: self.edges().len(),
        }
    }

    /// Ocean cell with the closest centroid; ties go to the smaller id.
    pub fn nearest_cell(&self, p: GeoPoint) -> Option<(CellId, f64)> {
        self.cells
            .values()
            .map(|c| (c.id, haversine(p, c.centroid)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    /// Writes `cell_id,lat,lon,is_ocean,neighbor_ids` records, ocean cells
    /// first, then masked land cells.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "cell_id,lat,lon,is_ocean,neighbor_ids")?;
        for c in self.cells.values() {
            let ns: Vec<String> = c.neighbors.iter().map(CellId::to_string).collect();
            writeln!(w, "{},{},{},true,{}", c.id, c.centroid.lat, c.centroid.lon, ns.join(";"))?;
        }
        for id in &self.land_cells {
            let p = id.centroid();
            writeln!(w, "{},{},{},false,", id, p.lat, p.lon)?;
        }
        Ok(())
    }

    /// Reads a dump written by [`CorridorGrid::write_dump`].
    pub fn read_dump<R: BufRead>(r: R) -> Result<Self, GridError> {
        let mut ocean = Vec::new();
        let mut land = BTreeSet::new();
        let mut declared = BTreeMap::new();
        let mut resolution = None;
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| GridError::Dump(format!("line {}: {e}", n + 1)))?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(GridError::Dump(format!("line {}: expected 5 fields", n + 1)));
            }
            let id: CellId = fields[0].parse()?;
            resolution.get_or_insert(id.resolution());
            match fields[3] {
                "true" => {
                    let ns = fields[4]
                        .split(';')
                        .filter(|s| !s.is_empty())
                        .map(str::parse)
                        .collect::<Result<Vec<CellId>, _>>()?;
                    declared.insert(id, ns);
                    ocean.push(id);
                }
                "false" => {
                    land.insert(id);
                }
                other => return Err(GridError::Dump(format!("line {}: bad is_ocean {other:?}", n + 1))),
            }
        }
        let Some(resolution) = resolution else {
            return Ok(Self {
                resolution: lattice::MIN_RESOLUTION,
                cells: BTreeMap::new(),
                land_cells: land,
                bbox: Vec::new(),
            });
        };
        let mut grid = Self::from_cells(resolution, ocean)?;
        for (id, ns) in declared {
            if grid.cells[&id].neighbors != ns {
                return Err(GridError::Dump(format!("{id}: neighbour list disagrees with the lattice")));
            }
        }
        grid.land_cells = land;
        Ok(grid)
    }
}
