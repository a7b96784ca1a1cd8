//! Axial hexagon lattice laid over a north-polar Lambert azimuthal equal-area
//! projection.
//!
//! Because the projection preserves area, every hexagon covers exactly the
//! nominal area on the sphere; only shape distorts away from the pole. The
//! lattice is continuous across the antimeridian by construction.
//!
//! Nominal mean cell areas (km², spherical, R = 6371 km), a factor of 7 per
//! level:
//!
//! | level | area      |
//! |-------|-----------|
//! | 3     | 12 392.27 |
//! | 4     | 1 770.32  |
//! | 5     | 252.9034  |
//! | 6     | 36.1291   |
//! | 7     | 5.1613    |
//! | 8     | 0.7373    |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GridError;
use crate::geo::{wrap_lon, GeoPoint, EARTH_RADIUS_KM};

pub const MIN_RESOLUTION: u8 = 3;
pub const MAX_RESOLUTION: u8 = 8;

/// Cell area at level 5; other levels scale by powers of 7.
pub const LEVEL5_AREA_KM2: f64 = 252.9034;

const COORD_BITS: u32 = 30;
const COORD_MASK: u64 = (1 << COORD_BITS) - 1;
const SIGN_BIT: i64 = 1 << (COORD_BITS - 1);

/// Nominal area of one cell at `resolution`, km².
pub fn cell_area_km2(resolution: u8) -> f64 {
    LEVEL5_AREA_KM2 * 7f64.powi(5 - resolution as i32)
}

/// Hexagon circumradius in the projected plane, km.
pub fn cell_radius_km(resolution: u8) -> f64 {
    (2.0 * cell_area_km2(resolution) / (3.0 * 3f64.sqrt())).sqrt()
}

/// Centre-to-centre spacing between neighbouring cells, km.
pub fn cell_pitch_km(resolution: u8) -> f64 {
    3f64.sqrt() * cell_radius_km(resolution)
}

pub fn check_resolution(resolution: u8) -> Result<(), GridError> {
    if (MIN_RESOLUTION..=MAX_RESOLUTION).contains(&resolution) {
        Ok(())
    } else {
        Err(GridError::Resolution(resolution))
    }
}

/// Opaque 64-bit cell index: 4 bits of resolution, then axial `q` and `r`
/// as 30-bit two's complement integers.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct CellId(u64);

impl CellId {
    pub fn from_axial(resolution: u8, q: i64, r: i64) -> Result<Self, GridError> {
        check_resolution(resolution)?;
        let lim = SIGN_BIT;
        if !(-lim..lim).contains(&q) || !(-lim..lim).contains(&r) {
            return Err(GridError::InvalidCell(format!("axial ({q}, {r}) out of range")));
        }
        let id = ((resolution as u64) << 60) | (((q as u64) & COORD_MASK) << COORD_BITS) | ((r as u64) & COORD_MASK);
        let cell = Self(id);
        cell.validate()?;
        Ok(cell)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn from_raw(raw: u64) -> Result<Self, GridError> {
        let cell = Self(raw);
        cell.validate()?;
        Ok(cell)
    }

    pub fn resolution(self) -> u8 {
        (self.0 >> 60) as u8
    }

    pub fn axial(self) -> (i64, i64) {
        let unpack = |v: u64| {
            let v = (v & COORD_MASK) as i64;
            if v & SIGN_BIT != 0 {
                v - (1 << COORD_BITS)
            } else {
                v
            }
        };
        (unpack(self.0 >> COORD_BITS), unpack(self.0))
    }

    fn validate(self) -> Result<(), GridError> {
        let res = self.resolution();
        if check_resolution(res).is_err() || (self.0 >> 60) >> 4 != 0 {
            return Err(GridError::InvalidCell(format!("{self}: bad resolution {res}")));
        }
        let (x, y) = axial_to_plane(res, self.axial());
        // the projection covers the sphere up to (excluding) the south pole
        if (x * x + y * y).sqrt() >= 2.0 * EARTH_RADIUS_KM - cell_radius_km(res) {
            return Err(GridError::InvalidCell(format!("{self}: outside the projected domain")));
        }
        Ok(())
    }

    pub fn centroid(self) -> GeoPoint {
        let (x, y) = axial_to_plane(self.resolution(), self.axial());
        unproject(x, y)
    }

    /// All six lattice neighbours that are valid cells.
    pub fn lattice_neighbors(self) -> Vec<CellId> {
        let (q, r) = self.axial();
        AXIAL_DIRECTIONS
            .iter()
            .filter_map(|&(dq, dr)| CellId::from_axial(self.resolution(), q + dq, r + dr).ok())
            .collect()
    }

    /// Lattice step count between two cells of the same resolution.
    pub fn hex_distance(self, other: CellId) -> Option<u64> {
        if self.resolution() != other.resolution() {
            return None;
        }
        let (q1, r1) = self.axial();
        let (q2, r2) = other.axial();
        let (dq, dr) = (q1 - q2, r1 - r2);
        Some(((dq.abs() + dr.abs() + (dq + dr).abs()) / 2) as u64)
    }

    pub fn is_neighbor(self, other: CellId) -> bool {
        self.hex_distance(other) == Some(1)
    }

    /// Hexagon boundary as a closed ring of points, each edge subdivided
    /// `subdivisions` times in the projected plane.
    pub fn boundary(self, subdivisions: usize) -> Vec<GeoPoint> {
        let res = self.resolution();
        let (cx, cy) = axial_to_plane(res, self.axial());
        let rad = cell_radius_km(res);
        let corner = |k: usize| {
            let a = (30.0 + 60.0 * k as f64).to_radians();
            (cx + rad * a.cos(), cy + rad * a.sin())
        };
        let n = subdivisions.max(1);
        let mut out = Vec::with_capacity(6 * n + 1);
        for k in 0..6 {
            let (a, b) = (corner(k), corner(k + 1));
            for s in 0..n {
                let t = s as f64 / n as f64;
                out.push(unproject(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
            }
        }
        out.push(out[0]);
        out
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl fmt::Debug for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CellId({self})")
    }
}

impl FromStr for CellId {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = u64::from_str_radix(s.trim(), 16).map_err(|_| GridError::InvalidCell(format!("not a cell id: {s:?}")))?;
        CellId::from_raw(raw)
    }
}

impl From<CellId> for String {
    fn from(c: CellId) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for CellId {
    type Error = GridError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

pub(crate) const AXIAL_DIRECTIONS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];

/// North-polar Lambert azimuthal equal-area projection, km.
pub fn project(p: GeoPoint) -> (f64, f64) {
    let colat = (90.0 - p.lat).to_radians();
    let rho = 2.0 * EARTH_RADIUS_KM * (colat / 2.0).sin();
    let lam = p.lon.to_radians();
    (rho * lam.sin(), -rho * lam.cos())
}

pub fn unproject(x: f64, y: f64) -> GeoPoint {
    let rho = (x * x + y * y).sqrt();
    let colat = 2.0 * (rho / (2.0 * EARTH_RADIUS_KM)).clamp(-1.0, 1.0).asin();
    let lon = if rho < 1e-12 { 0.0 } else { x.atan2(-y).to_degrees() };
    GeoPoint {
        lat: 90.0 - colat.to_degrees(),
        lon: wrap_lon(lon),
    }
}

pub(crate) fn axial_to_plane(resolution: u8, (q, r): (i64, i64)) -> (f64, f64) {
    let size = cell_radius_km(resolution);
    let (q, r) = (q as f64, r as f64);
    (size * 3f64.sqrt() * (q + r / 2.0), size * 1.5 * r)
}

/// Axial coordinates of the hexagon containing a projected point.
pub(crate) fn plane_to_axial(resolution: u8, x: f64, y: f64) -> (i64, i64) {
    let size = cell_radius_km(resolution);
    let qf = (3f64.sqrt() / 3.0 * x - y / 3.0) / size;
    let rf = (2.0 / 3.0 * y) / size;
    cube_round(qf, rf)
}

fn cube_round(qf: f64, rf: f64) -> (i64, i64) {
    let sf = -qf - rf;
    let (mut q, mut r, s) = (qf.round(), rf.round(), sf.round());
    let (dq, dr, ds) = ((q - qf).abs(), (r - rf).abs(), (s - sf).abs());
    if dq > dr && dq > ds {
        q = -r - s;
    } else if dr > ds {
        r = -q - s;
    }
    (q as i64, r as i64)
}

/// Cell containing a point.
pub fn cell_at(p: GeoPoint, resolution: u8) -> Result<CellId, GridError> {
    check_resolution(resolution)?;
    let (x, y) = project(p);
    let (q, r) = plane_to_axial(resolution, x, y);
    CellId::from_axial(resolution, q, r)
}
