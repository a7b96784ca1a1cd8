//! Lon/lat polygons and the longitude-shift sandwich used around the antimeridian.
//!
//! Polygon edges are straight lines in longitude/latitude space, as in GeoJSON.
//! All containment and intersection tests run on [`ShiftedPolygon`], whose
//! longitudes live in `[0, 360)` so that a corridor straddling 180° is one
//! contiguous shape.

use serde_json::Value;

use super::GridError;
use crate::geo::{shift_lon, unshift_lon, GeoPoint};

/// Polygon in canonical coordinates. The first ring is the outer boundary,
/// the rest are holes. Every ring is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub rings: Vec<Vec<GeoPoint>>,
}

impl Polygon {
    /// Closes open rings and rejects rings with fewer than three distinct vertices.
    pub fn new(rings: Vec<Vec<GeoPoint>>) -> Result<Self, GridError> {
        if rings.is_empty() {
            return Err(GridError::MalformedPolygon("no rings".into()));
        }
        let mut closed = Vec::with_capacity(rings.len());
        for (k, mut ring) in rings.into_iter().enumerate() {
            if ring.first() != ring.last() {
                if let Some(&first) = ring.first() {
                    ring.push(first);
                }
            }
            if ring.len() < 4 {
                return Err(GridError::MalformedPolygon(format!(
                    "ring {k} has {} distinct vertices, need at least 3",
                    ring.len().saturating_sub(1)
                )));
            }
            closed.push(ring);
        }
        Ok(Self { rings: closed })
    }

    /// Axis-aligned lon/lat rectangle, corners given as (lat, lon).
    pub fn rectangle(south: f64, west: f64, north: f64, east: f64) -> Result<Self, GridError> {
        let pt = |lat, lon| GeoPoint::new(lat, lon).map_err(|e| GridError::MalformedPolygon(e.to_string()));
        // walk the rectangle in shifted space so east < west means "crosses 180"
        let (w, mut e) = (shift_lon(west), shift_lon(east));
        if e <= w {
            e += 360.0;
        }
        let mid = (w + e) / 2.0;
        Self::new(vec![vec![
            pt(south, west)?,
            pt(south, unshift_lon(mid % 360.0))?,
            pt(south, east)?,
            pt(north, east)?,
            pt(north, unshift_lon(mid % 360.0))?,
            pt(north, west)?,
        ]])
    }
}

/// A polygon whose longitudes have been shifted into `[0, 360)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedPolygon {
    /// Rings of `(lon, lat)` pairs, outer ring counter-clockwise, holes clockwise.
    pub rings: Vec<Vec<(f64, f64)>>,
    bbox: [f64; 4],
}

/// Applies the longitude shift to every vertex and fixes ring winding.
pub fn normalize_longitudes(poly: &Polygon) -> Result<ShiftedPolygon, GridError> {
    let mut rings = Vec::with_capacity(poly.rings.len());
    for (k, ring) in poly.rings.iter().enumerate() {
        let distinct = if ring.first() == ring.last() {
            ring.len().saturating_sub(1)
        } else {
            ring.len()
        };
        if distinct < 3 {
            return Err(GridError::MalformedPolygon(format!(
                "ring {k} has {distinct} vertices, need at least 3"
            )));
        }
        let mut pts: Vec<(f64, f64)> = ring.iter().map(|p| (shift_lon(p.lon), p.lat)).collect();
        if pts.first() != pts.last() {
            pts.push(pts[0]);
        }
        let ccw = signed_area(&pts) > 0.0;
        if (k == 0) != ccw {
            pts.reverse();
        }
        rings.push(pts);
    }
    Ok(ShiftedPolygon::from_rings(rings))
}

impl ShiftedPolygon {
    fn from_rings(rings: Vec<Vec<(f64, f64)>>) -> Self {
        let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for &(x, y) in rings.iter().flatten() {
            bbox[0] = bbox[0].min(x);
            bbox[1] = bbox[1].min(y);
            bbox[2] = bbox[2].max(x);
            bbox[3] = bbox[3].max(y);
        }
        Self { rings, bbox }
    }

    /// `[min_lon, min_lat, max_lon, max_lat]` in shifted space.
    pub fn bbox(&self) -> [f64; 4] {
        self.bbox
    }

    /// Inverse shift back to canonical longitudes.
    pub fn denormalize(&self) -> Polygon {
        Polygon {
            rings: self
                .rings
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|&(x, y)| GeoPoint {
                            lat: y,
                            lon: unshift_lon(x),
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Even-odd containment over all rings.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        if x < self.bbox[0] || x > self.bbox[2] || y < self.bbox[1] || y > self.bbox[3] {
            return false;
        }
        self.rings.iter().filter(|r| ring_contains(r, x, y)).count() % 2 == 1
    }

    /// True when the closed ring `other` (in the same shifted space) overlaps this
    /// polygon: shared area or any boundary contact.
    pub fn intersects_ring(&self, other: &[(f64, f64)]) -> bool {
        let ob = ring_bbox(other);
        if ob[2] < self.bbox[0] || ob[0] > self.bbox[2] || ob[3] < self.bbox[1] || ob[1] > self.bbox[3] {
            return false;
        }
        if other.iter().any(|&(x, y)| self.contains(x, y)) {
            return true;
        }
        for ring in &self.rings {
            if ring.iter().any(|&(x, y)| ring_contains(other, x, y)) {
                return true;
            }
            for a in ring.windows(2) {
                let sb = [a[0].0.min(a[1].0), a[0].1.min(a[1].1), a[0].0.max(a[1].0), a[0].1.max(a[1].1)];
                if sb[2] < ob[0] || sb[0] > ob[2] || sb[3] < ob[1] || sb[1] > ob[3] {
                    continue;
                }
                for b in other.windows(2) {
                    if segments_intersect(a[0], a[1], b[0], b[1]) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

pub(crate) fn ring_bbox(ring: &[(f64, f64)]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for &(x, y) in ring {
        b[0] = b[0].min(x);
        b[1] = b[1].min(y);
        b[2] = b[2].max(x);
        b[3] = b[3].max(y);
    }
    b
}

/// Shoelace area, positive for counter-clockwise rings.
pub(crate) fn signed_area(ring: &[(f64, f64)]) -> f64 {
    ring.windows(2)
        .map(|w| w[0].0 * w[1].1 - w[1].0 * w[0].1)
        .sum::<f64>()
        / 2.0
}

pub(crate) fn ring_contains(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let ((x1, y1), (x2, y2)) = (w[0], w[1]);
        if (y1 > y) != (y2 > y) {
            let xi = x1 + (y - y1) / (y2 - y1) * (x2 - x1);
            if x < xi {
                inside = !inside;
            }
        }
    }
    inside
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed-segment intersection, touching endpoints included.
pub(crate) fn segments_intersect(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Reads every Polygon / MultiPolygon in a GeoJSON document (bare geometry,
/// Feature, FeatureCollection or GeometryCollection).
pub fn polygons_from_geojson(text: &str) -> Result<Vec<Polygon>, GridError> {
    let value: Value = serde_json::from_str(text).map_err(|e| GridError::GeoJson(e.to_string()))?;
    let mut out = Vec::new();
    collect_polygons(&value, &mut out)?;
    Ok(out)
}

fn collect_polygons(v: &Value, out: &mut Vec<Polygon>) -> Result<(), GridError> {
    let kind = v.get("type").and_then(Value::as_str).unwrap_or_default();
    match kind {
        "FeatureCollection" => {
            for f in v.get("features").and_then(Value::as_array).into_iter().flatten() {
                collect_polygons(f, out)?;
            }
        }
        "Feature" => {
            if let Some(g) = v.get("geometry").filter(|g| !g.is_null()) {
                collect_polygons(g, out)?;
            }
        }
        "GeometryCollection" => {
            for g in v.get("geometries").and_then(Value::as_array).into_iter().flatten() {
                collect_polygons(g, out)?;
            }
        }
        "Polygon" => out.push(parse_rings(coords(v)?)?),
        "MultiPolygon" => {
            for poly in coords(v)?.as_array().into_iter().flatten() {
                out.push(parse_rings(poly)?);
            }
        }
        "" => return Err(GridError::GeoJson("object without a type".into())),
        _ => {}
    }
    Ok(())
}

fn coords(v: &Value) -> Result<&Value, GridError> {
    v.get("coordinates")
        .ok_or_else(|| GridError::GeoJson("geometry without coordinates".into()))
}

fn parse_rings(v: &Value) -> Result<Polygon, GridError> {
    let bad = || GridError::GeoJson("polygon coordinates must be [[[lon, lat], ...], ...]".into());
    let mut rings = Vec::new();
    for ring in v.as_array().ok_or_else(bad)? {
        let mut pts = Vec::new();
        for pos in ring.as_array().ok_or_else(bad)? {
            let pos = pos.as_array().ok_or_else(bad)?;
            let lon = pos.first().and_then(Value::as_f64).ok_or_else(bad)?;
            let lat = pos.get(1).and_then(Value::as_f64).ok_or_else(bad)?;
            let p = GeoPoint::new(lat, lon).map_err(|e| GridError::GeoJson(e.to_string()))?;
            pts.push(p);
        }
        rings.push(pts);
    }
    Polygon::new(rings)
}
