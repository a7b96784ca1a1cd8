//! Spherical geometry on a mean-radius Earth.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Mean Earth radius used by every distance in the crate.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} is not finite")]
    Longitude(f64),
}

/// A point on the sphere in degrees. Longitude is kept in `[-180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Builds a point, wrapping any finite longitude into `[-180, 180)`.
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !lon.is_finite() {
            return Err(GeoError::Longitude(lon));
        }
        Ok(Self {
            lat,
            lon: wrap_lon(lon),
        })
    }

    pub fn to_vec3(self) -> [f64; 3] {
        let (phi, lam) = (self.lat.to_radians(), self.lon.to_radians());
        [phi.cos() * lam.cos(), phi.cos() * lam.sin(), phi.sin()]
    }

    pub fn from_vec3(v: [f64; 3]) -> Self {
        let n = norm(v);
        let (x, y, z) = (v[0] / n, v[1] / n, v[2] / n);
        let lat = z.clamp(-1.0, 1.0).asin().to_degrees();
        let lon = if x.abs() < 1e-15 && y.abs() < 1e-15 {
            0.0
        } else {
            y.atan2(x).to_degrees()
        };
        Self {
            lat,
            lon: wrap_lon(lon),
        }
    }
}

/// Wraps a longitude into `[-180, 180)`.
pub fn wrap_lon(lon: f64) -> f64 {
    let w = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 180 for tiny negative inputs
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Longitude shift into `[0, 360)`: negative longitudes move up by 360.
pub fn shift_lon(lon: f64) -> f64 {
    if lon < 0.0 {
        lon + 360.0
    } else {
        lon
    }
}

/// Inverse of [`shift_lon`], back to `[-180, 180)`.
pub fn unshift_lon(lon: f64) -> f64 {
    if lon >= 180.0 {
        lon - 360.0
    } else {
        lon
    }
}

/// Great-circle distance in kilometres (haversine form).
pub fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = p2 - p1;
    let dlam = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlam / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Initial bearing from `a` towards `b`, radians clockwise from north in `(-pi, pi]`.
pub fn initial_bearing(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlam = (b.lon - a.lon).to_radians();
    let y = dlam.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dlam.cos();
    y.atan2(x)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Turning angle at `pivot` for the move `from -> pivot -> to`, in `[0, pi]`.
///
/// The arrival heading is the reverse of the bearing from the pivot back to
/// `from`, so both headings are measured at the pivot itself.
pub fn turn_angle(from: GeoPoint, pivot: GeoPoint, to: GeoPoint) -> f64 {
    let arrive = initial_bearing(pivot, from) + PI;
    let depart = initial_bearing(pivot, to);
    wrap_angle(depart - arrive).abs()
}

/// Spherical interpolation between `a` and `b` at fraction `t`.
pub fn interpolate(a: GeoPoint, b: GeoPoint, t: f64) -> GeoPoint {
    let (va, vb) = (a.to_vec3(), b.to_vec3());
    let omega = dot(va, vb).clamp(-1.0, 1.0).acos();
    if omega < 1e-12 {
        return a;
    }
    let s = omega.sin();
    let wa = ((1.0 - t) * omega).sin() / s;
    let wb = (t * omega).sin() / s;
    GeoPoint::from_vec3([
        wa * va[0] + wb * vb[0],
        wa * va[1] + wb * vb[1],
        wa * va[2] + wb * vb[2],
    ])
}

pub fn midpoint(a: GeoPoint, b: GeoPoint) -> GeoPoint {
    interpolate(a, b, 0.5)
}

/// Point reached from `start` after `dist_km` along initial bearing `bearing` (radians).
pub fn destination(start: GeoPoint, bearing: f64, dist_km: f64) -> GeoPoint {
    let d = dist_km / EARTH_RADIUS_KM;
    let p1 = start.lat.to_radians();
    let l1 = start.lon.to_radians();
    let p2 = (p1.sin() * d.cos() + p1.cos() * d.sin() * bearing.cos()).asin();
    let l2 = l1 + (bearing.sin() * d.sin() * p1.cos()).atan2(d.cos() - p1.sin() * p2.sin());
    GeoPoint {
        lat: p2.to_degrees(),
        lon: wrap_lon(l2.to_degrees()),
    }
}

/// Great circle through two distinct points, as a unit normal vector.
#[derive(Debug, Clone, Copy)]
pub struct GreatCircle {
    pub start: GeoPoint,
    pub end: GeoPoint,
    normal: [f64; 3],
}

impl GreatCircle {
    pub fn new(start: GeoPoint, end: GeoPoint) -> Self {
        let n = cross(start.to_vec3(), end.to_vec3());
        let len = norm(n);
        let normal = if len < 1e-15 {
            // coincident or antipodal: any circle through start will do
            let v = start.to_vec3();
            let helper = if v[2].abs() < 0.9 {
                [0.0, 0.0, 1.0]
            } else {
                [1.0, 0.0, 0.0]
            };
            let c = cross(v, helper);
            let l = norm(c);
            [c[0] / l, c[1] / l, c[2] / l]
        } else {
            [n[0] / len, n[1] / len, n[2] / len]
        };
        Self { start, end, normal }
    }

    /// Signed cross-track distance in km (positive to the left of travel).
    pub fn cross_track_km(&self, p: GeoPoint) -> f64 {
        EARTH_RADIUS_KM * dot(p.to_vec3(), self.normal).clamp(-1.0, 1.0).asin()
    }

    /// Closest point on the circle to `p`.
    pub fn nearest_point(&self, p: GeoPoint) -> GeoPoint {
        let v = p.to_vec3();
        let k = dot(v, self.normal);
        let proj = [
            v[0] - k * self.normal[0],
            v[1] - k * self.normal[1],
            v[2] - k * self.normal[2],
        ];
        if norm(proj) < 1e-12 {
            return self.start;
        }
        GeoPoint::from_vec3(proj)
    }

    /// Heading of travel along the circle (start towards end) at a point on it, radians.
    pub fn heading_at(&self, on_circle: GeoPoint) -> f64 {
        let p = on_circle.to_vec3();
        let t = cross(self.normal, p);
        let (phi, lam) = (on_circle.lat.to_radians(), on_circle.lon.to_radians());
        let east = [-lam.sin(), lam.cos(), 0.0];
        let north = [-phi.sin() * lam.cos(), -phi.sin() * lam.sin(), phi.cos()];
        dot(t, east).atan2(dot(t, north))
    }
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn haversine_fixed_values() {
        assert_eq!(haversine(p(12.0, 34.0), p(12.0, 34.0)), 0.0);
        assert_abs_diff_eq!(haversine(p(0.0, 0.0), p(0.0, 90.0)), 10007.543398010284, epsilon = 1e-6);
        // frozen from a standalone scalar implementation
        assert_abs_diff_eq!(haversine(p(89.0, 0.0), p(89.0, 180.0)), 222.38985328911858, epsilon = 1e-9);
        assert_abs_diff_eq!(haversine(p(70.0, 170.0), p(72.0, -175.0)), 584.8447285143235, epsilon = 1e-9);
    }

    #[test]
    fn lon_shift_round_trip() {
        assert_eq!(shift_lon(-170.0), 190.0);
        assert_eq!(shift_lon(10.0), 10.0);
        for x in [-179.9, -1.0, 0.0, 1.0, 179.9] {
            assert_abs_diff_eq!(unshift_lon(shift_lon(x)), x, epsilon = 1e-12);
        }
    }

    #[test]
    fn wrap_lon_canonical() {
        assert_eq!(wrap_lon(180.0), -180.0);
        assert_eq!(wrap_lon(190.0), -170.0);
        assert_eq!(wrap_lon(-180.0), -180.0);
        assert_eq!(wrap_lon(359.5), -0.5);
    }

    #[test]
    fn rejects_bad_latitude() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn turn_angles_on_equator() {
        let a = p(0.0, 0.0);
        let b = p(0.0, 1.0);
        assert_abs_diff_eq!(turn_angle(a, b, p(0.0, 2.0)), 0.0, epsilon = 1e-12);
        let c = destination(b, 30f64.to_radians(), 100.0);
        assert_abs_diff_eq!(turn_angle(a, b, c), 60f64.to_radians(), epsilon = 1e-9);
        assert_abs_diff_eq!(turn_angle(a, b, a), PI, epsilon = 1e-9);
    }

    #[test]
    fn cross_track_on_meridian() {
        let gc = GreatCircle::new(p(0.0, 0.0), p(10.0, 0.0));
        let off = p(5.0, 1.0);
        let xt = gc.cross_track_km(off);
        assert!(xt < 0.0, "east of a northbound track is to the right");
        assert_abs_diff_eq!(xt.abs(), haversine(off, gc.nearest_point(off)), epsilon = 1e-6);
        assert_abs_diff_eq!(gc.heading_at(p(5.0, 0.0)), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn interpolation_splits_distance() {
        let a = p(70.0, 170.0);
        let b = p(71.0, -170.0);
        let m = midpoint(a, b);
        assert_abs_diff_eq!(haversine(a, m), haversine(m, b), epsilon = 1e-6);
        assert_abs_diff_eq!(haversine(a, m) * 2.0, haversine(a, b), epsilon = 1e-6);
    }
}
