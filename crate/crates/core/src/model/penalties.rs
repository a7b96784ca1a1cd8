use serde::{Deserialize, Serialize};

use super::{EdgeKey, ModelError, Weights};
use crate::envdata::{Calibration, CellFeatures};
use crate::geo::{haversine, initial_bearing, midpoint, turn_angle, GeoPoint, GreatCircle};
use crate::hexgrid::CorridorGrid;

/// How side and lateral deviations from the start-goal axis are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationStrategy {
    /// Lateral: cross-track distance of the edge midpoint over the track length.
    /// Side: squared sine of the angle between edge and track headings.
    #[default]
    CrossTrack,
    /// Both deviations are zero.
    Off,
}

/// Great-circle reference track from start to goal.
#[derive(Debug, Clone, Copy)]
pub struct TrackAxis {
    pub circle: GreatCircle,
    pub length_km: f64,
    pub strategy: DeviationStrategy,
}

impl TrackAxis {
    pub fn new(start: GeoPoint, goal: GeoPoint, strategy: DeviationStrategy) -> Self {
        Self {
            circle: GreatCircle::new(start, goal),
            length_km: haversine(start, goal),
            strategy,
        }
    }

    /// `(side, lateral)` deviation of the edge between two centroids.
    pub fn deviations(&self, a: GeoPoint, b: GeoPoint) -> (f64, f64) {
        if self.strategy == DeviationStrategy::Off || self.length_km <= 0.0 {
            return (0.0, 0.0);
        }
        let m = midpoint(a, b);
        let lateral = self.circle.cross_track_km(m).abs() / self.length_km;
        let edge_heading = initial_bearing(m, b);
        let track_heading = self.circle.heading_at(self.circle.nearest_point(m));
        let side = (edge_heading - track_heading).sin().powi(2);
        (side, lateral)
    }
}

/// Dimensionless penalties of one edge.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairPenalties {
    pub p_thick: f64,
    pub p_age: f64,
    pub p_conc: f64,
    pub p_snow: f64,
    pub side: f64,
    pub lateral: f64,
    /// Faster endpoint drift speed in m/s; only used by the optional drift term.
    pub drift: f64,
}

fn ramp(value: f64, from: f64, to: f64) -> f64 {
    let span = to - from;
    if span <= 0.0 || !span.is_finite() {
        return 0.0;
    }
    ((value - from) / span).clamp(0.0, 1.0)
}

fn worst(a: Option<f64>, b: Option<f64>, pick: fn(f64, f64) -> f64) -> Option<f64> {
    Some(pick(a?, b?))
}

/// Worst-case penalties for the edge joining two cells. A missing endpoint,
/// or a field missing at either endpoint, counts as maximal risk.
pub fn pair_penalties(
    fi: Option<&CellFeatures>,
    fj: Option<&CellFeatures>,
    cal: &Calibration,
    axis: &TrackAxis,
    ends: (GeoPoint, GeoPoint),
) -> PairPenalties {
    let (side, lateral) = axis.deviations(ends.0, ends.1);
    let (Some(fi), Some(fj)) = (fi, fj) else {
        return PairPenalties {
            p_thick: 1.0,
            p_age: 1.0,
            p_conc: 1.0,
            p_snow: 1.0,
            side,
            lateral,
            drift: 0.0,
        };
    };
    let thick = worst(fi.thickness(), fj.thickness(), f64::max);
    let age = worst(fi.age(), fj.age(), f64::max);
    let conc = worst(fi.concentration(), fj.concentration(), f64::min);
    let snow = worst(fi.snow(), fj.snow(), f64::max);
    let drift = [fi.drift_speed(), fj.drift_speed()].into_iter().flatten().fold(0.0, f64::max);
    PairPenalties {
        p_thick: thick.map_or(1.0, |t| ramp(t, cal.warn_thick, cal.thick_max)),
        p_age: age.map_or(1.0, |a| ramp(a, cal.warn_age, cal.age_max)),
        // low concentration is the hazard direction
        p_conc: conc.map_or(1.0, |c| ramp(-c, -cal.warn_conc, -cal.conc_min)),
        p_snow: snow.map_or(1.0, |d| ramp(d, cal.warn_snow, cal.snow_max)),
        side,
        lateral,
        drift,
    }
}

pub fn edge_cost(pp: &PairPenalties, w: &Weights) -> f64 {
    let env = w.w_thick * pp.p_thick + w.w_age * pp.p_age + w.w_conc * pp.p_conc + w.w_snow * pp.p_snow;
    w.k_safety * env + w.w_side * pp.side + w.w_lat * pp.lateral + w.w_drift * pp.drift + w.h
}

/// `w_turn * (1 - cos theta)` for the move `from -> pivot -> to`.
pub fn turn_weight(from: GeoPoint, pivot: GeoPoint, to: GeoPoint, w_turn: f64) -> f64 {
    w_turn * (1.0 - turn_angle(from, pivot, to).cos())
}

pub fn turn_penalty(e1: &EdgeKey, e2: &EdgeKey, grid: &CorridorGrid, w: &Weights) -> Result<f64, ModelError> {
    let pivot = e1.pivot(e2).ok_or(ModelError::NotAdjacentEdges(*e1, *e2))?;
    let centroid = |id| grid.get(id).map(|c| c.centroid).ok_or(ModelError::NotInGrid(id));
    Ok(turn_weight(
        centroid(e1.other(pivot))?,
        centroid(pivot)?,
        centroid(e2.other(pivot))?,
        w.w_turn,
    ))
}

/// Soft degree penalty for a vertex of degree `k` with target `d`:
/// `k (k - d)^2 / d`. Zero at `k = 0` and `k = d`, positive otherwise.
pub fn degree_penalty(k: u32, d: u32) -> f64 {
    let (k, d) = (k as f64, d as f64);
    k * (k - d).powi(2) / d
}
