//! Inscribed polygons in a branch-limit circle.
//!
//! A branch with apparent-power rating `s` admits every flow point `(p, q)`
//! with `p² + q² ≤ s²`. The functions here relate the chord of a polygon side
//! to the arc it cuts off, and build the two inner approximations used by the
//! rest of the crate:
//!
//! * the regular polygon, where every side subtends the same angle and has
//!   the same sagitta;
//! * the irregular polygon, whose right-half vertices sit at equally spaced
//!   `q` values. Its sides are shortest (smallest error) next to the P axis
//!   and longest next to the Q axis.
//!
//! Points use `p` as the horizontal coordinate and `q` as the vertical one.
//! Vertex lists run anticlockwise from `(0, +s)`; side `k` (1-indexed) joins
//! vertex `k` to vertex `k + 1`, wrapping at the end.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack applied before rounding side counts up, so that exact divisors of
/// the circle are not bumped to the next integer by rounding noise.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("branch rating must be positive and finite, got {0}")]
    InvalidRating(f64),
    #[error("error {e} MVA must lie in (0, {s}) MVA: error exceeds radius")]
    ErrorExceedsRadius { e: f64, s: f64 },
    #[error("error must be positive, got {0}")]
    NonPositiveError(f64),
    #[error("chord length {length} outside (0, {diameter}]: chord cannot exceed diameter")]
    ChordOutOfRange { length: f64, diameter: f64 },
    #[error("arc angle {0} rad outside (0, pi]")]
    AngleOutOfRange(f64),
    #[error("sides per quadrant must be at least 1, got {0}")]
    InvalidQuadrantCount(usize),
}

/// The thermal limit of one branch: a circle of radius `s` (MVA) in the P-Q plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleLimit {
    s: f64,
    index: usize,
}

impl CircleLimit {
    pub fn new(s: f64, index: usize) -> Result<Self, GeomError> {
        if !(s.is_finite() && s > 0.0) {
            return Err(GeomError::InvalidRating(s));
        }
        Ok(Self { s, index })
    }

    /// Rating in MVA.
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Opaque identifier of the branch this limit belongs to.
    pub fn index(&self) -> usize {
        self.index
    }

    fn check_error_open(&self, e: f64) -> Result<(), GeomError> {
        if e.is_nan() || e <= 0.0 {
            return Err(GeomError::NonPositiveError(e));
        }
        if e >= self.s {
            return Err(GeomError::ErrorExceedsRadius { e, s: self.s });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub p: f64,
    pub q: f64,
}

impl Point {
    pub fn new(p: f64, q: f64) -> Self {
        Self { p, q }
    }

    fn on_circle(s: f64, angle: f64) -> Self {
        Self::new(s * angle.cos(), s * angle.sin())
    }

    pub fn norm(&self) -> f64 {
        self.p.hypot(self.q)
    }
}

/// One polygon side described by the arc it replaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChordSpec {
    /// Angle subtended at the centre, in (0, pi].
    pub delta_theta: f64,
    /// Chord length, MVA.
    pub length: f64,
    /// Largest distance between chord and arc, MVA.
    pub sagitta: f64,
}

impl ChordSpec {
    fn from_angle(limit: &CircleLimit, delta_theta: f64) -> Self {
        let s = limit.s;
        Self {
            delta_theta,
            length: 2.0 * s * (delta_theta / 2.0).sin(),
            sagitta: 2.0 * s * (delta_theta / 4.0).sin().powi(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolygonKind {
    Regular,
    Irregular,
}

impl fmt::Display for PolygonKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolygonKind::Regular => "regular",
            PolygonKind::Irregular => "irregular",
        })
    }
}

impl FromStr for PolygonKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "regular" | "reg" => Ok(PolygonKind::Regular),
            "irregular" | "irr" => Ok(PolygonKind::Irregular),
            other => Err(format!(
                "unknown polygon kind `{other}` (expected regular or irregular)"
            )),
        }
    }
}

/// An inscribed polygon together with per-side chord data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub limit: CircleLimit,
    pub kind: PolygonKind,
    pub vertices: Vec<Point>,
    pub sides: Vec<ChordSpec>,
    /// Sides per quadrant; only set for irregular polygons.
    pub mq: Option<usize>,
}

impl Polygon {
    /// Total side count (equal to the vertex count).
    pub fn m(&self) -> usize {
        self.vertices.len()
    }

    /// Directed edges `(v_k, v_{k+1})` in side order.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n]))
    }

    /// Largest per-side sagitta.
    pub fn max_sagitta(&self) -> f64 {
        self.sides.iter().map(|c| c.sagitta).fold(0.0, f64::max)
    }

    /// Smallest per-side sagitta.
    pub fn min_sagitta(&self) -> f64 {
        self.sides.iter().map(|c| c.sagitta).fold(f64::INFINITY, f64::min)
    }
}

fn check_angle(delta_theta: f64) -> Result<(), GeomError> {
    if delta_theta > 0.0 && delta_theta <= PI {
        Ok(())
    } else {
        Err(GeomError::AngleOutOfRange(delta_theta))
    }
}

fn ceil_with_slack(x: f64) -> usize {
    (x - CEIL_SLACK).ceil().max(1.0) as usize
}

/// Sagitta of a chord of the given length: `s - sqrt(s² - (L/2)²)`.
pub fn sagitta(limit: &CircleLimit, chord_length: f64) -> Result<f64, GeomError> {
    let s = limit.s;
    if !(chord_length > 0.0 && chord_length <= 2.0 * s) {
        return Err(GeomError::ChordOutOfRange {
            length: chord_length,
            diameter: 2.0 * s,
        });
    }
    let half = chord_length / 2.0;
    // (s - h)(s + h) keeps precision for chords close to the diameter.
    Ok(s - ((s - half) * (s + half)).max(0.0).sqrt())
}

/// Chord length for an arc angle: `sqrt(2)·s·sqrt(1 - cos Δθ)`.
pub fn chord_from_angle(limit: &CircleLimit, delta_theta: f64) -> Result<f64, GeomError> {
    check_angle(delta_theta)?;
    Ok(2f64.sqrt() * limit.s * (1.0 - delta_theta.cos()).sqrt())
}

/// Arc angle whose chord has sagitta `e`: `acos(2(1 - e/s)² - 1)`.
pub fn angle_from_error(limit: &CircleLimit, e: f64) -> Result<f64, GeomError> {
    if e.is_nan() || e <= 0.0 {
        return Err(GeomError::NonPositiveError(e));
    }
    if e > limit.s {
        return Err(GeomError::ErrorExceedsRadius { e, s: limit.s });
    }
    let r = 1.0 - e / limit.s;
    Ok((2.0 * r * r - 1.0).clamp(-1.0, 1.0).acos())
}

/// Sagitta of the chord spanning `delta_theta`: `2·s·sin²(Δθ/4)`.
pub fn error_from_angle(limit: &CircleLimit, delta_theta: f64) -> Result<f64, GeomError> {
    check_angle(delta_theta)?;
    Ok(2.0 * limit.s * (delta_theta / 4.0).sin().powi(2))
}

/// Number of equal sides needed so that no side errs by more than `e_max`.
pub fn regular_side_count(limit: &CircleLimit, e_max: f64) -> Result<usize, GeomError> {
    limit.check_error_open(e_max)?;
    let dtheta = angle_from_error(limit, e_max)?;
    Ok(ceil_with_slack(TAU / dtheta).max(3))
}

/// Sides per quadrant of the irregular polygon for a requested minimum error.
///
/// The requested angle gives a spacing `ΔQ = s·sin(Δθ_min)` along the Q axis;
/// the quadrant `[0, s]` is then covered by `ceil(s / ΔQ)` equal steps. Angles
/// beyond a quarter turn cannot widen a quadrant's single side, so the spacing
/// saturates at `s`.
pub fn irregular_quadrant_count(limit: &CircleLimit, e_min: f64) -> Result<usize, GeomError> {
    limit.check_error_open(e_min)?;
    let dtheta = angle_from_error(limit, e_min)?.min(FRAC_PI_2);
    let dq = limit.s * dtheta.sin();
    Ok(ceil_with_slack(limit.s / dq))
}

/// Regular polygon with vertices at angles `2πk/m` anticlockwise from `+Q`.
pub fn build_regular(limit: &CircleLimit, e_max: f64) -> Result<Polygon, GeomError> {
    let m = regular_side_count(limit, e_max)?;
    let step = TAU / m as f64;
    let vertices = (0..m)
        .map(|k| Point::on_circle(limit.s, FRAC_PI_2 + step * k as f64))
        .collect();
    let side = ChordSpec::from_angle(limit, step);
    Ok(Polygon {
        limit: *limit,
        kind: PolygonKind::Regular,
        vertices,
        sides: vec![side; m],
        mq: None,
    })
}

/// Irregular polygon for a requested minimum per-side error.
pub fn build_irregular(limit: &CircleLimit, e_min: f64) -> Result<Polygon, GeomError> {
    let mq = irregular_quadrant_count(limit, e_min)?;
    build_irregular_with_mq(limit, mq)
}

/// Irregular polygon with an explicit number of sides per quadrant.
///
/// Right-half vertices are `(sqrt(s² - q_k²), q_k)` with
/// `q_k = s·(k - mq)/mq`, `k = 0..=2mq`; the left half mirrors them.
pub fn build_irregular_with_mq(limit: &CircleLimit, mq: usize) -> Result<Polygon, GeomError> {
    if mq == 0 {
        return Err(GeomError::InvalidQuadrantCount(mq));
    }
    let s = limit.s;
    // Right half from (0, -s) up to (0, +s); integer offsets keep q exactly antisymmetric.
    let right: Vec<Point> = (0..=2 * mq)
        .map(|k| {
            let q = s * ((k as f64 - mq as f64) / mq as f64);
            Point::new(((s - q) * (s + q)).max(0.0).sqrt(), q)
        })
        .collect();

    let mut vertices = Vec::with_capacity(4 * mq);
    // (0, +s) then down the left half, excluding (0, -s) ...
    vertices.extend(right[1..].iter().rev().map(|v| Point::new(-v.p, v.q)));
    // ... then up the right half from (0, -s), excluding (0, +s).
    vertices.extend(right[..2 * mq].iter().copied());
    vertices[0] = Point::new(0.0, s);

    let angles: Vec<f64> = vertices.iter().map(|v| v.q.atan2(v.p)).collect();
    let n = vertices.len();
    let sides = (0..n)
        .map(|k| {
            let d = (angles[(k + 1) % n] - angles[k]).rem_euclid(TAU);
            ChordSpec::from_angle(limit, d)
        })
        .collect();

    Ok(Polygon {
        limit: *limit,
        kind: PolygonKind::Irregular,
        vertices,
        sides,
        mq: Some(mq),
    })
}

/// Build either polygon kind for an error target.
pub fn build(limit: &CircleLimit, e: f64, kind: PolygonKind) -> Result<Polygon, GeomError> {
    match kind {
        PolygonKind::Regular => build_regular(limit, e),
        PolygonKind::Irregular => build_irregular(limit, e),
    }
}

/// Side count of either polygon kind without building vertices.
pub fn side_count(limit: &CircleLimit, e: f64, kind: PolygonKind) -> Result<usize, GeomError> {
    match kind {
        PolygonKind::Regular => regular_side_count(limit, e),
        PolygonKind::Irregular => Ok(4 * irregular_quadrant_count(limit, e)?),
    }
}

/// Diagnostics of the side adjacent to the Q axis, the widest of the irregular polygon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstSegmentStats {
    pub delta_theta_1: f64,
    pub l_fg: f64,
    pub e_1: f64,
}

pub fn first_segment_stats(limit: &CircleLimit, mq: usize) -> Result<FirstSegmentStats, GeomError> {
    if mq == 0 {
        return Err(GeomError::InvalidQuadrantCount(mq));
    }
    let s = limit.s;
    let delta_theta_1 = (1.0 - 1.0 / mq as f64).acos();
    Ok(FirstSegmentStats {
        delta_theta_1,
        l_fg: s * (2.0 / mq as f64).sqrt(),
        e_1: 2.0 * s * (delta_theta_1 / 4.0).sin().powi(2),
    })
}

/// A single chord centred on a known operating direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HotStartChord {
    /// Direction of the chord midpoint, measured anticlockwise from `+P`, in [0, 2π).
    pub theta: f64,
    pub chord: ChordSpec,
    pub start: Point,
    pub end: Point,
}

/// Chord with sagitta `e` whose midpoint lies in direction `theta` (radians from `+P`).
pub fn linearize_at_angle(limit: &CircleLimit, theta: f64, e: f64) -> Result<HotStartChord, GeomError> {
    if e.is_nan() || e <= 0.0 {
        return Err(GeomError::NonPositiveError(e));
    }
    if e > limit.s {
        return Err(GeomError::ErrorExceedsRadius { e, s: limit.s });
    }
    let theta = theta.rem_euclid(TAU);
    let dtheta = angle_from_error(limit, e)?;
    let length = chord_from_angle(limit, dtheta)?;
    Ok(HotStartChord {
        theta,
        chord: ChordSpec {
            delta_theta: dtheta,
            length,
            sagitta: error_from_angle(limit, dtheta)?,
        },
        start: Point::on_circle(limit.s, theta - dtheta / 2.0),
        end: Point::on_circle(limit.s, theta + dtheta / 2.0),
    })
}
