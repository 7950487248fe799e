//! Linear constraint sets generated from inscribed polygons.
//!
//! Each polygon side becomes one inequality `a·P + b·Q + c ≥ 0` with a unit
//! normal `(a, b)` pointing into the polygon. `c` is then the distance from
//! the origin to the side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{round_sig, sig12};
use crate::polygeom::{self, CircleLimit, GeomError, Point, Polygon, PolygonKind};

/// Sides whose offset is below this fraction of `s` pass through the centre.
const DIAMETER_TOL: f64 = 1e-12;
/// Membership slack, relative to `s`.
const CONTAINS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error("side endpoints coincide at ({p}, {q})")]
    DegenerateSide { p: f64, q: f64 },
    #[error("branch {branch}: {source}")]
    Branch {
        branch: usize,
        #[source]
        source: GeomError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HalfPlane {
    /// Signed slack `a·p + b·q + c`; non-negative inside.
    pub fn eval(&self, p: f64, q: f64) -> f64 {
        self.a * p + self.b * q + self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub branch: usize,
    pub limit: CircleLimit,
    pub halfplanes: Vec<HalfPlane>,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.halfplanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.halfplanes.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = ConstraintRecord> + '_ {
        self.halfplanes.iter().enumerate().map(|(k, h)| ConstraintRecord {
            branch_id: self.branch,
            side_index: k + 1,
            a: h.a,
            b: h.b,
            c: h.c,
        })
    }
}

fn oriented(v1: Point, v2: Point, limit: &CircleLimit, interior: Option<Point>) -> Result<HalfPlane, ConstraintError> {
    let (dp, dq) = (v2.p - v1.p, v2.q - v1.q);
    let len = dp.hypot(dq);
    if len == 0.0 {
        return Err(ConstraintError::DegenerateSide { p: v1.p, q: v1.q });
    }
    // Left normal of v1 -> v2; inward for anticlockwise vertex order.
    let (mut a, mut b) = (-dq / len, dp / len);
    let mut c = -(a * v1.p + b * v1.q);
    if c.abs() <= DIAMETER_TOL * limit.s() {
        c = 0.0;
        if let Some(x) = interior {
            if a * x.p + b * x.q < 0.0 {
                a = -a;
                b = -b;
            }
        }
    } else if c < 0.0 {
        a = -a;
        b = -b;
        c = -c;
    }
    Ok(HalfPlane { a, b, c })
}

/// Half-plane bounded by the line through `v1` and `v2` that contains the origin.
///
/// If the line passes through the origin the left side of `v1 → v2` is kept,
/// which is the interior for anticlockwise polygons.
pub fn side_to_halfplane(v1: Point, v2: Point, limit: &CircleLimit) -> Result<HalfPlane, ConstraintError> {
    oriented(v1, v2, limit, None)
}

/// One half-plane per polygon side, in side order.
pub fn polygon_to_constraints(poly: &Polygon) -> Result<ConstraintSet, ConstraintError> {
    let n = poly.vertices.len();
    let sum = poly
        .vertices
        .iter()
        .fold(Point::new(0.0, 0.0), |acc, v| Point::new(acc.p + v.p, acc.q + v.q));
    let halfplanes = poly
        .edges()
        .map(|(v1, v2)| {
            // Centroid of the vertices not on this side, for the diameter tie-break.
            let rest = (n.saturating_sub(2)).max(1) as f64;
            let hint = Point::new((sum.p - v1.p - v2.p) / rest, (sum.q - v1.q - v2.q) / rest);
            oriented(v1, v2, &poly.limit, Some(hint))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConstraintSet {
        branch: poly.limit.index(),
        limit: poly.limit,
        halfplanes,
    })
}

/// Whether `(p, q)` satisfies every half-plane, with slack `1e-9·s`.
pub fn contains(cs: &ConstraintSet, p: f64, q: f64) -> bool {
    let tol = -CONTAINS_TOL * cs.limit.s();
    cs.halfplanes.iter().all(|h| h.eval(p, q) >= tol)
}

/// Flags flow points that fall in the wedge of half-angle `alpha` around either
/// Q-axis direction, i.e. the region dropped by α-reduced linearizations.
///
/// Points are normalized by the rating first; the test is
/// `atan2(|p|, |q|) < alpha`.
pub fn alpha_region_check(points: &[(f64, f64)], limit: &CircleLimit, alpha: f64) -> Vec<bool> {
    let s = limit.s();
    points
        .iter()
        .map(|&(p, q)| {
            let (pn, qn) = (p / s, q / s);
            if pn == 0.0 && qn == 0.0 {
                // The origin has no direction; it lies on the Q axis only in the limit.
                return false;
            }
            pn.abs().atan2(qn.abs()) < alpha
        })
        .collect()
}

/// Total number of half-planes over a set of branches.
pub fn count_system_constraints(limits: &[CircleLimit], e: f64, kind: PolygonKind) -> Result<usize, ConstraintError> {
    limits.iter().try_fold(0usize, |acc, lim| {
        polygeom::side_count(lim, e, kind)
            .map(|m| acc + m)
            .map_err(|source| ConstraintError::Branch {
                branch: lim.index(),
                source,
            })
    })
}

/// Build the constraint set of every limit.
pub fn system_constraints(
    limits: &[CircleLimit],
    e: f64,
    kind: PolygonKind,
) -> Result<Vec<ConstraintSet>, ConstraintError> {
    limits
        .iter()
        .map(|lim| {
            let poly = polygeom::build(lim, e, kind).map_err(|source| ConstraintError::Branch {
                branch: lim.index(),
                source,
            })?;
            polygon_to_constraints(&poly)
        })
        .collect()
}

/// Export row: one half-plane of one branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    pub branch_id: usize,
    /// 1-indexed side number.
    pub side_index: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn constraints_csv<'a>(sets: impl IntoIterator<Item = &'a ConstraintSet>) -> String {
    let mut out = String::from("branch_id,side_index,a,b,c\n");
    for set in sets {
        for r in set.records() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.branch_id,
                r.side_index,
                sig12(r.a),
                sig12(r.b),
                sig12(r.c)
            ));
        }
    }
    out
}

pub fn constraints_json<'a>(sets: impl IntoIterator<Item = &'a ConstraintSet>) -> String {
    let records: Vec<ConstraintRecord> = sets
        .into_iter()
        .flat_map(|s| s.records())
        .map(|r| ConstraintRecord {
            a: round_sig(r.a, 12),
            b: round_sig(r.b, 12),
            c: round_sig(r.c, 12),
            ..r
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("records serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polygeom::{build_irregular, build_irregular_with_mq, build_regular};
    use approx::assert_abs_diff_eq;

    fn lim(s: f64) -> CircleLimit {
        CircleLimit::new(s, 0).unwrap()
    }

    #[test]
    fn side_examples() {
        let h = side_to_halfplane(Point::new(0.0, -16.0), Point::new(9.6, -12.8), &lim(16.0)).unwrap();
        assert_abs_diff_eq!(h.a, -0.31623, epsilon = 1e-5);
        assert_abs_diff_eq!(h.b, 0.94868, epsilon = 1e-5);
        assert_abs_diff_eq!(h.c, 15.1789, epsilon = 1e-4);
        let half = 10.119 / 2.0;
        assert_abs_diff_eq!(h.c, (256.0f64 - half * half).sqrt(), epsilon = 1e-3);

        let h = side_to_halfplane(Point::new(16.0, 0.0), Point::new(15.677, -3.2), &lim(16.0)).unwrap();
        assert_abs_diff_eq!(h.c, 15.9191, epsilon = 1e-3);
    }

    #[test]
    fn diameter_side() {
        let h = side_to_halfplane(Point::new(16.0, 0.0), Point::new(-16.0, 0.0), &lim(16.0)).unwrap();
        assert_eq!(h.c, 0.0);
        assert_abs_diff_eq!(h.a, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h.b.abs(), 1.0, epsilon = 1e-15);
        // left of +P -> -P is -Q
        assert!(h.b < 0.0);
    }

    #[test]
    fn coincident_vertices() {
        let v = Point::new(1.0, 0.0);
        assert!(matches!(
            side_to_halfplane(v, v, &lim(1.0)),
            Err(ConstraintError::DegenerateSide { .. })
        ));
    }

    #[test]
    fn polygon_counts() {
        let cs = polygon_to_constraints(&build_irregular(&lim(16.0), 0.1).unwrap()).unwrap();
        assert_eq!(cs.len(), 20);
        let cs = polygon_to_constraints(&build_regular(&lim(16.0), 0.1).unwrap()).unwrap();
        assert_eq!(cs.len(), 29);
        let cs = polygon_to_constraints(&build_irregular_with_mq(&lim(1.0), 1).unwrap()).unwrap();
        assert_eq!(cs.len(), 4);
        for h in &cs.halfplanes {
            assert_abs_diff_eq!(h.c, 2f64.sqrt() / 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn offsets_match_chords() {
        let poly = build_irregular(&lim(220.0), 0.2).unwrap();
        let cs = polygon_to_constraints(&poly).unwrap();
        for (h, side) in cs.halfplanes.iter().zip(&poly.sides) {
            assert!((h.a * h.a + h.b * h.b - 1.0).abs() <= 1e-12);
            let half = side.length / 2.0;
            assert_abs_diff_eq!(h.c, (220.0f64 * 220.0 - half * half).sqrt(), epsilon = 1e-9 * 220.0);
        }
    }

    #[test]
    fn membership_examples() {
        let cs = polygon_to_constraints(&build_irregular(&lim(16.0), 0.1).unwrap()).unwrap();
        assert!(contains(&cs, 0.0, 0.0));
        assert!(contains(&cs, 16.0, 0.0));
        assert!(!contains(&cs, 16.01, 0.0));
        // (0, s) is a vertex, so the Q axis is reached; the large error sits mid-side.
        assert!(contains(&cs, 0.0, 15.95));
        assert!(!contains(&cs, 0.0, 16.01));
        let mid = std::f64::consts::FRAC_PI_2 + 0.8f64.acos() / 2.0;
        assert!(!contains(&cs, 15.8 * mid.cos(), 15.8 * mid.sin()));
        assert!(contains(&cs, 15.1 * mid.cos(), 15.1 * mid.sin()));
    }

    #[test]
    fn alpha_examples() {
        let l = lim(10.0);
        let a30 = 30f64.to_radians();
        assert_eq!(alpha_region_check(&[(4.0, 9.0)], &l, a30), vec![true]);
        assert_eq!(alpha_region_check(&[(10.0, 0.0)], &l, a30), vec![false]);
        assert_eq!(
            alpha_region_check(&[(-4.0, -9.0), (4.0, -9.0)], &l, a30),
            vec![true, true]
        );
        let pts = [(4.0, 9.0), (0.0, 10.0), (10.0, 0.0), (-3.0, 1.0)];
        assert!(alpha_region_check(&pts, &l, 0.0).iter().all(|f| !f));
    }

    #[test]
    fn system_count_sums_table_entries() {
        let limits = [lim(16.0), CircleLimit::new(220.0, 1).unwrap()];
        assert_eq!(
            count_system_constraints(&limits, 0.1, PolygonKind::Irregular).unwrap(),
            88
        );
        assert_eq!(
            count_system_constraints(&limits, 0.1, PolygonKind::Regular).unwrap(),
            134
        );
    }

    #[test]
    fn system_count_names_branch() {
        let limits = [lim(16.0), CircleLimit::new(0.05, 7).unwrap()];
        match count_system_constraints(&limits, 0.1, PolygonKind::Irregular) {
            Err(ConstraintError::Branch { branch, .. }) => assert_eq!(branch, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn export_formats() {
        let cs =
            polygon_to_constraints(&build_irregular_with_mq(&CircleLimit::new(1.0, 3).unwrap(), 1).unwrap()).unwrap();
        let csv = constraints_csv([&cs]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("branch_id,side_index,a,b,c"));
        assert_eq!(lines.next(), Some("3,1,0.707106781187,-0.707106781187,0.707106781187"));
        assert_eq!(csv.lines().count(), 5);

        let json: Vec<ConstraintRecord> = serde_json::from_str(&constraints_json([&cs])).unwrap();
        assert_eq!(json.len(), 4);
        assert_eq!(json[0].side_index, 1);
        assert_eq!(json[0].c, 0.707106781187);
    }
}
