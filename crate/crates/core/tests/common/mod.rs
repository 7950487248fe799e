#![allow(dead_code)]

use branchpoly::caseio::{bundled, parse_case, CaseData};
use branchpoly::halfplanes::ConstraintSet;
use branchpoly::lp::LpProblem;
use branchpoly::polygeom::{Point, Polygon};
use nalgebra::{DMatrix, DVector};

/// 2-bus fixture with a 40 MVA branch and a second, expensive generator at
/// bus 2 that produces no reactive power. The cheap slack unit then pushes as
/// much active power as the polygon allows while carrying the 10 MVAr load.
pub fn two_bus_rate40() -> CaseData {
    let text = bundled::text("2bus")
        .unwrap()
        .replace("0\t0.1\t0\t100\t100\t100", "0\t0.1\t0\t40\t40\t40")
        .replace("mpc.gen = [\n", "mpc.gen = [\n\t2\t0\t0\t0\t0\t1\t100\t1\t200\t0;\n")
        .replace("\t2\t0\t0\t2\t10\t0;\n", "\t2\t0\t0\t2\t50\t0;\n\t2\t0\t0\t2\t10\t0;\n");
    let case = parse_case(&text).unwrap();
    assert_eq!(case.gens.len(), 2);
    assert_eq!(case.branches[0].rate_mva, 40.0);
    case
}

/// Cost of serving the rate-40 fixture when the slack unit ships `p12` MW.
pub fn rate40_cost(p12: f64) -> f64 {
    10.0 * p12 + 50.0 * (50.0 - p12)
}

/// Largest `p` on the polygon boundary at height `q`, by intersecting every side.
pub fn max_p_at_q(poly: &Polygon, q: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (a, b) in poly.edges() {
        if a.q == b.q {
            if a.q == q {
                best = best.max(a.p.max(b.p));
            }
        } else if (a.q - q) * (b.q - q) <= 0.0 {
            let t = (q - a.q) / (b.q - a.q);
            best = best.max(a.p + t * (b.p - a.p));
        }
    }
    best
}

/// LP over `(p, q)` restricted to a constraint set, minimizing `cp·p + cq·q`.
pub fn polygon_lp(set: &ConstraintSet, cp: f64, cq: f64) -> LpProblem {
    let mut lp = LpProblem::new(2);
    lp.objective = vec![cp, cq];
    for hp in &set.halfplanes {
        lp.add_ge(vec![hp.a, hp.b], -hp.c);
    }
    lp
}

pub fn min_over_vertices(vertices: &[Point], cp: f64, cq: f64) -> f64 {
    vertices
        .iter()
        .map(|v| cp * v.p + cq * v.q)
        .fold(f64::INFINITY, f64::min)
}

/// A constraint `a·x = b` (equality) or `a·x ≥ b` (inequality face).
#[derive(Clone)]
struct Face {
    a: Vec<f64>,
    b: f64,
}

fn faces(p: &LpProblem) -> (Vec<Face>, Vec<Face>) {
    let n = p.num_vars();
    let eq = p
        .equalities
        .iter()
        .map(|r| Face {
            a: r.coeffs.clone(),
            b: r.rhs,
        })
        .collect();
    let mut ineq: Vec<Face> = p
        .inequalities
        .iter()
        .map(|r| Face {
            a: r.coeffs.clone(),
            b: r.rhs,
        })
        .collect();
    // Bounds as ≥ faces: x_j ≥ l_j and -x_j ≥ -u_j.
    for j in 0..n {
        for (sign, bound) in [(1.0, p.lower[j]), (-1.0, p.upper[j])] {
            if bound.is_finite() {
                let mut a = vec![0.0; n];
                a[j] = sign;
                ineq.push(Face { a, b: sign * bound });
            }
        }
    }
    (eq, ineq)
}

fn feasible(p: &LpProblem, x: &[f64], tol: f64) -> bool {
    let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let t = tol * scale;
    p.equalities.iter().all(|r| (r.activity(x) - r.rhs).abs() <= t)
        && p.inequalities.iter().all(|r| r.activity(x) >= r.rhs - t)
        && (0..x.len()).all(|j| x[j] >= p.lower[j] - t && x[j] <= p.upper[j] + t)
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Minimum of the objective over all basic feasible points, found by solving
/// every square subsystem of equalities plus `n - #eq` inequality faces.
/// Returns `None` when no basic feasible point exists.
pub fn vertex_enumeration_min(p: &LpProblem) -> Option<f64> {
    let n = p.num_vars();
    let (eq, ineq) = faces(p);
    if eq.len() > n {
        return None;
    }
    let k = n - eq.len();
    let mut best: Option<f64> = None;
    combinations(ineq.len(), k, &mut |pick| {
        let rows: Vec<&Face> = eq.iter().chain(pick.iter().map(|&i| &ineq[i])).collect();
        let a = DMatrix::from_fn(n, n, |r, c| rows[r].a[c]);
        let b = DVector::from_iterator(n, rows.iter().map(|f| f.b));
        let lu = a.lu();
        if lu.determinant().abs() < 1e-10 {
            return;
        }
        if let Some(x) = lu.solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            if feasible(p, &x, 1e-9) {
                let obj: f64 = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
    });
    best
}

/// Checks that `x` is optimal for `p` by recovering Lagrange multipliers on
/// the faces active at `x` and testing their signs. Returns the dual
/// objective when the certificate holds.
pub fn kkt_certificate(p: &LpProblem, x: &[f64], tol: f64) -> Option<f64> {
    let n = p.num_vars();
    if !feasible(p, x, tol) {
        return None;
    }
    let (eq, ineq) = faces(p);
    let active: Vec<&Face> = ineq
        .iter()
        .filter(|f| {
            let act: f64 = f.a.iter().zip(x).map(|(a, v)| a * v).sum();
            (act - f.b).abs() <= tol * (1.0 + f.b.abs())
        })
        .collect();
    let mut cols: Vec<(Vec<f64>, f64, bool)> = eq.iter().map(|f| (f.a.clone(), f.b, true)).collect();
    cols.extend(active.into_iter().map(|f| (f.a.clone(), f.b, false)));
    let m = cols.len();
    if m == 0 {
        return p.objective.iter().all(|c| c.abs() <= tol).then_some(0.0);
    }
    // c = Σ y_i a_i with y_i ≥ 0 on inequality faces.
    let a = DMatrix::from_fn(n, m, |r, c| cols[c].0[r]);
    let c = DVector::from_column_slice(&p.objective);
    let svd = a.clone().svd(true, true);
    let y = svd.solve(&c, 1e-12).ok()?;
    let resid = (&a * &y - &c).norm();
    if resid > tol * (1.0 + c.norm()) {
        return None;
    }
    if cols
        .iter()
        .zip(y.iter())
        .any(|((_, _, is_eq), yi)| !is_eq && *yi < -tol * (1.0 + c.norm()))
    {
        return None;
    }
    Some(cols.iter().zip(y.iter()).map(|((_, b, _), yi)| b * yi).sum())
}
