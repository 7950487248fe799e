mod common;

use branchpoly::halfplanes::polygon_to_constraints;
use branchpoly::lp::{solve, LpProblem, LpStatus};
use branchpoly::polygeom::{build, CircleLimit, PolygonKind};
use common::{kkt_certificate, min_over_vertices, polygon_lp, vertex_enumeration_min};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = PolygonKind> {
    prop_oneof![Just(PolygonKind::Regular), Just(PolygonKind::Irregular)]
}

/// Feasible, bounded problem: a box around a known interior point `x0`,
/// inequality rows slack at `x0`, and equality rows through `x0`.
fn random_problem(max_vars: usize, max_rows: usize) -> impl Strategy<Value = LpProblem> {
    (1..=max_vars).prop_flat_map(move |n| {
        let rows = 0..=max_rows;
        let eqs = 0..n;
        (
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(-3.0..3.0f64, n),
            prop::collection::vec((0.5..6.0f64, 0.5..6.0f64), n),
            rows.prop_flat_map(move |m| {
                prop::collection::vec((prop::collection::vec(-4.0..4.0f64, n), 0.0..3.0f64), m)
            }),
            eqs.prop_flat_map(move |k| prop::collection::vec(prop::collection::vec(-4.0..4.0f64, n), k)),
        )
            .prop_map(move |(cost, x0, widths, ge, eq)| {
                let mut p = LpProblem::new(n);
                p.objective = cost;
                for j in 0..n {
                    p.set_bounds(j, x0[j] - widths[j].0, x0[j] + widths[j].1);
                }
                for (a, slack) in ge {
                    let rhs = a.iter().zip(&x0).map(|(a, x)| a * x).sum::<f64>() - slack;
                    p.add_ge(a, rhs);
                }
                for a in eq {
                    let rhs = a.iter().zip(&x0).map(|(a, x)| a * x).sum::<f64>();
                    p.add_eq(a, rhs);
                }
                p
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn polygon_optimum_is_best_vertex(
        s in 1.0..2000.0f64,
        rel in 1e-4..0.3f64,
        kind in kind(),
        angle in 0.0..std::f64::consts::TAU,
    ) {
        let limit = CircleLimit::new(s, 0).unwrap();
        let poly = build(&limit, rel * s, kind).unwrap();
        let set = polygon_to_constraints(&poly).unwrap();
        let (cp, cq) = (angle.cos(), angle.sin());
        let sol = solve(&polygon_lp(&set, cp, cq)).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        let best = min_over_vertices(&poly.vertices, cp, cq);
        prop_assert!((sol.objective - best).abs() <= 1e-9 * s, "lp {} vertices {}", sol.objective, best);
    }

    #[test]
    fn small_problems_match_vertex_enumeration(p in random_problem(4, 8)) {
        let sol = solve(&p).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        let best = vertex_enumeration_min(&p).expect("bounded feasible problem has a vertex");
        prop_assert!((sol.objective - best).abs() <= 1e-7 * (1.0 + best.abs()), "lp {} enum {}", sol.objective, best);
    }

    #[test]
    fn larger_problems_close_duality_gap(p in random_problem(10, 30)) {
        let sol = solve(&p).unwrap();
        prop_assert_eq!(sol.status, LpStatus::Optimal);
        let dual = kkt_certificate(&p, &sol.x, 1e-7).expect("optimality certificate");
        prop_assert!((sol.objective - dual).abs() <= 1e-7 * (1.0 + sol.objective.abs()), "primal {} dual {}", sol.objective, dual);
    }

    #[test]
    fn repeated_solves_are_identical(p in random_problem(6, 12)) {
        let a = solve(&p).unwrap();
        let b = solve(&p).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        prop_assert_eq!(a.x, b.x);
    }
}

#[test]
fn vertex_enumeration_oracle_sanity() {
    // minimize -x - y over x + y ≤ 1, 0 ≤ x, y ≤ 1
    let mut p = LpProblem::new(2);
    p.objective = vec![-1.0, -1.0];
    p.set_bounds(0, 0.0, 1.0);
    p.set_bounds(1, 0.0, 1.0);
    p.add_ge(vec![-1.0, -1.0], -1.0);
    assert_eq!(vertex_enumeration_min(&p), Some(-1.0));
    assert!(kkt_certificate(&p, &[0.5, 0.5], 1e-9).is_some());
    assert!(kkt_certificate(&p, &[0.0, 0.0], 1e-9).is_none());
}

#[test]
fn disk_approximation_reaches_p_axis_vertex() {
    let limit = CircleLimit::new(16.0, 0).unwrap();
    let poly = build(&limit, 0.1, PolygonKind::Irregular).unwrap();
    assert_eq!(poly.m(), 20);
    let set = polygon_to_constraints(&poly).unwrap();
    let sol = solve(&polygon_lp(&set, -1.0, 0.0)).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.x[0] - 16.0).abs() <= 1e-9 * 16.0);
    assert!((min_over_vertices(&poly.vertices, -1.0, 0.0) + 16.0).abs() <= 1e-12);
}

#[test]
fn classifies_infeasible_and_unbounded() {
    let mut p = LpProblem::new(2);
    p.add_ge(vec![1.0, 1.0], 2.0);
    p.add_ge(vec![-1.0, -1.0], -1.0);
    assert_eq!(solve(&p).unwrap().status, LpStatus::Infeasible);
    assert_eq!(vertex_enumeration_min(&p), None);

    let mut p = LpProblem::new(2);
    p.objective = vec![-1.0, 0.0];
    p.add_ge(vec![1.0, -1.0], 0.0);
    p.set_bounds(1, 0.0, 1.0);
    assert_eq!(solve(&p).unwrap().status, LpStatus::Unbounded);
}
