//! Browser bindings for the polygon demo page in `www/`.
//!
//! Each exported function returns a JSON string. The `*_json` functions hold
//! the logic so it can be tested natively.

use branchpoly::halfplanes::polygon_to_constraints;
use branchpoly::polygeom::{
    build, build_irregular_with_mq, linearize_at_angle, side_count, ChordSpec, CircleLimit, Polygon, PolygonKind,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Side {
    index: usize,
    length: f64,
    sagitta: f64,
    delta_theta: f64,
}

#[derive(Serialize)]
struct PolygonView {
    kind: PolygonKind,
    s: f64,
    m: usize,
    mq: Option<usize>,
    /// Side count of the other kind at the same error.
    other_m: Option<usize>,
    max_sagitta: f64,
    min_sagitta: f64,
    vertices: Vec<[f64; 2]>,
    sides: Vec<Side>,
    halfplanes: Vec<[f64; 3]>,
}

#[derive(Serialize)]
struct ChordView {
    theta: f64,
    delta_theta: f64,
    length: f64,
    sagitta: f64,
    start: [f64; 2],
    end: [f64; 2],
}

fn sides(specs: &[ChordSpec]) -> Vec<Side> {
    specs
        .iter()
        .enumerate()
        .map(|(k, c)| Side {
            index: k + 1,
            length: c.length,
            sagitta: c.sagitta,
            delta_theta: c.delta_theta,
        })
        .collect()
}

fn view(poly: &Polygon, other_m: Option<usize>) -> Result<String, String> {
    let set = polygon_to_constraints(poly).map_err(|e| e.to_string())?;
    let out = PolygonView {
        kind: poly.kind,
        s: poly.limit.s(),
        m: poly.m(),
        mq: poly.mq,
        other_m,
        max_sagitta: poly.max_sagitta(),
        min_sagitta: poly.min_sagitta(),
        vertices: poly.vertices.iter().map(|v| [v.p, v.q]).collect(),
        sides: sides(&poly.sides),
        halfplanes: set.halfplanes.iter().map(|h| [h.a, h.b, h.c]).collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

pub fn polygon_json(s: f64, e: f64, kind: &str) -> Result<String, String> {
    let kind: PolygonKind = kind.parse()?;
    let limit = CircleLimit::new(s, 0).map_err(|e| e.to_string())?;
    let poly = build(&limit, e, kind).map_err(|e| e.to_string())?;
    let other = match kind {
        PolygonKind::Regular => PolygonKind::Irregular,
        PolygonKind::Irregular => PolygonKind::Regular,
    };
    view(&poly, side_count(&limit, e, other).ok())
}

pub fn profile_json(s: f64, mq: usize) -> Result<String, String> {
    let limit = CircleLimit::new(s, 0).map_err(|e| e.to_string())?;
    let poly = build_irregular_with_mq(&limit, mq).map_err(|e| e.to_string())?;
    view(&poly, None)
}

pub fn chord_json(s: f64, theta: f64, e: f64) -> Result<String, String> {
    let limit = CircleLimit::new(s, 0).map_err(|e| e.to_string())?;
    let c = linearize_at_angle(&limit, theta, e).map_err(|e| e.to_string())?;
    let out = ChordView {
        theta: c.theta,
        delta_theta: c.chord.delta_theta,
        length: c.chord.length,
        sagitta: c.chord.sagitta,
        start: [c.start.p, c.start.q],
        end: [c.end.p, c.end.q],
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Polygon for rating `s` and error `e`; `kind` is "regular" or "irregular".
#[wasm_bindgen]
pub fn polygon(s: f64, e: f64, kind: &str) -> Result<String, JsError> {
    polygon_json(s, e, kind).map_err(|e| JsError::new(&e))
}

/// Irregular polygon with `mq` sides per quadrant.
#[wasm_bindgen]
pub fn profile(s: f64, mq: usize) -> Result<String, JsError> {
    profile_json(s, mq).map_err(|e| JsError::new(&e))
}

/// Single chord of sagitta `e` centred on direction `theta` (radians from +P).
#[wasm_bindgen]
pub fn chord(s: f64, theta: f64, e: f64) -> Result<String, JsError> {
    chord_json(s, theta, e).map_err(|e| JsError::new(&e))
}
