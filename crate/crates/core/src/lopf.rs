//! Linear OPF with polygonal branch limits.
//!
//! Variables per bus are `v` and `δ`, per generator `pg` and `qg` (and an
//! epigraph column `t` for quadratic costs). Branch flows use a flat-start
//! linearization:
//!
//! ```text
//! p_ij = g (v_i - v_j) - b (δ_i - δ_j)
//! q_ij = -b (v_i - v_j) - g (δ_i - δ_j)      g = r/(r²+x²), b = -x/(r²+x²)
//! ```
//!
//! Charging, taps, phase shifts and bus shunts are not modelled. Each rated
//! branch gets one `a·P + b·Q + c ≥ 0` row per polygon side, applied to the
//! from-end flow in MVA.

use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caseio::{branch_limits, BusKind, CaseData};
use crate::format::sig12;
use crate::halfplanes::{self, ConstraintError, ConstraintSet};
use crate::lp::{self, LpError, LpProblem, LpStatus};
use crate::polygeom::{CircleLimit, PolygonKind};

const COST_SEGMENTS: usize = 10;
const BALANCE_TOL: f64 = 1e-6;
const BINDING_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpfError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("bus {bus}: Vmin {vmin} above Vmax {vmax}")]
    InvalidVoltageBounds { bus: u32, vmin: f64, vmax: f64 },
    #[error("case has no slack bus")]
    NoSlackBus,
    #[error("{costs} cost functions for {gens} generators")]
    CostCountMismatch { gens: usize, costs: usize },
    #[error("generator {gen}: cost of degree {degree} is not supported")]
    UnsupportedCost { gen: usize, degree: usize },
    #[error("generator {gen}: concave cost (c2 = {c2})")]
    NonConvexCost { gen: usize, c2: f64 },
    #[error("branch {branch}: endpoint bus {bus} not in case")]
    UnknownBus { branch: usize, bus: u32 },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("{0}")]
    Infeasible(InfeasibilityReport),
    #[error("model error: LP unbounded ({0})")]
    Unbounded(String),
}

/// Linear flow coefficients of one branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFlowCoeffs {
    pub from: usize,
    pub to: usize,
    pub g: f64,
    pub b: f64,
}

impl BranchFlowCoeffs {
    pub fn new(from: usize, to: usize, r: f64, x: f64) -> Self {
        let z2 = r * r + x * x;
        Self {
            from,
            to,
            g: r / z2,
            b: -x / z2,
        }
    }

    /// Coefficients of `p_ij` on `(v_i, v_j, δ_i, δ_j)`.
    pub fn p_coeffs(&self) -> [f64; 4] {
        [self.g, -self.g, -self.b, self.b]
    }

    /// Coefficients of `q_ij` on `(v_i, v_j, δ_i, δ_j)`.
    pub fn q_coeffs(&self) -> [f64; 4] {
        [-self.b, self.b, -self.g, self.g]
    }

    /// `(p_ij, q_ij)` in per-unit.
    pub fn flow(&self, v: &[f64], delta: &[f64]) -> (f64, f64) {
        let dv = v[self.from] - v[self.to];
        let dd = delta[self.from] - delta[self.to];
        (self.g * dv - self.b * dd, -self.b * dv - self.g * dd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFlowModel {
    pub branches: Vec<BranchFlowCoeffs>,
}

impl LinearFlowModel {
    pub fn from_case(case: &CaseData) -> Result<Self, OpfError> {
        let index = case.bus_index();
        let branches = case
            .branches
            .iter()
            .enumerate()
            .map(|(k, br)| {
                let find = |bus| index.get(&bus).copied().ok_or(OpfError::UnknownBus { branch: k, bus });
                Ok(BranchFlowCoeffs::new(find(br.from)?, find(br.to)?, br.r, br.x))
            })
            .collect::<Result<_, OpfError>>()?;
        Ok(Self { branches })
    }
}

/// Column positions in the LP.
#[derive(Debug, Clone, PartialEq)]
pub struct VarLayout {
    pub buses: usize,
    pub gens: usize,
    /// Epigraph column of each generator with a quadratic cost.
    pub cost_cols: Vec<Option<usize>>,
    pub total: usize,
}

impl VarLayout {
    pub fn v(&self, bus: usize) -> usize {
        bus
    }

    pub fn delta(&self, bus: usize) -> usize {
        self.buses + bus
    }

    pub fn pg(&self, gen: usize) -> usize {
        2 * self.buses + gen
    }

    pub fn qg(&self, gen: usize) -> usize {
        2 * self.buses + self.gens + gen
    }

    fn describe(&self, col: usize, case: &CaseData) -> String {
        let nb = self.buses;
        let ng = self.gens;
        if col < nb {
            format!("v at bus {}", case.buses[col].id)
        } else if col < 2 * nb {
            format!("delta at bus {}", case.buses[col - nb].id)
        } else if col < 2 * nb + ng {
            format!("pg of generator {}", col - 2 * nb)
        } else if col < 2 * nb + 2 * ng {
            format!("qg of generator {}", col - 2 * nb - ng)
        } else {
            let gen = self.cost_cols.iter().position(|c| *c == Some(col)).unwrap_or(0);
            format!("cost epigraph of generator {gen}")
        }
    }
}

/// What an LP row encodes; indices follow `LpProblem::rows` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum RowFamily {
    PBalance { bus: u32 },
    QBalance { bus: u32 },
    CostSegment { gen: usize, segment: usize },
    BranchLimit { branch: usize, side: usize },
}

impl RowFamily {
    pub fn name(&self) -> &'static str {
        match self {
            RowFamily::PBalance { .. } => "p_balance",
            RowFamily::QBalance { .. } => "q_balance",
            RowFamily::CostSegment { .. } => "cost_segment",
            RowFamily::BranchLimit { .. } => "branch_limit",
        }
    }
}

impl fmt::Display for RowFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowFamily::PBalance { bus } => write!(f, "p_balance at bus {bus}"),
            RowFamily::QBalance { bus } => write!(f, "q_balance at bus {bus}"),
            RowFamily::CostSegment { gen, segment } => write!(f, "cost_segment {segment} of generator {gen}"),
            RowFamily::BranchLimit { branch, side } => write!(f, "branch_limit side {side} of branch {branch}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    /// Family with the most violated rows (or variable group when no row is violated).
    pub family: String,
    pub rows: Vec<String>,
    pub vars: Vec<String>,
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "infeasible: violated {}", self.family)?;
        let items: Vec<&String> = self.rows.iter().chain(&self.vars).take(5).collect();
        if !items.is_empty() {
            let shown: Vec<&str> = items.iter().map(|s| s.as_str()).collect();
            write!(f, " ({}", shown.join("; "))?;
            let more = self.rows.len() + self.vars.len() - items.len();
            if more > 0 {
                write!(f, "; {more} more")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpfModel {
    pub lp: LpProblem,
    pub layout: VarLayout,
    pub flow: LinearFlowModel,
    pub rows: Vec<RowFamily>,
    pub limits: Vec<CircleLimit>,
    pub constraint_sets: Vec<ConstraintSet>,
    /// Constant cost terms, $/h.
    pub objective_offset: f64,
    pub polygon_rows: usize,
    base_mva: f64,
    bus_ids: Vec<u32>,
    gen_buses: Vec<u32>,
    branch_ends: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub branch: usize,
    pub from: u32,
    pub to: u32,
    pub p_mva: f64,
    pub q_mva: f64,
    /// 0 when unrated.
    pub rate_mva: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingSide {
    pub branch: usize,
    /// 1-based polygon side.
    pub side_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfSolution {
    /// $/h
    pub objective: f64,
    pub bus_ids: Vec<u32>,
    pub v: Vec<f64>,
    pub delta: Vec<f64>,
    pub gen_buses: Vec<u32>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub flows: Vec<BranchFlow>,
    pub binding: Vec<BindingSide>,
    /// Largest nodal P/Q mismatch, per-unit.
    pub balance_residual: f64,
    pub polygon_rows: usize,
    pub iterations: usize,
}

/// LP with polygon rows for every rated branch.
pub fn build_model(case: &CaseData, e: f64, kind: PolygonKind) -> Result<OpfModel, OpfError> {
    let limits = branch_limits(case);
    let sets = halfplanes::system_constraints(&limits, e, kind)?;
    build(case, limits, sets)
}

/// LP without any branch limit rows.
pub fn build_unconstrained(case: &CaseData) -> Result<OpfModel, OpfError> {
    build(case, Vec::new(), Vec::new())
}

fn build(case: &CaseData, limits: Vec<CircleLimit>, sets: Vec<ConstraintSet>) -> Result<OpfModel, OpfError> {
    let nb = case.buses.len();
    let ng = case.gens.len();
    let base = case.base_mva;
    if case.costs.len() != ng {
        return Err(OpfError::CostCountMismatch {
            gens: ng,
            costs: case.costs.len(),
        });
    }
    for bus in &case.buses {
        if bus.vmin > bus.vmax {
            return Err(OpfError::InvalidVoltageBounds {
                bus: bus.id,
                vmin: bus.vmin,
                vmax: bus.vmax,
            });
        }
    }
    let slack = case
        .buses
        .iter()
        .position(|b| b.kind == BusKind::Slack)
        .ok_or(OpfError::NoSlackBus)?;
    let flow = LinearFlowModel::from_case(case)?;
    let index = case.bus_index();

    let mut cost_cols = vec![None; ng];
    let mut total = 2 * nb + 2 * ng;
    for (k, cost) in case.costs.iter().enumerate() {
        let degree = cost.degree();
        if degree > 2 {
            return Err(OpfError::UnsupportedCost { gen: k, degree });
        }
        if cost.c2() < 0.0 {
            return Err(OpfError::NonConvexCost { gen: k, c2: cost.c2() });
        }
        let g = &case.gens[k];
        if cost.c2() > 0.0 && g.pmax > g.pmin {
            cost_cols[k] = Some(total);
            total += 1;
        }
    }
    let layout = VarLayout {
        buses: nb,
        gens: ng,
        cost_cols,
        total,
    };

    let mut lp = LpProblem::new(total);
    let mut offset = 0.0;
    for (i, bus) in case.buses.iter().enumerate() {
        if i == slack {
            lp.set_bounds(layout.v(i), 1.0, 1.0);
            lp.set_bounds(layout.delta(i), 0.0, 0.0);
        } else {
            lp.set_bounds(layout.v(i), bus.vmin, bus.vmax);
        }
    }
    for (k, g) in case.gens.iter().enumerate() {
        lp.set_bounds(layout.pg(k), g.pmin, g.pmax);
        lp.set_bounds(layout.qg(k), g.qmin, g.qmax);
    }

    let mut rows = Vec::new();

    // Nodal balance: outgoing flows - injections = -load
    let mut p_bal = vec![vec![0.0; total]; nb];
    let mut q_bal = vec![vec![0.0; total]; nb];
    for br in &flow.branches {
        let cols = [
            layout.v(br.from),
            layout.v(br.to),
            layout.delta(br.from),
            layout.delta(br.to),
        ];
        for ((&col, pc), qc) in cols.iter().zip(br.p_coeffs()).zip(br.q_coeffs()) {
            p_bal[br.from][col] += pc;
            p_bal[br.to][col] -= pc;
            q_bal[br.from][col] += qc;
            q_bal[br.to][col] -= qc;
        }
    }
    for (k, g) in case.gens.iter().enumerate() {
        let i = index[&g.bus];
        p_bal[i][layout.pg(k)] -= 1.0;
        q_bal[i][layout.qg(k)] -= 1.0;
    }
    for (i, (p, q)) in p_bal.into_iter().zip(q_bal).enumerate() {
        let bus = &case.buses[i];
        lp.add_eq(p, -bus.pd);
        rows.push(RowFamily::PBalance { bus: bus.id });
        lp.add_eq(q, -bus.qd);
        rows.push(RowFamily::QBalance { bus: bus.id });
    }

    // Costs in $/h with pg in per-unit; secant cuts t ≥ f(x_j) + slope (P - x_j) in MW.
    for (k, cost) in case.costs.iter().enumerate() {
        let g = &case.gens[k];
        match layout.cost_cols[k] {
            Some(t) => {
                lp.objective[t] = 1.0;
                let (lo, hi) = (g.pmin * base, g.pmax * base);
                let xs: Vec<f64> = (0..=COST_SEGMENTS)
                    .map(|j| lo + (hi - lo) * j as f64 / COST_SEGMENTS as f64)
                    .collect();
                for (segment, w) in xs.windows(2).enumerate() {
                    let slope = (cost.eval(w[1]) - cost.eval(w[0])) / (w[1] - w[0]);
                    let mut row = vec![0.0; total];
                    row[t] = 1.0;
                    row[layout.pg(k)] = -slope * base;
                    lp.add_ge(row, cost.eval(w[0]) - slope * w[0]);
                    rows.push(RowFamily::CostSegment { gen: k, segment });
                }
            }
            None if cost.c2() > 0.0 => offset += cost.eval(g.pmin * base),
            None => {
                lp.objective[layout.pg(k)] = cost.c1() * base;
                offset += cost.c0();
            }
        }
    }

    let mut polygon_rows = 0;
    for set in &sets {
        let br = &flow.branches[set.branch];
        let cols = [
            layout.v(br.from),
            layout.v(br.to),
            layout.delta(br.from),
            layout.delta(br.to),
        ];
        for (side, hp) in set.halfplanes.iter().enumerate() {
            let mut row = vec![0.0; total];
            for ((&col, pc), qc) in cols.iter().zip(br.p_coeffs()).zip(br.q_coeffs()) {
                row[col] += base * (hp.a * pc + hp.b * qc);
            }
            lp.add_ge(row, -hp.c);
            rows.push(RowFamily::BranchLimit {
                branch: set.branch,
                side: side + 1,
            });
            polygon_rows += 1;
        }
    }
    // rows() lists equalities first
    let (eq_rows, ge_rows): (Vec<RowFamily>, Vec<RowFamily>) = rows
        .into_iter()
        .partition(|r| matches!(r, RowFamily::PBalance { .. } | RowFamily::QBalance { .. }));
    let rows = eq_rows.into_iter().chain(ge_rows).collect();

    Ok(OpfModel {
        lp,
        layout,
        flow,
        rows,
        limits,
        constraint_sets: sets,
        objective_offset: offset,
        polygon_rows,
        base_mva: base,
        bus_ids: case.buses.iter().map(|b| b.id).collect(),
        gen_buses: case.gens.iter().map(|g| g.bus).collect(),
        branch_ends: case.branches.iter().map(|b| (b.from, b.to)).collect(),
    })
}

fn infeasibility_report(model: &OpfModel, case: &CaseData, rows: &[usize], vars: &[usize]) -> InfeasibilityReport {
    let n = model.layout.total;
    let mut counts: Vec<(&'static str, usize)> = Vec::new();
    for &r in rows {
        let name = model.rows[r].name();
        match counts.iter_mut().find(|(f, _)| *f == name) {
            Some((_, c)) => *c += 1,
            None => counts.push((name, 1)),
        }
    }
    let family = match counts.iter().max_by_key(|(_, c)| *c) {
        Some((f, _)) => format!("row family {f}"),
        None => "variable bounds".to_string(),
    };
    InfeasibilityReport {
        family,
        rows: rows.iter().map(|&r| model.rows[r].to_string()).collect(),
        vars: vars
            .iter()
            .filter(|&&v| v < n)
            .map(|&v| model.layout.describe(v, case))
            .collect(),
    }
}

/// Solve a built model. `case` must be the one the model was built from.
pub fn solve_model(model: &OpfModel, case: &CaseData) -> Result<OpfSolution, OpfError> {
    let sol = lp::solve(&model.lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(OpfError::Infeasible(infeasibility_report(
                model,
                case,
                &sol.infeasible_rows,
                &sol.infeasible_vars,
            )))
        }
        LpStatus::Unbounded => {
            return Err(OpfError::Unbounded(
                "a generator cost decreases without bound; check costs and generator limits".into(),
            ))
        }
    }
    let l = &model.layout;
    let base = model.base_mva;
    let v: Vec<f64> = (0..l.buses).map(|i| sol.x[l.v(i)]).collect();
    let delta: Vec<f64> = (0..l.buses).map(|i| sol.x[l.delta(i)]).collect();
    let pg: Vec<f64> = (0..l.gens).map(|k| sol.x[l.pg(k)]).collect();
    let qg: Vec<f64> = (0..l.gens).map(|k| sol.x[l.qg(k)]).collect();

    let mut rates = vec![0.0; model.flow.branches.len()];
    for lim in &model.limits {
        rates[lim.index()] = lim.s();
    }
    let mut p_mis: Vec<f64> = case.buses.iter().map(|b| b.pd).collect();
    let mut q_mis: Vec<f64> = case.buses.iter().map(|b| b.qd).collect();
    let mut flows = Vec::with_capacity(model.flow.branches.len());
    for (k, br) in model.flow.branches.iter().enumerate() {
        let (p, q) = br.flow(&v, &delta);
        p_mis[br.from] += p;
        p_mis[br.to] -= p;
        q_mis[br.from] += q;
        q_mis[br.to] -= q;
        let (from, to) = model.branch_ends[k];
        flows.push(BranchFlow {
            branch: k,
            from,
            to,
            p_mva: p * base,
            q_mva: q * base,
            rate_mva: rates[k],
        });
    }
    let index = case.bus_index();
    for (k, g) in case.gens.iter().enumerate() {
        let i = index[&g.bus];
        p_mis[i] -= pg[k];
        q_mis[i] -= qg[k];
    }
    let balance_residual = p_mis.iter().chain(&q_mis).fold(0.0f64, |a, x| a.max(x.abs()));
    debug_assert!(balance_residual <= BALANCE_TOL, "balance residual {balance_residual}");

    let mut binding = Vec::new();
    for set in &model.constraint_sets {
        let f = &flows[set.branch];
        for (side, hp) in set.halfplanes.iter().enumerate() {
            if hp.eval(f.p_mva, f.q_mva) <= BINDING_TOL * set.limit.s() {
                binding.push(BindingSide {
                    branch: set.branch,
                    side_index: side + 1,
                });
            }
        }
    }

    let objective = case
        .costs
        .iter()
        .zip(&pg)
        .enumerate()
        .map(|(k, (c, &p))| match l.cost_cols[k] {
            Some(t) => sol.x[t],
            None if c.c2() > 0.0 => c.eval(p * base),
            None => c.c1() * p * base + c.c0(),
        })
        .sum();

    Ok(OpfSolution {
        objective,
        bus_ids: model.bus_ids.clone(),
        v,
        delta,
        gen_buses: model.gen_buses.clone(),
        pg,
        qg,
        flows,
        binding,
        balance_residual,
        polygon_rows: model.polygon_rows,
        iterations: sol.iterations,
    })
}

pub fn solve_opf(case: &CaseData, e: f64, kind: PolygonKind) -> Result<OpfSolution, OpfError> {
    solve_model(&build_model(case, e, kind)?, case)
}

pub fn solve_unconstrained(case: &CaseData) -> Result<OpfSolution, OpfError> {
    solve_model(&build_unconstrained(case)?, case)
}

/// Flow point of each limited branch divided by its rating.
pub fn normalized_flows(sol: &OpfSolution, limits: &[CircleLimit]) -> Vec<(f64, f64)> {
    limits
        .iter()
        .map(|l| {
            let f = &sol.flows[l.index()];
            (f.p_mva / l.s(), f.q_mva / l.s())
        })
        .collect()
}

fn normalized(f: &BranchFlow) -> Option<(f64, f64)> {
    (f.rate_mva > 0.0).then(|| (f.p_mva / f.rate_mva, f.q_mva / f.rate_mva))
}

#[derive(Serialize)]
struct BusOut {
    id: u32,
    v: f64,
    delta: f64,
}

#[derive(Serialize)]
struct GenOut {
    bus: u32,
    pg: f64,
    qg: f64,
}

#[derive(Serialize)]
struct FlowOut {
    branch: usize,
    from: u32,
    to: u32,
    p_mva: f64,
    q_mva: f64,
    rate_mva: f64,
    p_norm: Option<f64>,
    q_norm: Option<f64>,
}

#[derive(Serialize)]
struct SolutionOut<'a> {
    objective: f64,
    balance_residual: f64,
    polygon_rows: usize,
    buses: Vec<BusOut>,
    gens: Vec<GenOut>,
    flows: Vec<FlowOut>,
    binding: &'a [BindingSide],
}

impl OpfSolution {
    pub fn to_json(&self) -> String {
        let out = SolutionOut {
            objective: self.objective,
            balance_residual: self.balance_residual,
            polygon_rows: self.polygon_rows,
            buses: (0..self.bus_ids.len())
                .map(|i| BusOut {
                    id: self.bus_ids[i],
                    v: self.v[i],
                    delta: self.delta[i],
                })
                .collect(),
            gens: (0..self.gen_buses.len())
                .map(|k| GenOut {
                    bus: self.gen_buses[k],
                    pg: self.pg[k],
                    qg: self.qg[k],
                })
                .collect(),
            flows: self
                .flows
                .iter()
                .map(|f| {
                    let n = normalized(f);
                    FlowOut {
                        branch: f.branch,
                        from: f.from,
                        to: f.to,
                        p_mva: f.p_mva,
                        q_mva: f.q_mva,
                        rate_mva: f.rate_mva,
                        p_norm: n.map(|x| x.0),
                        q_norm: n.map(|x| x.1),
                    }
                })
                .collect(),
            binding: &self.binding,
        };
        serde_json::to_string_pretty(&out).expect("solution serializes")
    }

    /// One row per branch; normalized columns are empty for unrated branches.
    pub fn flows_csv(&self) -> String {
        let mut out = String::from("branch,from,to,p_mva,q_mva,rate_mva,p_norm,q_norm\n");
        for f in &self.flows {
            let (pn, qn) = match normalized(f) {
                Some((p, q)) => (sig12(p), sig12(q)),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                f.branch + 1,
                f.from,
                f.to,
                sig12(f.p_mva),
                sig12(f.q_mva),
                sig12(f.rate_mva),
                pn,
                qn
            );
        }
        out
    }
}
