//! Dense bounded-variable primal simplex.
//!
//! Problems have the form
//!
//! ```text
//! minimize    cᵀx
//! subject to  A_eq x  = b_eq
//!             A_ge x ≥ b_ge
//!             l ≤ x ≤ u          (either bound may be infinite)
//! ```
//!
//! Every row `i` gets a logical variable `s_i = a_iᵀx - b_i` with bounds
//! `[0, 0]` (equalities) or `[0, ∞)` (inequalities). The solver keeps a
//! condensed tableau expressing each basic variable as a linear function of
//! the nonbasic ones, which is `rows × structurals` in size. That suits the
//! OPF problems here, which carry thousands of half-plane rows over a few
//! hundred columns.
//!
//! Phase 1 minimizes the sum of bound infeasibilities of basic variables
//! (no artificial columns); phase 2 minimizes the objective. Dantzig pricing
//! is used until the objective stalls, then Bland's rule until progress
//! resumes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const STALL_LIMIT: usize = 50;
const RATIO_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("{what} has {got} coefficients, expected {expected}")]
    DimensionMismatch { what: String, got: usize, expected: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("variable {index} has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { index: usize, lower: f64, upper: f64 },
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl Row {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub equalities: Vec<Row>,
    /// Rows read as `coeffs · x ≥ rhs`.
    pub inequalities: Vec<Row>,
}

impl LpProblem {
    /// Empty problem over `n` variables, all free with zero cost.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            equalities: Vec::new(),
            inequalities: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.equalities.len() + self.inequalities.len()
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64) -> usize {
        self.equalities.push(Row::new(coeffs, rhs));
        self.equalities.len() - 1
    }

    pub fn add_ge(&mut self, coeffs: Vec<f64>, rhs: f64) -> usize {
        self.inequalities.push(Row::new(coeffs, rhs));
        self.inequalities.len() - 1
    }

    /// All rows, equalities first.
    pub fn rows(&self) -> impl Iterator<Item = &Row> {
        self.equalities.iter().chain(&self.inequalities)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        for (what, len) in [("lower bounds", self.lower.len()), ("upper bounds", self.upper.len())] {
            if len != n {
                return Err(LpError::DimensionMismatch {
                    what: what.into(),
                    got: len,
                    expected: n,
                });
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective".into()));
        }
        for (i, row) in self.rows().enumerate() {
            if row.coeffs.len() != n {
                return Err(LpError::DimensionMismatch {
                    what: format!("row {i}"),
                    got: row.coeffs.len(),
                    expected: n,
                });
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(LpError::NonFinite(format!("row {i}")));
            }
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(LpError::NonFinite(format!("bounds of variable {j}")));
            }
            if l > u {
                return Err(LpError::InvertedBounds {
                    index: j,
                    lower: l,
                    upper: u,
                });
            }
        }
        Ok(())
    }

    /// Plain-text listing of the problem, for debugging.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "vars {} eq {} ge {}",
            self.num_vars(),
            self.equalities.len(),
            self.inequalities.len()
        );
        let _ = writeln!(out, "# var\tcost\tlower\tupper");
        for j in 0..self.num_vars() {
            let _ = writeln!(out, "x{j}\t{}\t{}\t{}", self.objective[j], self.lower[j], self.upper[j]);
        }
        let _ = writeln!(out, "# row\tsense\trhs\tterms");
        for (tag, rows) in [("=", &self.equalities), (">=", &self.inequalities)] {
            for (i, row) in rows.iter().enumerate() {
                let terms: Vec<String> = row
                    .coeffs
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| **a != 0.0)
                    .map(|(j, a)| format!("{a}*x{j}"))
                    .collect();
                let _ = writeln!(out, "r{i}\t{tag}\t{}\t{}", row.rhs, terms.join(" + "));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// `cᵀx` at the returned point (meaningful only when optimal).
    pub objective: f64,
    pub x: Vec<f64>,
    /// `a_iᵀx` for every row, equalities first.
    pub row_activity: Vec<f64>,
    pub iterations: usize,
    /// When infeasible: rows (equalities first) still violated at the end of phase 1.
    pub infeasible_rows: Vec<usize>,
    /// When infeasible: variables still outside their bounds at the end of phase 1.
    pub infeasible_vars: Vec<usize>,
}

/// Solve `p`; deterministic for identical input.
pub fn solve(p: &LpProblem) -> Result<LpSolution, LpError> {
    p.validate()?;
    let mut tab = Tableau::new(p);
    let status = tab.run()?;
    Ok(tab.into_solution(p, status))
}

struct Tableau {
    n: usize,
    m: usize,
    /// Row-major `m × n`: `x[basis[r]] = Σ_k t[r·n + k] · x[nonbasic[k]] + const`.
    t: Vec<f64>,
    basis: Vec<usize>,
    nonbasic: Vec<usize>,
    /// Values of all `n + m` variables (structural first, then row logicals).
    x: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Feasibility,
    Optimality,
}

impl Tableau {
    fn new(p: &LpProblem) -> Self {
        let n = p.num_vars();
        let m = p.num_rows();
        let mut t = vec![0.0; m * n];
        let mut lower = p.lower.clone();
        let mut upper = p.upper.clone();
        let mut x = Vec::with_capacity(n + m);

        for j in 0..n {
            x.push(initial_value(p.lower[j], p.upper[j]));
        }
        for (i, row) in p.rows().enumerate() {
            let big = row.coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
            let scale = if big > 0.0 { 1.0 / big } else { 1.0 };
            let dst = &mut t[i * n..(i + 1) * n];
            for (d, a) in dst.iter_mut().zip(&row.coeffs) {
                *d = a * scale;
            }
            let value = dst.iter().zip(&x[..n]).map(|(a, v)| a * v).sum::<f64>() - row.rhs * scale;
            x.push(value);
            lower.push(0.0);
            upper.push(if i < p.equalities.len() { 0.0 } else { f64::INFINITY });
        }
        let mut cost = p.objective.clone();
        cost.resize(n + m, 0.0);

        Self {
            n,
            m,
            t,
            basis: (n..n + m).collect(),
            nonbasic: (0..n).collect(),
            x,
            lower,
            upper,
            cost,
            iterations: 0,
            max_iterations: 50_000 + 20 * (n + m),
        }
    }

    fn infeasibility(&self, var: usize) -> f64 {
        let v = self.x[var];
        if v < self.lower[var] - FEAS_TOL {
            self.lower[var] - v
        } else if v > self.upper[var] + FEAS_TOL {
            v - self.upper[var]
        } else {
            0.0
        }
    }

    /// Gradient weight of each basic row for the current phase.
    fn basic_weights(&self) -> (Phase, Vec<f64>) {
        let mut weights = vec![0.0; self.m];
        let mut infeasible = false;
        for (r, &var) in self.basis.iter().enumerate() {
            let v = self.x[var];
            if v < self.lower[var] - FEAS_TOL {
                weights[r] = -1.0;
                infeasible = true;
            } else if v > self.upper[var] + FEAS_TOL {
                weights[r] = 1.0;
                infeasible = true;
            }
        }
        if infeasible {
            return (Phase::Feasibility, weights);
        }
        for (r, &var) in self.basis.iter().enumerate() {
            weights[r] = self.cost[var];
        }
        (Phase::Optimality, weights)
    }

    fn reduced_costs(&self, phase: Phase, weights: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut d: Vec<f64> = match phase {
            Phase::Feasibility => vec![0.0; n],
            Phase::Optimality => self.nonbasic.iter().map(|&v| self.cost[v]).collect(),
        };
        for (r, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                for (dk, tk) in d.iter_mut().zip(&self.t[r * n..(r + 1) * n]) {
                    *dk += w * tk;
                }
            }
        }
        d
    }

    /// Entering column and direction (+1 increase, -1 decrease).
    fn choose_entering(&self, d: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (k, &dk) in d.iter().enumerate() {
            let var = self.nonbasic[k];
            let (l, u, v) = (self.lower[var], self.upper[var], self.x[var]);
            let dir = if dk < -OPT_TOL && v < u {
                1.0
            } else if dk > OPT_TOL && v > l {
                -1.0
            } else {
                continue;
            };
            let better = match best {
                None => true,
                Some((bk, _, bd)) => {
                    if bland {
                        var < self.nonbasic[bk]
                    } else {
                        dk.abs() > bd
                    }
                }
            };
            if better {
                best = Some((k, dir, dk.abs()));
            }
        }
        best.map(|(k, dir, _)| (k, dir))
    }

    /// Step length and blocking row (`None` means the entering variable hits its own bound).
    fn ratio_test(&self, k: usize, dir: f64, bland: bool) -> (f64, Option<(usize, f64)>) {
        let n = self.n;
        let entering = self.nonbasic[k];
        let mut step = self.upper[entering] - self.lower[entering];
        let mut block: Option<(usize, f64)> = None;
        let mut block_pivot = 0.0f64;

        for r in 0..self.m {
            let tk = self.t[r * n + k];
            if tk.abs() <= PIVOT_TOL {
                continue;
            }
            let rate = tk * dir;
            let var = self.basis[r];
            let (l, u, v) = (self.lower[var], self.upper[var], self.x[var]);
            let target = if rate > 0.0 {
                if v < l - FEAS_TOL {
                    l
                } else if v <= u + FEAS_TOL {
                    u
                } else {
                    continue;
                }
            } else if v > u + FEAS_TOL {
                u
            } else if v >= l - FEAS_TOL {
                l
            } else {
                continue;
            };
            if !target.is_finite() {
                continue;
            }
            let ratio = ((target - v) / rate).max(0.0);
            let replace = if ratio < step - RATIO_TIE {
                true
            } else if ratio <= step + RATIO_TIE {
                // ties with a bound flip keep the flip
                match block {
                    None => false,
                    Some((br, _)) if bland => var < self.basis[br],
                    Some(_) => tk.abs() > block_pivot,
                }
            } else {
                false
            };
            if replace {
                step = ratio;
                block = Some((r, target));
                block_pivot = tk.abs();
            }
        }
        (step, block)
    }

    fn pivot(&mut self, r: usize, k: usize) {
        let n = self.n;
        let p = self.t[r * n + k];
        let mut prow: Vec<f64> = self.t[r * n..(r + 1) * n].iter().map(|a| -a / p).collect();
        prow[k] = 1.0 / p;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let tik = self.t[i * n + k];
            if tik == 0.0 {
                continue;
            }
            let row = &mut self.t[i * n..(i + 1) * n];
            for (a, pr) in row.iter_mut().zip(&prow) {
                *a += tik * pr;
            }
            row[k] = tik * prow[k];
        }
        self.t[r * n..(r + 1) * n].copy_from_slice(&prow);
        std::mem::swap(&mut self.basis[r], &mut self.nonbasic[k]);
    }

    fn run(&mut self) -> Result<LpStatus, LpError> {
        let mut stall = 0usize;
        let mut last_score = f64::INFINITY;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            let (phase, weights) = self.basic_weights();
            let d = self.reduced_costs(phase, &weights);
            let bland = stall >= STALL_LIMIT;
            let Some((k, dir)) = self.choose_entering(&d, bland) else {
                return Ok(match phase {
                    Phase::Feasibility => LpStatus::Infeasible,
                    Phase::Optimality => LpStatus::Optimal,
                });
            };
            let (step, block) = self.ratio_test(k, dir, bland);
            if !step.is_finite() {
                if phase == Phase::Optimality {
                    return Ok(LpStatus::Unbounded);
                }
                // A phase-1 direction always meets a breakpoint; nothing sensible to do.
                return Ok(LpStatus::Infeasible);
            }
            self.iterations += 1;

            let entering = self.nonbasic[k];
            let n = self.n;
            if step > 0.0 {
                self.x[entering] += dir * step;
                for r in 0..self.m {
                    let tk = self.t[r * n + k];
                    if tk != 0.0 {
                        self.x[self.basis[r]] += tk * dir * step;
                    }
                }
            }
            match block {
                None => {
                    // bound flip
                    self.x[entering] = if dir > 0.0 {
                        self.upper[entering]
                    } else {
                        self.lower[entering]
                    };
                }
                Some((r, target)) => {
                    let leaving = self.basis[r];
                    self.pivot(r, k);
                    self.x[leaving] = target;
                }
            }

            let score = self.score(phase);
            if score < last_score - 1e-12 * (1.0 + last_score.abs()) {
                stall = 0;
            } else {
                stall += 1;
            }
            last_score = score;
        }
    }

    fn score(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Feasibility => self.basis.iter().map(|&v| self.infeasibility(v)).sum(),
            Phase::Optimality => self.x[..self.n].iter().zip(&self.cost).map(|(x, c)| x * c).sum(),
        }
    }

    fn into_solution(self, p: &LpProblem, status: LpStatus) -> LpSolution {
        let x: Vec<f64> = self.x[..self.n].to_vec();
        let row_activity: Vec<f64> = p.rows().map(|row| row.activity(&x)).collect();
        let objective = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let (mut infeasible_rows, mut infeasible_vars) = (Vec::new(), Vec::new());
        if status == LpStatus::Infeasible {
            for var in 0..self.n + self.m {
                if self.infeasibility(var) > 0.0 {
                    if var < self.n {
                        infeasible_vars.push(var);
                    } else {
                        infeasible_rows.push(var - self.n);
                    }
                }
            }
        }
        LpSolution {
            status,
            objective,
            x,
            row_activity,
            iterations: self.iterations,
            infeasible_rows,
            infeasible_vars,
        }
    }
}

fn initial_value(lower: f64, upper: f64) -> f64 {
    if lower.is_finite() && upper.is_finite() {
        // the bound nearer zero
        if lower.abs() <= upper.abs() {
            lower
        } else {
            upper
        }
    } else if lower.is_finite() {
        lower
    } else if upper.is_finite() {
        upper
    } else {
        0.0
    }
}
