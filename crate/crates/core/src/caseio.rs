//! MATPOWER-style case files.
//!
//! Only `baseMVA` and the `bus`, `gen`, `branch` and `gencost` matrices are
//! read; every other assignment is skipped. Loads, shunts and generator
//! limits are stored per-unit on `base_mva`; branch ratings stay in MVA.
//! Out-of-service branches and generators are dropped while parsing.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polygeom::CircleLimit;

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 11;
const GENCOST_MIN_COLS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseError {
    #[error("missing `{0}` table")]
    MissingTable(&'static str),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: unknown bus {bus}")]
    UnknownBus { line: usize, bus: u32 },
    #[error("line {line}: baseMVA must be positive")]
    ZeroBaseMva { line: usize },
    #[error("no slack (type 3) bus")]
    NoSlackBus,
    #[error("line {line}: second slack bus {bus}")]
    MultipleSlackBuses { line: usize, bus: u32 },
    #[error("line {line}: unsupported cost model {model}")]
    UnsupportedCost { line: usize, model: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Pq,
    Pv,
    Slack,
}

impl BusKind {
    fn code(self) -> u8 {
        match self {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    pub pd: f64,
    pub qd: f64,
    /// Shunt conductance and susceptance, per-unit at 1 p.u. voltage.
    pub gs: f64,
    pub bs: f64,
    pub vmin: f64,
    pub vmax: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b: f64,
    /// Thermal limit in MVA; 0 means unlimited.
    pub rate_mva: f64,
    pub tap: f64,
    /// Phase shift, degrees.
    pub shift: f64,
    pub status: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gen {
    pub bus: u32,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub status: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Polynomial,
}

/// Generator cost `Σ c_k · P^k` with `P` in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostFn {
    pub kind: CostKind,
    pub startup: f64,
    pub shutdown: f64,
    /// Highest order first, as in the file.
    pub coefficients: Vec<f64>,
}

impl CostFn {
    fn coeff(&self, order: usize) -> f64 {
        let n = self.coefficients.len();
        if order < n {
            self.coefficients[n - 1 - order]
        } else {
            0.0
        }
    }

    pub fn c2(&self) -> f64 {
        self.coeff(2)
    }

    pub fn c1(&self) -> f64 {
        self.coeff(1)
    }

    pub fn c0(&self) -> f64 {
        self.coeff(0)
    }

    /// Polynomial degree, ignoring trailing zero coefficients at the high end.
    pub fn degree(&self) -> usize {
        let n = self.coefficients.len();
        (0..n).rev().find(|&k| self.coeff(k) != 0.0).unwrap_or(0)
    }

    /// Cost in $/h at `p_mw`.
    pub fn eval(&self, p_mw: f64) -> f64 {
        self.coefficients.iter().fold(0.0, |acc, c| acc * p_mw + c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseData {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub gens: Vec<Gen>,
    /// One cost per generator, same order.
    pub costs: Vec<CostFn>,
}

impl CaseData {
    pub fn slack_bus(&self) -> Option<&Bus> {
        self.buses.iter().find(|b| b.kind == BusKind::Slack)
    }

    /// Position of each bus id in `buses`.
    pub fn bus_index(&self) -> HashMap<u32, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case data serializes")
    }
}

/// One limit per in-service rated branch, in branch order; `index` is the
/// position of the branch in `case.branches`.
pub fn branch_limits(case: &CaseData) -> Vec<CircleLimit> {
    case.branches
        .iter()
        .enumerate()
        .filter(|(_, br)| br.status && br.rate_mva > 0.0)
        .map(|(i, br)| CircleLimit::new(br.rate_mva, i).expect("positive finite rating"))
        .collect()
}

/// Numeric rows tagged with their 1-based source line.
type Rows = Vec<(usize, Vec<f64>)>;

struct Table {
    rows: Rows,
}

/// Matrix or cell array still waiting for its closing delimiter.
struct OpenBlock {
    name: String,
    close: char,
    rows: Rows,
}

struct RawCase {
    base_mva: Option<(usize, f64)>,
    tables: HashMap<String, Table>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Name on the left of `=`, without any `mpc.` prefix.
fn assignment(line: &str) -> Option<(&str, &str)> {
    let (lhs, rhs) = line.split_once('=')?;
    let lhs = lhs.trim();
    let name = lhs.strip_prefix("mpc.").unwrap_or(lhs);
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    Some((name, rhs))
}

fn parse_number(tok: &str, line: usize) -> Result<f64, CaseError> {
    match tok {
        "Inf" | "inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| CaseError::Malformed {
            line,
            msg: format!("cannot parse `{tok}` as a number"),
        }),
    }
}

fn push_rows(chunk: &str, line: usize, rows: &mut Rows) -> Result<(), CaseError> {
    for part in chunk.split(';') {
        let vals = part
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| parse_number(t, line))
            .collect::<Result<Vec<_>, _>>()?;
        if !vals.is_empty() {
            rows.push((line, vals));
        }
    }
    Ok(())
}

fn scan(text: &str) -> Result<RawCase, CaseError> {
    let mut raw = RawCase {
        base_mva: None,
        tables: HashMap::new(),
    };
    let mut open: Option<OpenBlock> = None;

    for (idx, full) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut line = strip_comment(full);

        if open.is_none() {
            let Some((name, rhs)) = assignment(line) else {
                continue;
            };
            let rhs = rhs.trim_start();
            if let Some(body) = rhs.strip_prefix('[') {
                open = Some(OpenBlock {
                    name: name.to_string(),
                    close: ']',
                    rows: Vec::new(),
                });
                line = body;
            } else if let Some(body) = rhs.strip_prefix('{') {
                open = Some(OpenBlock {
                    name: name.to_string(),
                    close: '}',
                    rows: Vec::new(),
                });
                line = body;
            } else {
                if name == "baseMVA" {
                    let v = rhs.trim().trim_end_matches(';').trim();
                    raw.base_mva = Some((line_no, parse_number(v, line_no)?));
                }
                continue;
            }
        }

        let mut block = open.take().expect("block open");
        let (body, finished) = match line.find(block.close) {
            Some(i) => (&line[..i], true),
            None => (line, false),
        };
        if block.close == ']' {
            push_rows(body, line_no, &mut block.rows)?;
        }
        if !finished {
            open = Some(block);
        } else if block.close == ']' {
            raw.tables.insert(block.name, Table { rows: block.rows });
        }
    }
    if let Some(block) = open {
        return Err(CaseError::Malformed {
            line: text.lines().count(),
            msg: format!("unterminated matrix `{}`", block.name),
        });
    }
    Ok(raw)
}

fn need_cols(row: &[f64], cols: usize, table: &str, line: usize) -> Result<(), CaseError> {
    if row.len() < cols {
        return Err(CaseError::Malformed {
            line,
            msg: format!("{table} row has {} columns, expected at least {cols}", row.len()),
        });
    }
    Ok(())
}

fn bus_id(v: f64, line: usize) -> Result<u32, CaseError> {
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(CaseError::Malformed {
            line,
            msg: format!("bus number `{v}` is not a non-negative integer"),
        });
    }
    Ok(v as u32)
}

fn finite(vals: &[f64], line: usize) -> Result<(), CaseError> {
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(CaseError::Malformed {
            line,
            msg: "non-finite value".into(),
        });
    }
    Ok(())
}

/// Parse and validate a case file.
pub fn parse_case(text: &str) -> Result<CaseData, CaseError> {
    let mut raw = scan(text)?;
    let (base_line, base_mva) = raw.base_mva.ok_or(CaseError::MissingTable("baseMVA"))?;
    if !(base_mva.is_finite() && base_mva > 0.0) {
        return Err(CaseError::ZeroBaseMva { line: base_line });
    }
    let mut take = |name: &'static str| raw.tables.remove(name).ok_or(CaseError::MissingTable(name));
    let bus_t = take("bus")?;
    let gen_t = take("gen")?;
    let branch_t = take("branch")?;
    let cost_t = take("gencost")?;

    let mut buses = Vec::with_capacity(bus_t.rows.len());
    let mut ids = HashSet::new();
    let mut slack: Option<u32> = None;
    for (line, row) in &bus_t.rows {
        let line = *line;
        need_cols(row, BUS_COLS, "bus", line)?;
        finite(&row[..BUS_COLS], line)?;
        let id = bus_id(row[0], line)?;
        if !ids.insert(id) {
            return Err(CaseError::Malformed {
                line,
                msg: format!("duplicate bus {id}"),
            });
        }
        let kind = match row[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            t => {
                return Err(CaseError::Malformed {
                    line,
                    msg: format!("unsupported bus type {t}"),
                })
            }
        };
        if kind == BusKind::Slack {
            if slack.is_some() {
                return Err(CaseError::MultipleSlackBuses { line, bus: id });
            }
            slack = Some(id);
        }
        let (vmax, vmin) = (row[11], row[12]);
        if vmin > vmax {
            return Err(CaseError::Malformed {
                line,
                msg: format!("bus {id} has Vmin {vmin} above Vmax {vmax}"),
            });
        }
        buses.push(Bus {
            id,
            kind,
            pd: row[2] / base_mva,
            qd: row[3] / base_mva,
            gs: row[4] / base_mva,
            bs: row[5] / base_mva,
            vmin,
            vmax,
            base_kv: row[9],
        });
    }
    if slack.is_none() {
        return Err(CaseError::NoSlackBus);
    }

    let mut gens = Vec::new();
    let mut gen_in_service = Vec::with_capacity(gen_t.rows.len());
    for (line, row) in &gen_t.rows {
        let line = *line;
        need_cols(row, GEN_COLS, "gen", line)?;
        let bus = bus_id(row[0], line)?;
        if !ids.contains(&bus) {
            return Err(CaseError::UnknownBus { line, bus });
        }
        let status = row[7] > 0.0;
        gen_in_service.push(status);
        if !status {
            continue;
        }
        let (qmax, qmin, pmax, pmin) = (row[3], row[4], row[8], row[9]);
        if pmin > pmax || qmin > qmax {
            return Err(CaseError::Malformed {
                line,
                msg: "generator lower limit above upper limit".into(),
            });
        }
        gens.push(Gen {
            bus,
            pmin: pmin / base_mva,
            pmax: pmax / base_mva,
            qmin: qmin / base_mva,
            qmax: qmax / base_mva,
            status,
        });
    }

    let mut branches = Vec::new();
    for (line, row) in &branch_t.rows {
        let line = *line;
        need_cols(row, BRANCH_COLS, "branch", line)?;
        finite(&row[..BRANCH_COLS], line)?;
        let from = bus_id(row[0], line)?;
        let to = bus_id(row[1], line)?;
        for bus in [from, to] {
            if !ids.contains(&bus) {
                return Err(CaseError::UnknownBus { line, bus });
            }
        }
        let status = row[10] > 0.0;
        if !status {
            continue;
        }
        let (r, x, rate) = (row[2], row[3], row[5]);
        if x == 0.0 {
            return Err(CaseError::Malformed {
                line,
                msg: format!("branch {from}-{to} has zero reactance"),
            });
        }
        if rate < 0.0 {
            return Err(CaseError::Malformed {
                line,
                msg: format!("branch {from}-{to} has negative rating"),
            });
        }
        branches.push(Branch {
            from,
            to,
            r,
            x,
            b: row[4],
            rate_mva: rate,
            tap: row[8],
            shift: row[9],
            status,
        });
    }

    if cost_t.rows.len() < gen_in_service.len() {
        return Err(CaseError::Malformed {
            line: cost_t.rows.last().map_or(0, |r| r.0),
            msg: format!(
                "gencost has {} rows for {} generators",
                cost_t.rows.len(),
                gen_in_service.len()
            ),
        });
    }
    let mut costs = Vec::with_capacity(gens.len());
    // Rows past the generator count describe reactive costs; they are not used.
    for ((line, row), &status) in cost_t.rows.iter().zip(&gen_in_service) {
        let line = *line;
        need_cols(row, GENCOST_MIN_COLS, "gencost", line)?;
        if row[0] != 2.0 {
            return Err(CaseError::UnsupportedCost { line, model: row[0] });
        }
        let n = row[3];
        if n.fract() != 0.0 || n < 0.0 {
            return Err(CaseError::Malformed {
                line,
                msg: format!("cost coefficient count `{n}` is not a count"),
            });
        }
        let n = n as usize;
        need_cols(row, GENCOST_MIN_COLS + n, "gencost", line)?;
        finite(&row[..GENCOST_MIN_COLS + n], line)?;
        if status {
            costs.push(CostFn {
                kind: CostKind::Polynomial,
                startup: row[1],
                shutdown: row[2],
                coefficients: row[4..4 + n].to_vec(),
            });
        }
    }

    Ok(CaseData {
        base_mva,
        buses,
        branches,
        gens,
        costs,
    })
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Emit `case` as a case file that [`parse_case`] reads back to the same data.
pub fn write_case(case: &CaseData) -> String {
    let base = case.base_mva;
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = case_export");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", num(base));
    let _ = writeln!(out, "\n%% bus data\nmpc.bus = [");
    for b in &case.buses {
        let cols = [
            b.id as f64,
            b.kind.code() as f64,
            b.pd * base,
            b.qd * base,
            b.gs * base,
            b.bs * base,
            1.0,
            1.0,
            0.0,
            b.base_kv,
            1.0,
            b.vmax,
            b.vmin,
        ];
        let _ = writeln!(out, "\t{};", cols.map(num).join("\t"));
    }
    let _ = writeln!(out, "];\n\n%% generator data\nmpc.gen = [");
    for g in &case.gens {
        let cols = [
            g.bus as f64,
            0.0,
            0.0,
            g.qmax * base,
            g.qmin * base,
            1.0,
            base,
            if g.status { 1.0 } else { 0.0 },
            g.pmax * base,
            g.pmin * base,
        ];
        let _ = writeln!(out, "\t{};", cols.map(num).join("\t"));
    }
    let _ = writeln!(out, "];\n\n%% branch data\nmpc.branch = [");
    for br in &case.branches {
        let cols = [
            br.from as f64,
            br.to as f64,
            br.r,
            br.x,
            br.b,
            br.rate_mva,
            br.rate_mva,
            br.rate_mva,
            br.tap,
            br.shift,
            if br.status { 1.0 } else { 0.0 },
        ];
        let _ = writeln!(out, "\t{};", cols.map(num).join("\t"));
    }
    let _ = writeln!(out, "];\n\n%% generator cost data\nmpc.gencost = [");
    for c in &case.costs {
        let mut cols = vec![2.0, c.startup, c.shutdown, c.coefficients.len() as f64];
        cols.extend(&c.coefficients);
        let _ = writeln!(out, "\t{};", cols.into_iter().map(num).collect::<Vec<_>>().join("\t"));
    }
    let _ = writeln!(out, "];");
    out
}

/// Case files shipped with the crate.
pub mod bundled {
    pub const NAMES: [&str; 5] = ["2bus", "case9", "case30", "case39", "case118"];

    pub fn text(name: &str) -> Option<&'static str> {
        Some(match name {
            "2bus" => include_str!("../data/2bus.m"),
            "case9" => include_str!("../data/case9.m"),
            "case30" => include_str!("../data/case30.m"),
            "case39" => include_str!("../data/case39.m"),
            "case118" => include_str!("../data/case118.m"),
            _ => return None,
        })
    }

    pub fn load(name: &str) -> Option<super::CaseData> {
        text(name).map(|t| super::parse_case(t).expect("bundled case parses"))
    }
}
