use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use branchpoly::caseio::{branch_limits, bundled, parse_case, CaseData};
use branchpoly::format::sig12;
use branchpoly::halfplanes::{constraints_csv, constraints_json, count_system_constraints, polygon_to_constraints};
use branchpoly::lopf::{build_model, solve_model, OpfError};
use branchpoly::polygeom::{
    build, build_irregular_with_mq, first_segment_stats, irregular_quadrant_count, CircleLimit, PolygonKind,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

const TABLE_LIMITS: [f64; 4] = [16.0, 220.0, 880.0, 1800.0];
const TABLE_ERRORS: [f64; 3] = [0.1, 0.2, 0.3];
const KINDS: [PolygonKind; 2] = [PolygonKind::Regular, PolygonKind::Irregular];

#[derive(Parser, Debug)]
#[command(name = "branchpoly", version, about = "Polygonal linearization of branch MVA limits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct OutDir {
    /// Directory for output files
    #[arg(long, env = "BRANCHPOLY_OUT_DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build one polygon and write its half-plane constraints and vertices
    Polygon {
        /// Branch rating, MVA
        #[arg(long)]
        s: f64,
        /// Linearization error, MVA
        #[arg(long)]
        e: f64,
        #[arg(long, value_parser = parse_kind)]
        kind: PolygonKind,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        out: OutDir,
    },
    /// Side-count tables
    Tables {
        #[command(subcommand)]
        which: Table,
    },
    /// Per-side error and length of an irregular polygon, plus a first-angle sweep
    Profile {
        #[arg(long)]
        s: f64,
        /// Sides per quadrant
        #[arg(long, conflicts_with = "e", required_unless_present = "e")]
        mq: Option<usize>,
        /// Error target, MVA (sets sides per quadrant)
        #[arg(long)]
        e: Option<f64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Solve the linear OPF with polygonal branch limits
    Opf {
        /// Bundled case name (2bus, case9, case30, case39, case118) or path to a case file
        #[arg(long)]
        case: String,
        #[arg(long)]
        e: f64,
        #[arg(long, value_parser = parse_kind)]
        kind: PolygonKind,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(Subcommand, Debug)]
enum Table {
    /// Side counts for the standard rating and error grid
    Table1 {
        #[command(flatten)]
        out: OutDir,
    },
    /// Total constraint rows per case
    Table2 {
        /// Bundled case names or case file paths
        #[arg(long, required = true, num_args = 1..)]
        case: Vec<String>,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

fn parse_kind(s: &str) -> Result<PolygonKind, String> {
    s.parse()
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(err: E) -> Self {
        Failure {
            code: 1,
            err: err.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory `{}`", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write `{}`", path.display()))?;
    Ok(path)
}

fn load_case(spec: &str) -> anyhow::Result<CaseData> {
    if let Some(text) = bundled::text(spec) {
        return Ok(parse_case(text)?);
    }
    let text = fs::read_to_string(spec).with_context(|| format!("cannot read case file `{spec}`"))?;
    parse_case(&text).with_context(|| format!("invalid case file `{spec}`"))
}

fn vertices_csv(poly: &branchpoly::polygeom::Polygon) -> String {
    let mut out = String::from("index,p,q\n");
    for (k, v) in poly.vertices.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", k + 1, sig12(v.p), sig12(v.q));
    }
    out
}

fn cmd_polygon(s: f64, e: f64, kind: PolygonKind, format: Format, out: &Path) -> CmdResult {
    let limit = CircleLimit::new(s, 0)?;
    let poly = build(&limit, e, kind)?;
    let set = polygon_to_constraints(&poly)?;
    match format {
        Format::Csv => {
            write_file(out, "constraints.csv", &constraints_csv([&set]))?;
            write_file(out, "vertices.csv", &vertices_csv(&poly))?;
        }
        Format::Json => {
            write_file(out, "constraints.json", &constraints_json([&set]))?;
            let verts: Vec<[f64; 2]> = poly.vertices.iter().map(|v| [v.p, v.q]).collect();
            write_file(out, "vertices.json", &serde_json::to_string_pretty(&verts)?)?;
        }
    }
    println!("{}", poly.m());
    Ok(())
}

fn cmd_table1(out: &Path) -> CmdResult {
    let mut csv = String::from("kind,s_mva,e_mva,sides\n");
    let mut text = String::new();
    let _ = write!(text, "{:>8}", "e (MVA)");
    for kind in KINDS {
        for s in TABLE_LIMITS {
            let _ = write!(
                text,
                "{:>8}",
                format!("{}{}", if kind == PolygonKind::Regular { "R" } else { "I" }, s)
            );
        }
    }
    text.push('\n');
    for e in TABLE_ERRORS {
        let _ = write!(text, "{e:>8}");
        for kind in KINDS {
            for s in TABLE_LIMITS {
                let m = branchpoly::polygeom::side_count(&CircleLimit::new(s, 0)?, e, kind)?;
                let _ = write!(text, "{m:>8}");
                let _ = writeln!(csv, "{kind},{s},{e},{m}");
            }
        }
        text.push('\n');
    }
    print!("{text}");
    write_file(out, "table1.csv", &csv)?;
    Ok(())
}

fn cmd_table2(cases: &[String], out: &Path) -> CmdResult {
    let mut columns = Vec::new();
    for spec in cases {
        let case = load_case(spec)?;
        columns.push((spec.clone(), branch_limits(&case)));
    }
    let mut csv = String::from("case,e_mva,regular,irregular\n");
    let mut text = format!("{:>8}", "e (MVA)");
    for kind in KINDS {
        for (name, _) in &columns {
            let _ = write!(
                text,
                "  {:>16}",
                format!("{name} {}", if kind == PolygonKind::Regular { "reg" } else { "irr" })
            );
        }
    }
    text.push('\n');
    for e in TABLE_ERRORS {
        let _ = write!(text, "{e:>8}");
        for kind in KINDS {
            for (_, limits) in &columns {
                let total = count_system_constraints(limits, e, kind)?;
                let _ = write!(text, "  {total:>16}");
            }
        }
        for (name, limits) in &columns {
            let reg = count_system_constraints(limits, e, PolygonKind::Regular)?;
            let irr = count_system_constraints(limits, e, PolygonKind::Irregular)?;
            let _ = writeln!(csv, "{name},{e},{reg},{irr}");
        }
        text.push('\n');
    }
    print!("{text}");
    write_file(out, "table2.csv", &csv)?;
    Ok(())
}

fn cmd_profile(s: f64, mq: Option<usize>, e: Option<f64>, out: &Path) -> CmdResult {
    let limit = CircleLimit::new(s, 0)?;
    let mq = match (mq, e) {
        (Some(mq), _) => mq,
        (None, Some(e)) => irregular_quadrant_count(&limit, e)?,
        (None, None) => return Err(anyhow!("either --mq or --e is required").into()),
    };
    let poly = build_irregular_with_mq(&limit, mq)?;
    let mut sides = String::from("side,length,sagitta,delta_theta\n");
    for (k, c) in poly.sides.iter().enumerate() {
        let _ = writeln!(
            sides,
            "{},{},{},{}",
            k + 1,
            sig12(c.length),
            sig12(c.sagitta),
            sig12(c.delta_theta)
        );
    }

    // Log grid from 1e-3 to 10 MVA, ten points per decade.
    let mut sweep = String::from("s_mva,e_mva,mq,delta_theta_1\n");
    for rating in TABLE_LIMITS {
        let lim = CircleLimit::new(rating, 0)?;
        for step in 0..=40 {
            let e = 10f64.powf(-3.0 + step as f64 / 10.0);
            let q = irregular_quadrant_count(&lim, e)?;
            let stats = first_segment_stats(&lim, q)?;
            let _ = writeln!(sweep, "{rating},{},{q},{}", sig12(e), sig12(stats.delta_theta_1));
        }
    }
    write_file(out, "profile_sides.csv", &sides)?;
    write_file(out, "profile_sweep.csv", &sweep)?;
    print!("{sides}");
    Ok(())
}

#[derive(Serialize, Default)]
struct Timings {
    parse_ms: f64,
    build_ms: f64,
    solve_ms: f64,
}

#[derive(Serialize, Default)]
struct Summary {
    objective: Option<f64>,
    polygon_rows: Option<usize>,
    lp_rows: Option<usize>,
    lp_columns: Option<usize>,
    iterations: Option<usize>,
    binding_sides: Option<usize>,
    balance_residual: Option<f64>,
}

#[derive(Serialize, Default)]
struct RunReport {
    command: Vec<String>,
    timings: Timings,
    outputs: Vec<PathBuf>,
    summary: Summary,
    error: Option<String>,
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn run_opf(case_spec: &str, e: f64, kind: PolygonKind, out: &Path, report: &mut RunReport) -> CmdResult {
    let t = Instant::now();
    let case = load_case(case_spec)?;
    report.timings.parse_ms = ms(t);

    let t = Instant::now();
    let model = build_model(&case, e, kind)?;
    report.timings.build_ms = ms(t);
    report.summary.polygon_rows = Some(model.polygon_rows);
    report.summary.lp_rows = Some(model.lp.num_rows());
    report.summary.lp_columns = Some(model.lp.num_vars());

    let t = Instant::now();
    let solved = solve_model(&model, &case);
    report.timings.solve_ms = ms(t);
    let sol = solved.map_err(|err| {
        let code = match err {
            OpfError::Infeasible(_) | OpfError::Unbounded(_) | OpfError::Lp(_) => 2,
            _ => 1,
        };
        Failure { code, err: err.into() }
    })?;

    report.summary.objective = Some(sol.objective);
    report.summary.iterations = Some(sol.iterations);
    report.summary.binding_sides = Some(sol.binding.len());
    report.summary.balance_residual = Some(sol.balance_residual);
    report
        .outputs
        .push(write_file(out, "opf_solution.json", &sol.to_json())?);
    report.outputs.push(write_file(out, "opf_flows.csv", &sol.flows_csv())?);
    println!("{}", sig12(sol.objective));
    Ok(())
}

fn cmd_opf(case: &str, e: f64, kind: PolygonKind, out: &Path) -> CmdResult {
    let mut report = RunReport {
        command: std::env::args().collect(),
        ..Default::default()
    };
    let result = run_opf(case, e, kind, out, &mut report);
    if let Err(f) = &result {
        report.error = Some(format!("{:#}", f.err));
    }
    let path = out.join("opf_report.json");
    report.outputs.push(path);
    let json = serde_json::to_string_pretty(&report).map_err(|err| anyhow!(err))?;
    let written = write_file(out, "opf_report.json", &json);
    match (result, written) {
        (Err(f), _) => Err(f),
        (Ok(()), Err(err)) => Err(err.into()),
        (Ok(()), Ok(_)) => Ok(()),
    }
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Polygon {
            s,
            e,
            kind,
            format,
            out,
        } => cmd_polygon(s, e, kind, format, &out.out),
        Command::Tables { which } => match which {
            Table::Table1 { out } => cmd_table1(&out.out),
            Table::Table2 { case, out } => cmd_table2(&case, &out.out),
        },
        Command::Profile { s, mq, e, out } => cmd_profile(s, mq, e, &out.out),
        Command::Opf { case, e, kind, out } => cmd_opf(&case, e, kind, &out.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, err }) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
