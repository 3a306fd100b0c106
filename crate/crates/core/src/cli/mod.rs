//! Command-line front end.

pub mod parse;

use std::io::{Read, Write};
use std::path::PathBuf;

use clap::Parser;
use serde::Serialize;

use crate::driver::{
    minimizers_at_infinity, solve_pop, sphere_problem, DriverOptions, HierarchyReport, InfinityReport, KindChoice,
};
use crate::sdp::SdpStatus;
use parse::parse_problem_file;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hompop", version, about = "Moment-SOS relaxations for polynomial optimization")]
pub struct Args {
    /// Problem file (`-` reads stdin).
    pub file: PathBuf,
    /// Solve a single order.
    #[arg(long, conflicts_with_all = ["max_order", "min_order"])]
    pub order: Option<u32>,
    /// Lowest order (defaults to the smallest order that fits).
    #[arg(long)]
    pub min_order: Option<u32>,
    /// Highest order (defaults to the lowest plus 2).
    #[arg(long)]
    pub max_order: Option<u32>,
    /// homog, even, denom, power:L or standard.
    #[arg(long, default_value = "homog", value_parser = parse_kind)]
    pub kind: KindChoice,
    /// Compute minimizers at infinity instead of running the hierarchy.
    #[arg(long)]
    pub infinity: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub tol_gap: f64,
    #[arg(long, default_value_t = crate::extract::DEFAULT_RANK_TOL)]
    pub tol_rank: f64,
    /// Threshold on the first coordinate separating regular atoms from atoms at infinity.
    #[arg(long, default_value_t = crate::extract::DEFAULT_TAU_TOL)]
    pub tol_atom: f64,
    /// Compact JSON (the default).
    #[arg(long, conflicts_with = "pretty")]
    pub json: bool,
    /// Human-readable summary.
    #[arg(long)]
    pub pretty: bool,
    /// Write each SDP in SDPA sparse format.
    #[arg(long)]
    pub dump_sdpa: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop on flat truncation without checking optimality conditions.
    #[arg(long)]
    pub no_verify: bool,
}

fn parse_kind(s: &str) -> Result<KindChoice, String> {
    KindChoice::parse(s).ok_or_else(|| format!("unknown kind `{}`", s))
}

#[derive(Serialize)]
struct HierarchyOutput<'a> {
    problem_echo: String,
    #[serde(flatten)]
    report: &'a HierarchyReport,
}

#[derive(Serialize)]
struct InfinityOutput<'a> {
    problem_echo: String,
    infinity: &'a InfinityReport,
}

fn driver_options(a: &Args) -> DriverOptions {
    let mut o = DriverOptions {
        kind: a.kind,
        k_min: a.order.or(a.min_order),
        k_max: a.order.or(a.max_order),
        rank_tol: a.tol_rank,
        tau_tol: a.tol_atom,
        verify: !a.no_verify,
        dump_sdpa: a.dump_sdpa.clone(),
        ..DriverOptions::default()
    };
    o.sdp.gap_tol = a.tol_gap;
    o.sdp.seed = a.seed;
    o
}

fn fmt_point(p: &[f64]) -> String {
    let v: Vec<String> = p.iter().map(|x| format!("{:.4}", x)).collect();
    format!("({})", v.join(", "))
}

fn pretty_hierarchy(r: &HierarchyReport) -> String {
    let mut s = format!("kind {}\n", r.kind);
    for rec in &r.records {
        s.push_str(&format!(
            "k={} status {} f_k {:.8} f_k' {:.8} flat_t {}\n",
            rec.k,
            rec.status.as_str(),
            rec.f_k,
            rec.f_k_prime,
            rec.flat_t.map_or("-".into(), |t| t.to_string())
        ));
        for m in &rec.minimizers {
            s.push_str(&format!("  minimizer {} value {:.6}\n", fmt_point(&m.point), m.value));
        }
        for p in &rec.minimizers_at_infinity {
            s.push_str(&format!("  at infinity {}\n", fmt_point(&p.point)));
        }
        for c in &rec.optcond {
            s.push_str(&format!(
                "  optcond {:?} {}: licq {} scc {} sosc {}\n",
                c.location_kind,
                fmt_point(&c.point),
                c.licq,
                c.scc,
                c.sosc
            ));
        }
    }
    let f = &r.summary;
    s.push_str(&format!(
        "best bound {}\n{}\n",
        f.best_bound.map_or("none".into(), |b| format!("{:.8}", b)),
        f.diagnosis
    ));
    s
}

fn pretty_infinity(r: &InfinityReport) -> String {
    let mut s = format!(
        "k={} status {} bound {}\n",
        r.k,
        r.status.as_str(),
        r.bound.map_or("none".into(), |b| format!("{:.6e}", b))
    );
    for p in &r.points {
        s.push_str(&format!("  at infinity {}\n", fmt_point(&p.point)));
    }
    for n in &r.notes {
        s.push_str(&format!("  note: {}\n", n));
    }
    s
}

/// Run the command line `argv` (program name first), writing the report to
/// `out` and diagnostics to `err`. Returns the exit code.
pub fn run<W: Write, E: Write>(argv: &[String], out: &mut W, err: &mut E) -> i32 {
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    let text = if args.file.as_os_str() == "-" {
        let mut s = String::new();
        if let Err(e) = std::io::stdin().read_to_string(&mut s) {
            let _ = writeln!(err, "error: reading stdin: {}", e);
            return EXIT_PARSE;
        }
        s
    } else {
        match std::fs::read_to_string(&args.file) {
            Ok(s) => s,
            Err(e) => {
                let _ = writeln!(err, "error: {}: {}", args.file.display(), e);
                return EXIT_PARSE;
            }
        }
    };
    let file = match parse_problem_file(&text) {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {}", args.file.display(), e);
            return EXIT_PARSE;
        }
    };
    let opts = driver_options(&args);
    let echo = file.to_text();
    let (body, code) = if args.infinity {
        let k = args
            .order
            .or(args.min_order)
            .unwrap_or_else(|| sphere_problem(&file.problem).half_degree().max(1));
        match minimizers_at_infinity(&file.problem, k, &opts) {
            Ok(r) => {
                let code = if r.status == SdpStatus::Optimal || r.bound.is_some() {
                    EXIT_OK
                } else {
                    EXIT_SOLVER
                };
                let body = if args.pretty {
                    pretty_infinity(&r)
                } else {
                    serde_json::to_string(&InfinityOutput {
                        problem_echo: echo,
                        infinity: &r,
                    })
                    .expect("report serializes")
                };
                (body, code)
            }
            Err(e) => {
                let _ = writeln!(err, "error: {}", e);
                return EXIT_SOLVER;
            }
        }
    } else {
        match solve_pop(&file.problem, &opts) {
            Ok(r) => {
                let code = if r.any_success() { EXIT_OK } else { EXIT_SOLVER };
                let body = if args.pretty {
                    pretty_hierarchy(&r)
                } else {
                    serde_json::to_string(&HierarchyOutput {
                        problem_echo: echo,
                        report: &r,
                    })
                    .expect("report serializes")
                };
                (body, code)
            }
            Err(e) => {
                let _ = writeln!(err, "error: {}", e);
                return EXIT_SOLVER;
            }
        }
    };
    let _ = writeln!(out, "{}", body.trim_end());
    code
}
