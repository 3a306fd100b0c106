//! Order loop of the hierarchy: assemble, solve, test flatness, extract,
//! classify and verify, plus the sphere problem for minimizers at infinity.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::extract::{
    classify, extract_atoms, flat_extension, flat_truncation, fold_antipodes, AtomSet, DEFAULT_RANK_TOL,
    DEFAULT_TAU_TOL,
};
use crate::optcond::{check_at_infinity, check_at_infinity_even, check_regular, OptCondReport, OptCondTol};
use crate::poly::{Polynomial, PopProblem};
use crate::relax::{assemble, sos_certificate_from_dual, HierarchyKind, MomentRelaxation, RelaxError};
use crate::sdp::{solve_with_restarts, SdpError, SdpOptions, SdpSolution, SdpStatus};

pub const UNATTAINED: &str = "optimum likely unattained";

const DISCLAIMER: &str = "bounds are valid lower bounds; exactness assumes the feasible set is closed at infinity, which is not checked";

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("order range is empty: k_min {k_min} > k_max {k_max}")]
    EmptyRange { k_min: u32, k_max: u32 },
    #[error("kind {0} is not defined at order {1}")]
    KindUndefined(String, u32),
}

/// Relaxation family selected for a run. The denominator power follows the
/// order as `m = k - ceil(d / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindChoice {
    Homogenized,
    HomogenizedEven,
    Denominator,
    PowerX0(u32),
    StandardLasserre,
}

impl KindChoice {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "homog" => Some(KindChoice::Homogenized),
            "even" => Some(KindChoice::HomogenizedEven),
            "denom" => Some(KindChoice::Denominator),
            "standard" => Some(KindChoice::StandardLasserre),
            _ => s
                .strip_prefix("power:")
                .and_then(|l| l.parse().ok())
                .map(KindChoice::PowerX0),
        }
    }

    pub fn name(&self) -> String {
        match self {
            KindChoice::Homogenized => "homog".into(),
            KindChoice::HomogenizedEven => "even".into(),
            KindChoice::Denominator => "denom".into(),
            KindChoice::PowerX0(l) => format!("power:{}", l),
            KindChoice::StandardLasserre => "standard".into(),
        }
    }

    pub fn at_order(&self, k: u32, d: u32) -> Option<HierarchyKind> {
        Some(match self {
            KindChoice::Homogenized => HierarchyKind::Homogenized,
            KindChoice::HomogenizedEven => HierarchyKind::HomogenizedEven,
            KindChoice::Denominator => HierarchyKind::Denominator(k.checked_sub(d.div_ceil(2))?),
            KindChoice::PowerX0(l) => HierarchyKind::PowerX0(*l),
            KindChoice::StandardLasserre => HierarchyKind::StandardLasserre,
        })
    }

    /// Smallest order at which every polynomial of the relaxation fits.
    pub fn min_order(&self, prob: &PopProblem) -> u32 {
        let base = prob.half_degree().max(1);
        match self {
            KindChoice::PowerX0(l) => base.max(l + prob.objective.degree().div_ceil(2)),
            _ => base,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DriverOptions {
    pub kind: KindChoice,
    pub k_min: Option<u32>,
    /// Defaults to `k_min + 2`.
    pub k_max: Option<u32>,
    pub rank_tol: f64,
    pub tau_tol: f64,
    /// Relative tolerance for matching minimizer values to the bound.
    pub value_tol: f64,
    /// Feasibility and active-set tolerance at extracted points.
    pub feas_tol: f64,
    /// Non-optimal solves whose merit is below this still get extraction.
    pub reduced_accuracy: f64,
    /// Require the optimality conditions at every regular minimizer before
    /// stopping early.
    pub verify: bool,
    pub sdp: SdpOptions,
    /// SDPA dump target; with several orders `.k<K>` is appended.
    pub dump_sdpa: Option<PathBuf>,
}

impl Default for DriverOptions {
    fn default() -> Self {
        DriverOptions {
            kind: KindChoice::Homogenized,
            k_min: None,
            k_max: None,
            rank_tol: DEFAULT_RANK_TOL,
            tau_tol: DEFAULT_TAU_TOL,
            value_tol: 1e-4,
            feas_tol: 1e-4,
            reduced_accuracy: 1e-6,
            verify: true,
            sdp: SdpOptions::default(),
            dump_sdpa: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Minimizer {
    pub point: Vec<f64>,
    pub value: f64,
    pub weight: f64,
    /// Largest constraint violation at `point`.
    pub violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InfinityPoint {
    pub point: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderRecord {
    pub k: u32,
    pub kind: String,
    /// Dual (SOS side) objective.
    pub f_k: f64,
    /// Primal (moment side) objective.
    pub f_k_prime: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    pub attempts: usize,
    pub rel_gap: f64,
    /// Not optimal, but accurate enough to attempt extraction.
    pub reduced_accuracy: bool,
    pub bound_active: bool,
    pub flat_t: Option<u32>,
    pub atoms: Option<AtomSet>,
    pub minimizers: Vec<Minimizer>,
    pub minimizers_at_infinity: Vec<InfinityPoint>,
    pub optcond: Vec<OptCondReport>,
    pub certificate_residual: Option<f64>,
    pub converged: bool,
    pub verified: bool,
    pub notes: Vec<String>,
}

impl OrderRecord {
    fn trusted(&self) -> bool {
        self.status == SdpStatus::Optimal || self.reduced_accuracy
    }

    /// Bound contributed by this order, if any.
    pub fn bound(&self) -> Option<f64> {
        match self.status {
            SdpStatus::Optimal => Some(self.f_k),
            SdpStatus::NumericalTrouble | SdpStatus::IterLimit => {
                if self.reduced_accuracy {
                    Some(self.f_k)
                } else {
                    Some(self.f_k.min(self.f_k_prime))
                }
            }
            SdpStatus::PrimalInfeasible | SdpStatus::DualInfeasible => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalSummary {
    pub best_bound: Option<f64>,
    pub converged: bool,
    pub verified: bool,
    pub convergence_order: Option<u32>,
    pub diagnosis: String,
    pub disclaimer: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HierarchyReport {
    pub kind: String,
    pub records: Vec<OrderRecord>,
    #[serde(rename = "final")]
    pub summary: FinalSummary,
}

impl HierarchyReport {
    /// Some order produced an optimal or reduced-accuracy solve.
    pub fn any_success(&self) -> bool {
        self.records
            .iter()
            .any(|r| r.trusted() || matches!(r.status, SdpStatus::PrimalInfeasible | SdpStatus::DualInfeasible))
    }
}

fn merit(sol: &SdpSolution) -> f64 {
    sol.rel_gap.max(sol.primal_infeas).max(sol.dual_infeas)
}

fn dump_path(base: &Path, k: u32, several: bool) -> PathBuf {
    if several {
        let mut s = base.as_os_str().to_owned();
        s.push(format!(".k{}", k));
        PathBuf::from(s)
    } else {
        base.to_path_buf()
    }
}

/// Run the hierarchy over `k_min..=k_max`, stopping at the first converged
/// (and, unless disabled, verified) order.
pub fn solve_pop(prob: &PopProblem, opts: &DriverOptions) -> Result<HierarchyReport, DriverError> {
    let d = prob.objective.degree();
    let k_min = opts.k_min.unwrap_or_else(|| opts.kind.min_order(prob));
    let k_max = opts.k_max.unwrap_or(k_min + 2);
    if k_min > k_max {
        return Err(DriverError::EmptyRange { k_min, k_max });
    }
    let mut records = Vec::new();
    for k in k_min..=k_max {
        let kind = opts
            .kind
            .at_order(k, d)
            .ok_or_else(|| DriverError::KindUndefined(opts.kind.name(), k))?;
        let rel = match assemble(kind, prob, k) {
            Ok(r) => r,
            Err(RelaxError::OrderTooSmall { .. }) if k < k_max => continue,
            Err(e) => return Err(e.into()),
        };
        let rec = solve_order(prob, &rel, opts, k_min != k_max)?;
        let stop = rec.converged && (rec.verified || !opts.verify);
        records.push(rec);
        if stop {
            break;
        }
    }
    let summary = summarize(&records, opts);
    Ok(HierarchyReport {
        kind: opts.kind.name(),
        records,
        summary,
    })
}

fn solve_order(
    prob: &PopProblem,
    rel: &MomentRelaxation,
    opts: &DriverOptions,
    several: bool,
) -> Result<OrderRecord, DriverError> {
    let k = rel.order;
    let red = rel.to_sdp();
    if let Some(base) = &opts.dump_sdpa {
        let file = std::fs::File::create(dump_path(base, k, several)).map_err(SdpError::from)?;
        red.instance.write_sdpa(std::io::BufWriter::new(file))?;
    }
    let sol = solve_with_restarts(&red.instance, &opts.sdp)?;
    let reduced_accuracy =
        sol.status != SdpStatus::Optimal && !sol.bound_active && merit(&sol) <= opts.reduced_accuracy;
    let mut rec = OrderRecord {
        k,
        kind: rel.kind.name(),
        f_k: sol.dual_obj,
        f_k_prime: sol.primal_obj,
        status: sol.status,
        iterations: sol.iterations,
        attempts: sol.attempts,
        rel_gap: sol.rel_gap,
        reduced_accuracy,
        bound_active: sol.bound_active,
        flat_t: None,
        atoms: None,
        minimizers: Vec::new(),
        minimizers_at_infinity: Vec::new(),
        optcond: Vec::new(),
        certificate_residual: None,
        converged: false,
        verified: false,
        notes: Vec::new(),
    };
    if rec.trusted() {
        match sos_certificate_from_dual(rel, &red, &sol) {
            Ok(c) => rec.certificate_residual = Some(c.residual_max),
            Err(e) => rec.notes.push(format!("certificate: {}", e)),
        }
    }
    if !rec.trusted() {
        return Ok(rec);
    }
    if reduced_accuracy {
        rec.notes.push(format!("reduced accuracy solve (merit {:.2e})", merit(&sol)));
    }
    if matches!(rel.kind, HierarchyKind::Denominator(_)) {
        return Ok(rec);
    }

    let t = flat_truncation(&rel.index, &sol.y, rel.d_k, k, opts.rank_tol)
        .or_else(|| flat_extension(&rel.index, &sol.y, k, opts.rank_tol));
    rec.flat_t = t;
    let Some(t) = t else {
        return Ok(rec);
    };
    let atoms = match extract_atoms(&rel.index, &sol.y, t, opts.rank_tol, opts.sdp.seed) {
        Ok(a) => a,
        Err(e) => {
            rec.notes.push(format!("extraction: {}", e));
            return Ok(rec);
        }
    };
    let value = |u: &[f64]| prob.objective.eval(u).unwrap_or(f64::NAN);
    let violation = |u: &[f64]| prob.max_violation(u).unwrap_or(f64::INFINITY);
    let minimizers: Vec<Minimizer> = if rel.kind.is_homogenized() {
        let atoms = if rel.kind == HierarchyKind::HomogenizedEven {
            fold_antipodes(atoms, opts.tau_tol)
        } else {
            atoms
        };
        let set = match classify(&atoms, rel.nu.degree(), opts.tau_tol) {
            Ok(s) => s,
            Err(e) => {
                rec.notes.push(format!("classification: {}", e));
                return Ok(rec);
            }
        };
        rec.minimizers_at_infinity = set
            .at_infinity
            .iter()
            .map(|p| InfinityPoint {
                point: p.point.clone(),
                weight: p.weight,
            })
            .collect();
        let m = set
            .regular
            .iter()
            .map(|p| Minimizer {
                value: value(&p.point),
                violation: violation(&p.point),
                point: p.point.clone(),
                weight: p.weight,
            })
            .collect();
        rec.atoms = Some(set);
        m
    } else {
        atoms
            .iter()
            .map(|a| Minimizer {
                value: value(&a.point),
                violation: violation(&a.point),
                point: a.point.clone(),
                weight: a.weight,
            })
            .collect()
    };
    rec.minimizers = minimizers;

    let bound = rec.f_k;
    let vtol = opts.value_tol * (1.0 + bound.abs());
    rec.converged = !rec.minimizers.is_empty()
        && rec
            .minimizers
            .iter()
            .all(|m| m.violation <= opts.feas_tol && (m.value - bound).abs() <= vtol);

    let tol = OptCondTol::with_tol(opts.feas_tol);
    let even = rel.kind == HierarchyKind::HomogenizedEven;
    let (regular, infinity) = std::thread::scope(|s| {
        let reg: Vec<_> = rec
            .minimizers
            .iter()
            .map(|m| s.spawn(|| check_regular(prob, &m.point, &tol)))
            .collect();
        let inf: Vec<_> = rec
            .minimizers_at_infinity
            .iter()
            .map(|p| {
                s.spawn(|| {
                    if even {
                        check_at_infinity_even(prob, &p.point, bound, &tol)
                    } else {
                        check_at_infinity(prob, &p.point, bound, &tol)
                    }
                })
            })
            .collect();
        (
            reg.into_iter().map(|h| h.join().expect("check panicked")).collect::<Vec<_>>(),
            inf.into_iter().map(|h| h.join().expect("check panicked")).collect::<Vec<_>>(),
        )
    });
    let mut all_regular_hold = true;
    for (m, r) in rec.minimizers.iter().zip(regular) {
        match r {
            Ok(r) => {
                all_regular_hold &= r.all_hold();
                rec.optcond.push(r);
            }
            Err(e) => {
                all_regular_hold = false;
                rec.notes.push(format!("optcond at {:?}: {}", m.point, e));
            }
        }
    }
    for (p, r) in rec.minimizers_at_infinity.iter().zip(infinity) {
        match r {
            Ok(r) => rec.optcond.push(r),
            Err(e) => rec.notes.push(format!("optcond at infinity {:?}: {}", p.point, e)),
        }
    }
    rec.verified = rec.converged && all_regular_hold;
    Ok(rec)
}

fn summarize(records: &[OrderRecord], opts: &DriverOptions) -> FinalSummary {
    let trusted = records
        .iter()
        .filter(|r| r.trusted())
        .filter_map(|r| r.bound())
        .fold(None, |m: Option<f64>, b| Some(m.map_or(b, |m| m.max(b))));
    let best_bound = trusted.or_else(|| {
        records
            .iter()
            .filter_map(|r| r.bound())
            .fold(None, |m: Option<f64>, b| Some(m.map_or(b, |m| m.max(b))))
    });
    let conv = records.iter().find(|r| r.converged && (r.verified || !opts.verify));
    let flat_any = records.iter().any(|r| r.flat_t.is_some());
    let trouble = records
        .iter()
        .any(|r| matches!(r.status, SdpStatus::NumericalTrouble | SdpStatus::IterLimit));
    let diagnosis = if let Some(r) = conv {
        if r.verified {
            format!(
                "converged at order {}: flat truncation holds, the extracted minimizers attain the bound and satisfy the optimality conditions",
                r.k
            )
        } else {
            format!(
                "converged at order {}: flat truncation holds and the extracted minimizers attain the bound (not verified)",
                r.k
            )
        }
    } else if let Some(r) = records.iter().find(|r| r.converged) {
        format!(
            "flat truncation at order {} with minimizers attaining the bound, but the optimality conditions fail at some minimizer",
            r.k
        )
    } else if !records.is_empty() && records.iter().all(|r| r.status == SdpStatus::PrimalInfeasible) {
        "every relaxation is infeasible: the feasible set is empty".into()
    } else if records.iter().any(|r| r.status == SdpStatus::DualInfeasible) {
        "a relaxation is unbounded below: the objective is likely unbounded on the feasible set".into()
    } else if !flat_any && trouble {
        format!(
            "{}: no flat truncation and the solver could not reach an optimum; compute minimizers at infinity instead",
            UNATTAINED
        )
    } else {
        "no flat truncation within the order range".into()
    };
    FinalSummary {
        best_bound,
        converged: conv.is_some(),
        verified: conv.is_some_and(|r| r.verified),
        convergence_order: conv.map(|r| r.k),
        diagnosis,
        disclaimer: DISCLAIMER.into(),
    }
}

/// Sphere problem in the original variables: minimize `f^hm` subject to
/// `c_i^hm = 0`, `c_j^hm >= 0` and `|x|^2 = 1`.
pub fn sphere_problem(prob: &PopProblem) -> PopProblem {
    let n = prob.nvars;
    let mut eqs: Vec<Polynomial> = prob.equalities.iter().map(|p| p.leading_form()).collect();
    eqs.push(Polynomial::squared_norm(n) - Polynomial::constant(n, 1.0));
    let ineqs = prob.inequalities.iter().map(|p| p.leading_form()).collect();
    PopProblem::new(prob.objective.leading_form(), eqs, ineqs).expect("same variable count")
}

#[derive(Debug, Clone, Serialize)]
pub struct InfinityReport {
    pub k: u32,
    /// Minimum of `f^hm` over the set at infinity (dual side).
    pub bound: Option<f64>,
    pub status: SdpStatus,
    pub flat_t: Option<u32>,
    /// Unit vectors with `f^hm` near zero.
    pub points: Vec<InfinityPoint>,
    pub notes: Vec<String>,
}

fn solve_sphere(sp: &PopProblem, k: u32, opts: &DriverOptions) -> Result<(MomentRelaxation, SdpSolution), DriverError> {
    let rel = assemble(HierarchyKind::StandardLasserre, sp, k)?;
    let red = rel.to_sdp();
    if let Some(base) = &opts.dump_sdpa {
        let file = std::fs::File::create(base).map_err(SdpError::from)?;
        red.instance.write_sdpa(std::io::BufWriter::new(file))?;
    }
    let sol = solve_with_restarts(&red.instance, &opts.sdp)?;
    Ok((rel, sol))
}

/// Minimizers at infinity from the sphere problem at order `k`.
pub fn minimizers_at_infinity(prob: &PopProblem, k: u32, opts: &DriverOptions) -> Result<InfinityReport, DriverError> {
    let sp = sphere_problem(prob);
    let (rel, sol) = solve_sphere(&sp, k, opts)?;
    let mut rep = InfinityReport {
        k,
        bound: None,
        status: sol.status,
        flat_t: None,
        points: Vec::new(),
        notes: Vec::new(),
    };
    let usable = sol.status == SdpStatus::Optimal || (!sol.bound_active && merit(&sol) <= opts.reduced_accuracy);
    if !usable {
        return Ok(rep);
    }
    rep.bound = Some(sol.dual_obj);
    if sol.dual_obj < -opts.value_tol {
        rep.notes
            .push("f^hm is negative somewhere at infinity, so the objective is unbounded below".into());
    }
    let t = flat_truncation(&rel.index, &sol.y, rel.d_k, k, opts.rank_tol)
        .or_else(|| flat_extension(&rel.index, &sol.y, k, opts.rank_tol));
    rep.flat_t = t;
    let Some(t) = t else {
        return Ok(rep);
    };
    match extract_atoms(&rel.index, &sol.y, t, opts.rank_tol, opts.sdp.seed) {
        Ok(atoms) => {
            let fhm = &sp.objective;
            let keep_all = sol.dual_obj < -opts.value_tol;
            rep.points = atoms
                .into_iter()
                .filter(|a| keep_all || fhm.eval(&a.point).is_ok_and(|v| v.abs() <= opts.value_tol))
                .map(|a| InfinityPoint {
                    point: a.point,
                    weight: a.weight,
                })
                .collect();
        }
        Err(e) => rep.notes.push(format!("extraction: {}", e)),
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityProbe {
    pub k: u32,
    pub bound: Option<f64>,
    pub status: SdpStatus,
    /// `f^hm > 0` on the set at infinity.
    pub positive: bool,
    pub diagnosis: String,
}

/// Lower bound on `f^hm` over the set at infinity and the positivity verdict.
pub fn positivity_at_infinity_probe(
    prob: &PopProblem,
    k: u32,
    probe_tol: f64,
    opts: &DriverOptions,
) -> Result<PositivityProbe, DriverError> {
    let sp = sphere_problem(prob);
    let (_, sol) = solve_sphere(&sp, k, opts)?;
    let (bound, positive, diagnosis) = match sol.status {
        SdpStatus::PrimalInfeasible => (None, true, "the set at infinity is empty, so positivity holds vacuously".to_string()),
        SdpStatus::Optimal => {
            let b = sol.dual_obj;
            if b > probe_tol {
                (Some(b), true, format!("f^hm >= {:.6e} > 0 at infinity", b))
            } else {
                (Some(b), false, format!("f^hm reaches {:.6e} at infinity", b))
            }
        }
        s => (
            Some(sol.dual_obj.min(sol.primal_obj)),
            false,
            format!("solver ended with {}; no verdict", s.as_str()),
        ),
    };
    Ok(PositivityProbe {
        k,
        bound,
        status: sol.status,
        positive,
        diagnosis,
    })
}
