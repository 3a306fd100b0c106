//! Numerical checks of LICQ, strict complementarity and second order
//! sufficiency at regular minimizers and at minimizers at infinity.
//!
//! Notation: for a polynomial `p` of degree `d_p`, `p^(1)` is its leading
//! form and `p^(2)`, `p^(3)` are its homogeneous parts of degree `d_p - 1`
//! and `d_p - 2`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::poly::{ExponentVector, PolyError, Polynomial, PopProblem};

#[derive(Debug, Error)]
pub enum OptCondError {
    #[error("point is infeasible (violation {0:.3e})")]
    Infeasible(f64),
    #[error("not a minimizer at infinity: {0}")]
    NotAtInfinity(String),
    #[error("even-degree check needs even degrees: {0}")]
    OddDegree(String),
    #[error("point has {got} coordinates, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LocationKind {
    Regular,
    AtInfinity,
    AtInfinityEven,
}

#[derive(Debug, Clone, Copy)]
pub struct OptCondTol {
    /// Feasibility and active-set tolerance, scaled by `1 + max |c_i(x)|`.
    pub active: f64,
    /// Threshold on the strict complementarity margin.
    pub scc: f64,
    /// Threshold on the projected Hessian, scaled by `1 + |H|`.
    pub sosc: f64,
    /// Relative singular value cutoff for the LICQ rank test.
    pub rank: f64,
    /// Stationarity residual threshold, scaled by `1 + |grad f|`.
    pub fooc: f64,
}

impl Default for OptCondTol {
    fn default() -> Self {
        OptCondTol {
            active: 1e-6,
            scc: 1e-6,
            sosc: 1e-8,
            rank: 1e-8,
            fooc: 1e-6,
        }
    }
}

impl OptCondTol {
    /// Defaults with the feasibility, active-set and stationarity tolerances
    /// set to `tol`.
    pub fn with_tol(tol: f64) -> Self {
        OptCondTol {
            active: tol,
            fooc: tol,
            ..OptCondTol::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintInfo {
    pub label: String,
    pub equality: bool,
    /// Value of the constraint polynomial used for the active-set test.
    pub value: f64,
    pub active: bool,
    /// Exactly 0 for inactive inequalities.
    pub multiplier: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptCondReport {
    pub location_kind: LocationKind,
    pub point: Vec<f64>,
    pub constraints: Vec<ConstraintInfo>,
    pub active_set: Vec<String>,
    pub licq: bool,
    /// Singular values of the matrix of active gradients.
    pub licq_singular_values: Vec<f64>,
    /// Multiplier of `x0 >= 0` (infinity, x0-included variant).
    pub lambda0: Option<f64>,
    /// Multiplier of the sphere direction `(0, x)`; zero by Euler's identity.
    pub lambda_bar: Option<f64>,
    pub fooc: bool,
    pub fooc_residual: f64,
    pub scc: bool,
    pub scc_margin: f64,
    pub sosc: bool,
    /// Smallest eigenvalue of the projected Hessian (`None` when the
    /// tangent space is trivial or multipliers are unavailable).
    pub sosc_min_eig: Option<f64>,
}

impl OptCondReport {
    pub fn all_hold(&self) -> bool {
        self.licq && self.fooc && self.scc && self.sosc
    }

    pub fn flags(&self) -> (bool, bool, bool) {
        (self.licq, self.scc, self.sosc)
    }
}

/// Orthonormal basis of `{v : rows * v = 0}`.
pub fn null_space(rows: &DMatrix<f64>, n: usize, rel_tol: f64) -> DMatrix<f64> {
    if rows.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let m = rows.nrows().max(n);
    let mut sq = DMatrix::zeros(m, n);
    sq.view_mut((0, 0), (rows.nrows(), n)).copy_from(rows);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    let cut = rel_tol * smax.max(1.0);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] <= cut)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Smallest eigenvalue of `Z^T H Z`, `None` for an empty `Z`.
pub fn projected_min_eig(h: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<f64> {
    if z.ncols() == 0 {
        return None;
    }
    let p = z.transpose() * h * z;
    let p = (&p + p.transpose()) * 0.5;
    Some(SymmetricEigen::new(p).eigenvalues.min())
}

fn singular_values(g: &DMatrix<f64>) -> Vec<f64> {
    if g.ncols() == 0 || g.nrows() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = g.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn full_column_rank(g: &DMatrix<f64>, sv: &[f64], rel: f64) -> bool {
    if g.ncols() == 0 {
        return true;
    }
    if g.ncols() > g.nrows() {
        return false;
    }
    let smax = sv.first().copied().unwrap_or(0.0);
    sv.len() == g.ncols() && sv.iter().all(|&s| s > rel * smax.max(1.0))
}

/// Least squares `g * lam ~ rhs` via the pseudo-inverse.
fn least_squares(g: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, f64) {
    if g.ncols() == 0 {
        return (DVector::zeros(0), rhs.norm());
    }
    let svd = g.clone().svd(true, true);
    let lam = svd
        .solve(rhs, 1e-12 * svd.singular_values.max().max(1e-300))
        .expect("U and V were computed");
    let res = (g * &lam - rhs).norm();
    (lam, res)
}

/// Generic NLP conditions for `min f s.t. eqs = 0, ineqs >= 0` at `x`.
struct Nlp<'a> {
    f: &'a Polynomial,
    eqs: Vec<(&'a Polynomial, String)>,
    ineqs: Vec<(&'a Polynomial, String)>,
}

impl<'a> Nlp<'a> {
    fn check(&self, x: &[f64], tol: &OptCondTol, kind: LocationKind) -> Result<OptCondReport, OptCondError> {
        let n = self.f.nvars();
        if x.len() != n {
            return Err(OptCondError::Dimension {
                expected: n,
                got: x.len(),
            });
        }
        let mut values = Vec::new();
        for (p, _) in self.eqs.iter().chain(&self.ineqs) {
            values.push(p.eval(x)?);
        }
        let cscale = 1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let act = tol.active * cscale;
        let neq = self.eqs.len();
        let violation = values
            .iter()
            .enumerate()
            .map(|(i, &v)| if i < neq { v.abs() } else { (-v).max(0.0) })
            .fold(0.0, f64::max);
        if violation > act {
            return Err(OptCondError::Infeasible(violation));
        }
        let all: Vec<(&Polynomial, &String, bool)> = self
            .eqs
            .iter()
            .map(|(p, l)| (*p, l, true))
            .chain(self.ineqs.iter().map(|(p, l)| (*p, l, false)))
            .collect();
        let active: Vec<usize> = (0..all.len()).filter(|&i| all[i].2 || values[i].abs() <= act).collect();
        let mut g = DMatrix::zeros(n, active.len());
        for (c, &i) in active.iter().enumerate() {
            g.set_column(c, &all[i].0.gradient(x)?);
        }
        let sv = singular_values(&g);
        let licq = full_column_rank(&g, &sv, tol.rank);
        let grad_f = self.f.gradient(x)?;

        let mut constraints: Vec<ConstraintInfo> = all
            .iter()
            .zip(&values)
            .enumerate()
            .map(|(i, ((_, l, eq), &v))| ConstraintInfo {
                label: (*l).clone(),
                equality: *eq,
                value: v,
                active: active.contains(&i),
                multiplier: 0.0,
            })
            .collect();
        let active_set = active.iter().map(|&i| all[i].1.clone()).collect();

        let mut report = OptCondReport {
            location_kind: kind,
            point: x.to_vec(),
            constraints: Vec::new(),
            active_set,
            licq,
            licq_singular_values: sv,
            lambda0: None,
            lambda_bar: None,
            fooc: false,
            fooc_residual: f64::NAN,
            scc: false,
            scc_margin: f64::NAN,
            sosc: false,
            sosc_min_eig: None,
        };
        if active.len() > n {
            report.constraints = constraints;
            return Ok(report);
        }
        let (lam, res) = least_squares(&g, &grad_f);
        for (c, &i) in active.iter().enumerate() {
            constraints[i].multiplier = lam[c];
        }
        report.fooc_residual = res;
        let signs_ok = constraints
            .iter()
            .filter(|c| !c.equality)
            .all(|c| c.multiplier >= -tol.scc);
        report.fooc = res <= tol.fooc * (1.0 + grad_f.norm()) && signs_ok;
        report.scc_margin = constraints
            .iter()
            .filter(|c| !c.equality)
            .map(|c| c.multiplier + c.value.max(0.0))
            .fold(f64::INFINITY, f64::min);
        report.scc = report.scc_margin > tol.scc;

        let mut h = self.f.hessian(x)?;
        for (c, &i) in active.iter().enumerate() {
            h -= all[i].0.hessian(x)? * lam[c];
        }
        let z = null_space(&g.transpose(), n, tol.rank);
        report.sosc_min_eig = projected_min_eig(&h, &z);
        report.sosc = report
            .sosc_min_eig
            .is_none_or(|e| e > tol.sosc * (1.0 + h.norm()));
        report.constraints = constraints;
        Ok(report)
    }
}

fn labels(prob: &PopProblem) -> (Vec<(&Polynomial, String)>, Vec<(&Polynomial, String)>) {
    (
        prob.equalities
            .iter()
            .enumerate()
            .map(|(i, p)| (p, format!("eq{}", i)))
            .collect(),
        prob.inequalities
            .iter()
            .enumerate()
            .map(|(i, p)| (p, format!("ineq{}", i)))
            .collect(),
    )
}

/// LICQ, FOOC, SCC and SOSC for the original problem at a candidate `x`.
pub fn check_regular(prob: &PopProblem, x: &[f64], tol: &OptCondTol) -> Result<OptCondReport, OptCondError> {
    let (eqs, ineqs) = labels(prob);
    Nlp {
        f: &prob.objective,
        eqs,
        ineqs,
    }
    .check(x, tol, LocationKind::Regular)
}

/// Sphere-constrained homogenized problem: minimize `f~ - f_min x0^d` over
/// `c~_E = 0`, `x0^2 + |x|^2 = 1`, `c~_I >= 0` and, unless `even`, `x0 >= 0`.
pub struct HomogenizedNlp {
    pub objective: Polynomial,
    pub equalities: Vec<(Polynomial, String)>,
    pub inequalities: Vec<(Polynomial, String)>,
}

impl HomogenizedNlp {
    pub fn new(prob: &PopProblem, f_min: f64, even: bool) -> Self {
        let n1 = prob.nvars + 1;
        let d = prob.objective.degree();
        let x0d = Polynomial::monomial(ExponentVector::unit(n1, 0).scaled(d), 1.0);
        let objective = prob.objective.homogenize() - x0d.scale(f_min);
        let mut equalities: Vec<(Polynomial, String)> = prob
            .equalities
            .iter()
            .enumerate()
            .map(|(i, p)| (p.homogenize(), format!("eq{}", i)))
            .collect();
        equalities.push((Polynomial::squared_norm(n1) - Polynomial::constant(n1, 1.0), "sphere".into()));
        let mut inequalities: Vec<(Polynomial, String)> = prob
            .inequalities
            .iter()
            .enumerate()
            .map(|(i, p)| (p.homogenize(), format!("ineq{}", i)))
            .collect();
        if !even {
            inequalities.push((Polynomial::var(n1, 0), "x0".into()));
        }
        HomogenizedNlp {
            objective,
            equalities,
            inequalities,
        }
    }

    /// Generic NLP conditions at a point `(x0, x)` of the sphere.
    pub fn check(&self, xt: &[f64], tol: &OptCondTol, kind: LocationKind) -> Result<OptCondReport, OptCondError> {
        Nlp {
            f: &self.objective,
            eqs: self.equalities.iter().map(|(p, l)| (p, l.clone())).collect(),
            ineqs: self.inequalities.iter().map(|(p, l)| (p, l.clone())).collect(),
        }
        .check(xt, tol, kind)
    }
}

/// `0^e` with `0^0 = 1`.
fn zero_pow(e: i64) -> f64 {
    if e == 0 {
        1.0
    } else {
        0.0
    }
}

struct InfinityData {
    n: usize,
    x: DVector<f64>,
    d: u32,
    /// Per constraint: label, equality flag, `c^(1)(x)`, active flag.
    cons: Vec<(String, bool, f64, bool)>,
    polys: Vec<Polynomial>,
    active: Vec<usize>,
}

fn infinity_data(prob: &PopProblem, x: &[f64], tol: &OptCondTol) -> Result<InfinityData, OptCondError> {
    let n = prob.nvars;
    if x.len() != n {
        return Err(OptCondError::Dimension {
            expected: n,
            got: x.len(),
        });
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > tol.active.max(1e-9) * 10.0 {
        return Err(OptCondError::NotAtInfinity(format!("|x| = {:.6}, expected 1", norm)));
    }
    let fhm = prob.objective.leading_form().eval(x)?;
    let fscale = 1.0 + prob.objective.leading_form().max_abs_coeff();
    if fhm.abs() > tol.active * fscale {
        return Err(OptCondError::NotAtInfinity(format!("f^hm(x) = {:.3e} is not zero", fhm)));
    }
    let (eqs, ineqs) = labels(prob);
    let mut cons = Vec::new();
    let mut polys = Vec::new();
    for (p, l, eq) in eqs
        .into_iter()
        .map(|(p, l)| (p, l, true))
        .chain(ineqs.into_iter().map(|(p, l)| (p, l, false)))
    {
        let v = p.leading_form().eval(x)?;
        cons.push((l, eq, v, false));
        polys.push(p.clone());
    }
    let cscale = 1.0 + cons.iter().fold(0.0f64, |m, c| m.max(c.2.abs()));
    let act = tol.active * cscale;
    for c in &cons {
        let viol = if c.1 { c.2.abs() } else { (-c.2).max(0.0) };
        if viol > act {
            return Err(OptCondError::NotAtInfinity(format!(
                "{} violated at infinity ({:.3e})",
                c.0, c.2
            )));
        }
    }
    for c in cons.iter_mut() {
        c.3 = c.1 || c.2.abs() <= act;
    }
    let active = (0..cons.len()).filter(|&i| cons[i].3).collect();
    Ok(InfinityData {
        n,
        x: DVector::from_column_slice(x),
        d: prob.objective.degree(),
        cons,
        polys,
        active,
    })
}

fn gp(p: &Polynomial, i: u32) -> Polynomial {
    p.graded_part(i).expect("graded index is positive")
}

fn constraint_infos(data: &InfinityData, lam: Option<&DVector<f64>>) -> Vec<ConstraintInfo> {
    data.cons
        .iter()
        .enumerate()
        .map(|(i, (l, eq, v, act))| ConstraintInfo {
            label: l.clone(),
            equality: *eq,
            value: *v,
            active: *act,
            multiplier: match (lam, data.active.iter().position(|&a| a == i)) {
                (Some(lam), Some(c)) => lam[c],
                _ => 0.0,
            },
        })
        .collect()
}

/// Conditions at a minimizer at infinity `(0, x)` of the homogenized
/// problem with the constraint `x0 >= 0`.
pub fn check_at_infinity(
    prob: &PopProblem,
    x: &[f64],
    f_min: f64,
    tol: &OptCondTol,
) -> Result<OptCondReport, OptCondError> {
    let data = infinity_data(prob, x, tol)?;
    let (n, d) = (data.n, data.d);
    let xs = x;
    let na = data.active.len();
    let mut g = DMatrix::zeros(n, na);
    for (c, &i) in data.active.iter().enumerate() {
        g.set_column(c, &data.polys[i].leading_form().gradient(xs)?);
    }
    let sv = singular_values(&g);
    let licq = full_column_rank(&g, &sv, tol.rank);
    let fhm = prob.objective.leading_form();
    let grad = fhm.gradient(xs)?;
    let mut report = OptCondReport {
        location_kind: LocationKind::AtInfinity,
        point: x.to_vec(),
        constraints: constraint_infos(&data, None),
        active_set: data.active.iter().map(|&i| data.cons[i].0.clone()).collect(),
        licq,
        licq_singular_values: sv,
        lambda0: None,
        lambda_bar: None,
        fooc: false,
        fooc_residual: f64::NAN,
        scc: false,
        scc_margin: f64::NAN,
        sosc: false,
        sosc_min_eig: None,
    };
    if na > n {
        return Ok(report);
    }
    // gradient block of the KKT system, with the sphere column (0, x) last
    let mut gx = DMatrix::zeros(n, na + 1);
    gx.view_mut((0, 0), (n, na)).copy_from(&g);
    gx.set_column(na, &data.x);
    let (sol, res) = least_squares(&gx, &grad);
    let lam = sol.rows(0, na).into_owned();
    let lambda_bar = sol[na];
    let mut lambda0 = gp(&prob.objective, 2).eval(xs)? - d as f64 * f_min * zero_pow(d as i64 - 1);
    for (c, &i) in data.active.iter().enumerate() {
        lambda0 -= lam[c] * gp(&data.polys[i], 2).eval(xs)?;
    }
    report.constraints = constraint_infos(&data, Some(&lam));
    report.lambda0 = Some(lambda0);
    report.lambda_bar = Some(lambda_bar);
    report.fooc_residual = res;
    let signs_ok = report
        .constraints
        .iter()
        .filter(|c| !c.equality)
        .all(|c| c.multiplier >= -tol.scc)
        && lambda0 >= -tol.scc;
    report.fooc = res <= tol.fooc * (1.0 + grad.norm()) && signs_ok;
    report.scc_margin = report
        .constraints
        .iter()
        .filter(|c| !c.equality)
        .map(|c| c.multiplier + c.value.max(0.0))
        .fold(lambda0, f64::min);
    report.scc = report.scc_margin > tol.scc;

    let mut h = fhm.hessian(xs)?;
    for (c, &i) in data.active.iter().enumerate() {
        h -= data.polys[i].leading_form().hessian(xs)? * lam[c];
    }
    let mut rows = gx.transpose();
    rows.row_mut(na).copy_from(&data.x.transpose());
    let z = null_space(&rows, n, tol.rank);
    report.sosc_min_eig = projected_min_eig(&h, &z);
    report.sosc = report
        .sosc_min_eig
        .is_none_or(|e| e > tol.sosc * (1.0 + h.norm()));
    Ok(report)
}

/// Conditions at a minimizer at infinity `(0, x)` of the even-degree
/// homogenized problem, which omits `x0 >= 0`.
pub fn check_at_infinity_even(
    prob: &PopProblem,
    x: &[f64],
    f_min: f64,
    tol: &OptCondTol,
) -> Result<OptCondReport, OptCondError> {
    let d = prob.objective.degree();
    if d % 2 == 1 {
        return Err(OptCondError::OddDegree(format!("objective has degree {}", d)));
    }
    if d < 2 {
        return Err(OptCondError::OddDegree("objective degree must exceed 1".into()));
    }
    for (i, q) in prob.inequalities.iter().enumerate() {
        if q.degree() % 2 == 1 {
            return Err(OptCondError::OddDegree(format!("ineq{} has degree {}", i, q.degree())));
        }
    }
    let data = infinity_data(prob, x, tol)?;
    let n = data.n;
    let xs = x;
    let na = data.active.len();
    // stacked vectors (c^(2)(x), grad c^(1)(x)) in R^{n+1}
    let mut g = DMatrix::zeros(n + 1, na);
    for (c, &i) in data.active.iter().enumerate() {
        let p = &data.polys[i];
        g[(0, c)] = gp(p, 2).eval(xs)?;
        g.view_mut((1, c), (n, 1)).copy_from(&p.leading_form().gradient(xs)?);
    }
    let sv = singular_values(&g);
    let licq = full_column_rank(&g, &sv, tol.rank);
    let f = &prob.objective;
    let mut rhs = DVector::zeros(n + 1);
    rhs[0] = gp(f, 2).eval(xs)?;
    rhs.rows_mut(1, n).copy_from(&f.leading_form().gradient(xs)?);
    let mut report = OptCondReport {
        location_kind: LocationKind::AtInfinityEven,
        point: x.to_vec(),
        constraints: constraint_infos(&data, None),
        active_set: data.active.iter().map(|&i| data.cons[i].0.clone()).collect(),
        licq,
        licq_singular_values: sv,
        lambda0: None,
        lambda_bar: None,
        fooc: false,
        fooc_residual: f64::NAN,
        scc: false,
        scc_margin: f64::NAN,
        sosc: false,
        sosc_min_eig: None,
    };
    if na > n + 1 {
        return Ok(report);
    }
    let mut gx = DMatrix::zeros(n + 1, na + 1);
    gx.view_mut((0, 0), (n + 1, na)).copy_from(&g);
    gx.view_mut((1, na), (n, 1)).copy_from(&data.x);
    let (sol, res) = least_squares(&gx, &rhs);
    let lam = sol.rows(0, na).into_owned();
    report.constraints = constraint_infos(&data, Some(&lam));
    report.lambda_bar = Some(sol[na]);
    report.fooc_residual = res;
    let signs_ok = report
        .constraints
        .iter()
        .filter(|c| !c.equality)
        .all(|c| c.multiplier >= -tol.scc);
    report.fooc = res <= tol.fooc * (1.0 + rhs.norm()) && signs_ok;
    report.scc_margin = report
        .constraints
        .iter()
        .filter(|c| !c.equality)
        .map(|c| c.multiplier + c.value.max(0.0))
        .fold(f64::INFINITY, f64::min);
    report.scc = report.scc_margin > tol.scc;

    let block = |p: &Polynomial, top_extra: f64| -> Result<DMatrix<f64>, OptCondError> {
        let mut b = DMatrix::zeros(n + 1, n + 1);
        b[(0, 0)] = 2.0 * gp(p, 3).eval(xs)? + top_extra;
        let g2 = gp(p, 2).gradient(xs)?;
        b.view_mut((1, 0), (n, 1)).copy_from(&g2);
        b.view_mut((0, 1), (1, n)).copy_from(&g2.transpose());
        b.view_mut((1, 1), (n, n)).copy_from(&p.leading_form().hessian(xs)?);
        Ok(b)
    };
    let dd = d as f64;
    let mut h = block(f, -dd * (dd - 1.0) * f_min * zero_pow(d as i64 - 2))?;
    for (c, &i) in data.active.iter().enumerate() {
        h -= block(&data.polys[i], 0.0)? * lam[c];
    }
    let mut rows = DMatrix::zeros(na + 1, n + 1);
    rows.view_mut((0, 0), (na, n + 1)).copy_from(&g.transpose());
    rows.view_mut((na, 1), (1, n)).copy_from(&data.x.transpose());
    let z = null_space(&rows, n + 1, tol.rank);
    report.sosc_min_eig = projected_min_eig(&h, &z);
    report.sosc = report
        .sosc_min_eig
        .is_none_or(|e| e > tol.sosc * (1.0 + h.norm()));
    Ok(report)
}

/// Paired conditions for the original problem at `x` and the homogenized
/// problem at `(1, x) / sqrt(1 + |x|^2)`.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceProbe {
    pub original: OptCondReport,
    pub homogenized: OptCondReport,
    pub agree: bool,
}

pub fn equivalence_probe(prob: &PopProblem, x: &[f64], tol: &OptCondTol) -> Result<EquivalenceProbe, OptCondError> {
    let original = check_regular(prob, x, tol)?;
    let f_min = prob.objective.eval(x)?;
    let s = (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let xt: Vec<f64> = std::iter::once(1.0 / s).chain(x.iter().map(|v| v / s)).collect();
    let homogenized = HomogenizedNlp::new(prob, f_min, false).check(&xt, tol, LocationKind::Regular)?;
    let agree = original.flags() == homogenized.flags();
    Ok(EquivalenceProbe {
        original,
        homogenized,
        agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(n: usize, terms: &[(&[u32], f64)]) -> Polynomial {
        Polynomial::from_terms(n, terms.iter().map(|(e, c)| (e.to_vec(), *c)))
    }

    fn cubic_constraints() -> PopProblem {
        let f = poly(2, &[(&[1, 0], 1.0), (&[0, 1], 1.0)]);
        let c1 = poly(2, &[(&[3, 0], 1.0), (&[0, 1], 1.0), (&[0, 0], 1.0)]);
        let c2 = poly(2, &[(&[0, 3], 1.0), (&[1, 0], -1.0), (&[0, 0], 1.0)]);
        PopProblem::new(f, vec![], vec![c1, c2]).unwrap()
    }

    #[test]
    fn cubic_constraints_regular_minimizer() {
        let s3 = 3f64.sqrt();
        let x = [-s3 / 3.0, -1.0 + s3 / 9.0];
        let r = check_regular(&cubic_constraints(), &x, &OptCondTol::default()).unwrap();
        assert_eq!(r.active_set, vec!["ineq0".to_string()]);
        assert!((r.constraints[0].multiplier - 1.0).abs() < 1e-12);
        assert_eq!(r.constraints[1].multiplier, 0.0);
        assert!(r.licq && r.fooc && r.scc && r.sosc);
        // Hessian of the Lagrangian is -grad^2 c1 = diag(2 sqrt 3, 0) and the
        // tangent space of grad c1 = (1, 1) is spanned by (1, -1) / sqrt 2
        assert!((r.sosc_min_eig.unwrap() - s3).abs() < 1e-10);
    }

    #[test]
    fn unconstrained_sum_of_squares() {
        let f = poly(2, &[(&[2, 0], 1.0), (&[0, 2], 1.0)]);
        let r = check_regular(&PopProblem::unconstrained(f), &[0.0, 0.0], &OptCondTol::default()).unwrap();
        assert!(r.licq && r.active_set.is_empty());
        assert!(r.fooc && r.scc && r.sosc);
        assert!((r.sosc_min_eig.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_has_no_curvature() {
        let f = poly(1, &[(&[3], 1.0)]);
        let r = check_regular(&PopProblem::unconstrained(f), &[0.0], &OptCondTol::default()).unwrap();
        assert!(r.fooc);
        assert!(!r.sosc);
        assert_eq!(r.sosc_min_eig, Some(0.0));
    }

    #[test]
    fn infeasible_point_rejected() {
        assert!(matches!(
            check_regular(&cubic_constraints(), &[5.0, -5.0], &OptCondTol::default()),
            Err(OptCondError::Infeasible(_))
        ));
    }

    #[test]
    fn too_many_active_constraints_short_circuit() {
        // x >= 0, -x >= 0 and x^2 >= 0 all active at 0 in one variable
        let f = poly(1, &[(&[1], 1.0)]);
        let ineqs = vec![poly(1, &[(&[1], 1.0)]), poly(1, &[(&[1], -1.0)]), poly(1, &[(&[2], 1.0)])];
        let r = check_regular(&PopProblem::new(f, vec![], ineqs).unwrap(), &[0.0], &OptCondTol::default()).unwrap();
        assert!(!r.licq);
        assert!(r.fooc_residual.is_nan());
        assert!(r.constraints.iter().all(|c| c.multiplier == 0.0));
    }

    #[test]
    fn inactive_multipliers_are_exactly_zero() {
        let f = poly(2, &[(&[2, 0], 1.0), (&[0, 2], 1.0)]);
        let g = poly(2, &[(&[0, 0], 4.0), (&[2, 0], -1.0), (&[0, 2], -1.0)]);
        let r = check_regular(&PopProblem::new(f, vec![], vec![g]).unwrap(), &[0.0, 0.0], &OptCondTol::default())
            .unwrap();
        assert!(!r.constraints[0].active);
        assert_eq!(r.constraints[0].multiplier, 0.0);
        assert!((r.scc_margin - 4.0).abs() < 1e-12);
    }

    /// f = x1^4 + (x1 x2 - 1)^2 has infimum 0, approached at infinity along (0, 1).
    fn pathology() -> PopProblem {
        PopProblem::unconstrained(poly(
            2,
            &[(&[4, 0], 1.0), (&[2, 2], 1.0), (&[1, 1], -2.0), (&[0, 0], 1.0)],
        ))
    }

    #[test]
    fn pathology_infinity_points_even() {
        for s in [1.0, -1.0] {
            let x = [0.0, s];
            let r = check_at_infinity_even(&pathology(), &x, 0.0, &OptCondTol::default()).unwrap();
            assert!(r.licq && r.active_set.is_empty());
            assert_eq!(r.lambda_bar, Some(0.0));
            // f^(2) = 0, f^(3) = -2 x1 x2 vanishes at (0, s) and grad^2 f^hm = diag(2, 0),
            // so H = diag(0, 2, 0) restricted to {y2 = 0}
            assert_eq!(r.sosc_min_eig, Some(0.0));
            assert!(!r.sosc);
        }
    }

    #[test]
    fn pathology_infinity_points_with_x0() {
        let r = check_at_infinity(&pathology(), &[0.0, 1.0], 0.0, &OptCondTol::default()).unwrap();
        assert!(r.licq);
        // lambda0 = f^(2)(x) - 4 f_min 0^3 = 0
        assert_eq!(r.lambda0, Some(0.0));
        assert!(!r.scc);
        assert_eq!(r.lambda_bar, Some(0.0));
    }

    #[test]
    fn nonzero_leading_form_rejected() {
        let f = poly(2, &[(&[2, 0], 1.0), (&[0, 2], 0.5)]);
        let prob = PopProblem::unconstrained(f);
        assert!(matches!(
            check_at_infinity(&prob, &[0.0, 1.0], 0.0, &OptCondTol::default()),
            Err(OptCondError::NotAtInfinity(_))
        ));
    }

    #[test]
    fn vanishing_gradient_breaks_licq() {
        // c = x1^2 x2 - x1^2 with leading form x1^2 x2, whose gradient vanishes at (0, 1)
        let f = poly(2, &[(&[1, 0], 1.0)]);
        let c = poly(2, &[(&[2, 1], 1.0), (&[2, 0], -1.0)]);
        let prob = PopProblem::new(f, vec![c], vec![]).unwrap();
        let r = check_at_infinity(&prob, &[0.0, 1.0], 0.0, &OptCondTol::default()).unwrap();
        assert_eq!(r.active_set, vec!["eq0".to_string()]);
        assert!(!r.licq);
    }

    #[test]
    fn odd_inequality_rejected_by_even_check() {
        let f = poly(2, &[(&[2, 0], 1.0)]);
        let prob = PopProblem::new(f, vec![], vec![poly(2, &[(&[1, 0], 1.0)])]).unwrap();
        assert!(matches!(
            check_at_infinity_even(&prob, &[0.0, 1.0], 0.0, &OptCondTol::default()),
            Err(OptCondError::OddDegree(_))
        ));
    }

    #[test]
    fn infinity_formulas_match_generic_homogenized_check() {
        // f = x1^2 x2^2 + x2^3 + x1^2 with f^hm = 0 and f^(2) = 1 at (0, 1), c = x2 >= 0
        let f = poly(2, &[(&[2, 2], 1.0), (&[0, 3], 1.0), (&[2, 0], 1.0)]);
        let prob = PopProblem::new(f, vec![], vec![poly(2, &[(&[0, 1], 1.0)])]).unwrap();
        let tol = OptCondTol::default();
        let lit = check_at_infinity(&prob, &[0.0, 1.0], 0.0, &tol).unwrap();
        let gen = HomogenizedNlp::new(&prob, 0.0, false)
            .check(&[0.0, 0.0, 1.0], &tol, LocationKind::AtInfinity)
            .unwrap();
        assert_eq!(lit.licq, gen.licq);
        assert_eq!(lit.scc, gen.scc);
        assert_eq!(lit.sosc, gen.sosc);
        assert!(lit.licq && lit.scc && lit.sosc);
        let x0 = gen.constraints.iter().find(|c| c.label == "x0").unwrap();
        assert!((lit.lambda0.unwrap() - 1.0).abs() < 1e-12);
        assert!((lit.lambda0.unwrap() - x0.multiplier).abs() < 1e-10);
        assert!((lit.sosc_min_eig.unwrap() - gen.sosc_min_eig.unwrap()).abs() < 1e-10);
    }

    #[test]
    fn cubic_constraints_equivalence() {
        let s3 = 3f64.sqrt();
        let p = equivalence_probe(&cubic_constraints(), &[-s3 / 3.0, -1.0 + s3 / 9.0], &OptCondTol::default()).unwrap();
        assert!(p.agree);
        assert!(p.original.all_hold());
    }

    #[test]
    fn interior_quadratic_equivalence() {
        let f = poly(2, &[(&[2, 0], 1.0), (&[0, 2], 2.0), (&[1, 1], 1.0), (&[1, 0], -1.0)]);
        // minimizer of x1^2 + 2 x2^2 + x1 x2 - x1: 2 x1 + x2 = 1, x1 + 4 x2 = 0
        let x = [4.0 / 7.0, -1.0 / 7.0];
        let p = equivalence_probe(&PopProblem::unconstrained(f), &x, &OptCondTol::default()).unwrap();
        assert!(p.agree);
        assert!(p.original.active_set.is_empty());
        assert_eq!(p.homogenized.active_set, vec!["sphere".to_string()]);
    }

    #[test]
    fn sosc_is_basis_invariant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
            let h = &a + a.transpose();
            let rows = DMatrix::from_fn(1, 4, |_, _| rng.gen_range(-1.0..1.0));
            let z = null_space(&rows, 4, 1e-10);
            let q = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
            let e1 = projected_min_eig(&h, &z).unwrap();
            let e2 = projected_min_eig(&h, &(&z * q)).unwrap();
            assert!((e1 - e2).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_pow_literal() {
        assert_eq!(zero_pow(0), 1.0);
        assert_eq!(zero_pow(3), 0.0);
    }
}
