//! Moment relaxations in the homogenized and classical families.
//!
//! Every member of the family is the same generic SDP over a truncated
//! moment sequence `y` indexed by monomials of degree at most `2k`:
//!
//! ```text
//!   minimize <theta, y>  s.t.  <nu, y> = 1,
//!            M_k[y] PSD,  L_q[y] PSD for inequalities q,
//!            <p * x^g, y> = 0 for equalities p and |g| <= 2k - deg p.
//! ```
//!
//! The kinds only differ in the variable space, the constraint lists and
//! the pair `(theta, nu)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::poly::{monomial_basis, ExponentVector, MonomialIndex, Polynomial, PopProblem};
use crate::sdp::{SdpInstance, SdpSolution, SdpStatus, SymPencil};

/// Relative tolerance for discarding linearly dependent equality rows.
pub const ROW_RANK_TOL: f64 = 1e-10;
/// Relative pivot threshold when reducing PSD blocks by the equality kernel.
pub const FACE_PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxError {
    #[error("order {k} too small: {what} has degree {degree}")]
    OrderTooSmall { k: u32, what: String, degree: u32 },
    #[error("even variant needs even degrees, but {what} has degree {degree}")]
    OddDegree { what: String, degree: u32 },
    #[error("dual solution not converged (status {0:?})")]
    NotConverged(SdpStatus),
    #[error("dual solution does not match the relaxation: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HierarchyKind {
    Homogenized,
    HomogenizedEven,
    /// Denominator `(1 + |x|^2)^m` in the original variables.
    Denominator(u32),
    /// Multiplier `x0^(2l)` on the homogenized objective.
    PowerX0(u32),
    StandardLasserre,
}

impl HierarchyKind {
    pub fn is_homogenized(&self) -> bool {
        matches!(
            self,
            HierarchyKind::Homogenized | HierarchyKind::HomogenizedEven | HierarchyKind::PowerX0(_)
        )
    }

    pub fn name(&self) -> String {
        match self {
            HierarchyKind::Homogenized => "homog".into(),
            HierarchyKind::HomogenizedEven => "even".into(),
            HierarchyKind::Denominator(m) => format!("denom:{}", m),
            HierarchyKind::PowerX0(l) => format!("power:{}", l),
            HierarchyKind::StandardLasserre => "standard".into(),
        }
    }
}

/// Homogenized problem in `(x0, x)`: constraints `c~_E ∪ {|x~|^2 - 1}` and
/// `c~_I` (plus `x0` unless the even variant is used).
#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizedProblem {
    pub base: PopProblem,
    pub objective_degree: u32,
    pub includes_x0_constraint: bool,
}

pub fn build_homogenized(
    prob: &PopProblem,
    even_variant: bool,
) -> Result<HomogenizedProblem, RelaxError> {
    let d = prob.objective.degree();
    if even_variant {
        if d % 2 == 1 {
            return Err(RelaxError::OddDegree {
                what: "objective".into(),
                degree: d,
            });
        }
        for (i, c) in prob.inequalities.iter().enumerate() {
            if c.degree() % 2 == 1 {
                return Err(RelaxError::OddDegree {
                    what: format!("inequality {}", i),
                    degree: c.degree(),
                });
            }
        }
    }
    let n1 = prob.nvars + 1;
    let mut equalities: Vec<Polynomial> = prob.equalities.iter().map(|c| c.homogenize()).collect();
    equalities.push(Polynomial::squared_norm(n1) - Polynomial::constant(n1, 1.0));
    let mut inequalities: Vec<Polynomial> =
        prob.inequalities.iter().map(|c| c.homogenize()).collect();
    if !even_variant {
        inequalities.push(Polynomial::var(n1, 0));
    }
    Ok(HomogenizedProblem {
        base: PopProblem {
            nvars: n1,
            objective: prob.objective.homogenize(),
            equalities,
            inequalities,
        },
        objective_degree: d,
        includes_x0_constraint: !even_variant,
    })
}

/// Localizing pencil of `p` at order `k`: entry `(a, b)` is
/// `sum_g p_g y_{g + a + b}` over basis monomials of degree `<= k - ceil(deg p / 2)`.
pub fn localizing_pencil(
    p: &Polynomial,
    k: u32,
    index: &MonomialIndex,
) -> Result<SymPencil, RelaxError> {
    let dp = p.degree();
    if dp > 2 * k {
        return Err(RelaxError::OrderTooSmall {
            k,
            what: "localized polynomial".into(),
            degree: dp,
        });
    }
    let t = k - dp.div_ceil(2);
    let basis = monomial_basis(p.nvars(), t);
    let mut pen = SymPencil::new(basis.len());
    for (a, ea) in basis.iter().enumerate() {
        for (b, eb) in basis.iter().enumerate().skip(a) {
            let ab = ea.add(eb);
            for (g, c) in p.terms() {
                let var = index
                    .index_of(&g.add(&ab))
                    .expect("monomial within the truncation degree");
                pen.push(var, a, b, c);
            }
        }
    }
    Ok(pen)
}

/// Where a row of the equality system comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum RowOrigin {
    Normalizer,
    /// Row `<p_eq * x^shift, y> = 0`.
    Equality { eq: usize, shift: ExponentVector },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub origin: RowOrigin,
}

#[derive(Debug, Clone)]
pub struct LabeledPencil {
    pub label: String,
    /// Localized polynomial `q` (the constant 1 for the moment matrix).
    pub poly: Polynomial,
    /// Degree of the basis `[x]_t` indexing the rows.
    pub basis_degree: u32,
    pub pencil: SymPencil,
}

/// One assembled SDP of the hierarchy.
#[derive(Debug, Clone)]
pub struct MomentRelaxation {
    pub kind: HierarchyKind,
    pub order: u32,
    /// Variables of the moment sequence (`n + 1` for homogenized kinds).
    pub nvars: usize,
    pub index: MonomialIndex,
    pub theta: Polynomial,
    pub nu: Polynomial,
    pub objective_vector: Vec<f64>,
    /// The moment matrix comes first.
    pub psd_pencils: Vec<LabeledPencil>,
    pub equality_polys: Vec<Polynomial>,
    pub eq_rows: Vec<EqRow>,
    /// Degree `d` of the original objective.
    pub objective_degree: u32,
    /// `max(ceil(deg/2))` over the objective and the constraints actually imposed.
    pub d_k: u32,
}

/// Reduced SDP data plus the bookkeeping to map multipliers back.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub instance: SdpInstance,
    /// Monomials indexing the rows of each SDP block (moment block first).
    pub pencil_bases: Vec<Vec<ExponentVector>>,
    /// For each SDP equality row: the relaxation row it came from and the
    /// factor it was scaled by.
    pub kept_rows: Vec<(usize, f64)>,
}

impl MomentRelaxation {
    pub fn tms_dim(&self) -> usize {
        self.index.len()
    }

    /// Reduced SDP with the equality-induced kernel removed from every block.
    pub fn to_sdp(&self) -> ReducedSystem {
        self.to_sdp_with(true)
    }

    /// Drop dependent rows (pivoted Gram-Schmidt, normalizer forced first),
    /// scale the survivors to unit norm and build the SDP.
    ///
    /// With `reduce_faces`, each block keeps only the standard monomials
    /// modulo the products `p * x^g` of the equality polynomials that fit in
    /// its basis. Those products lie in the kernel of the block for every `y`
    /// satisfying the equality rows, so the restricted block is PSD exactly
    /// when the full one is, and the SDP regains a strictly feasible point.
    pub fn to_sdp_with(&self, reduce_faces: bool) -> ReducedSystem {
        let m = self.tms_dim();
        let dense: Vec<DVector<f64>> = self
            .eq_rows
            .iter()
            .map(|r| {
                let mut v = DVector::zeros(m);
                for &(i, c) in &r.coeffs {
                    v[i] += c;
                }
                v
            })
            .collect();
        let norms: Vec<f64> = dense.iter().map(|v| v.norm()).collect();
        let maxnorm = norms.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let mut residual: Vec<DVector<f64>> = dense
            .iter()
            .zip(&norms)
            .map(|(v, &n)| if n > 0.0 { v / n } else { v.clone() })
            .collect();
        let mut remaining: Vec<usize> = (0..dense.len())
            .filter(|&i| norms[i] > ROW_RANK_TOL * maxnorm)
            .collect();
        let mut kept: Vec<usize> = Vec::new();
        let mut q: Vec<DVector<f64>> = Vec::new();
        let normalizer = self
            .eq_rows
            .iter()
            .position(|r| r.origin == RowOrigin::Normalizer);
        loop {
            let pick = match (kept.is_empty(), normalizer) {
                (true, Some(nz)) if remaining.contains(&nz) => Some(nz),
                _ => remaining
                    .iter()
                    .copied()
                    .max_by(|&a, &b| residual[a].norm().total_cmp(&residual[b].norm())),
            };
            let Some(i) = pick else { break };
            let rn = residual[i].norm();
            // rows are unit norm, so this is a relative threshold
            if rn <= ROW_RANK_TOL {
                break;
            }
            let qi = &residual[i] / rn;
            remaining.retain(|&r| r != i);
            for &r in &remaining {
                let proj = qi.dot(&residual[r]);
                residual[r] -= &qi * proj;
            }
            q.push(qi);
            kept.push(i);
        }
        kept.sort_unstable();
        let p = kept.len();
        let mut a = DMatrix::zeros(p, m);
        let mut b = vec![0.0; p];
        let mut kept_rows = Vec::with_capacity(p);
        for (r, &i) in kept.iter().enumerate() {
            let s = 1.0 / norms[i];
            a.set_row(r, &(dense[i].transpose() * s));
            b[r] = self.eq_rows[i].rhs * s;
            kept_rows.push((i, s));
        }
        let mut pencils = Vec::with_capacity(self.psd_pencils.len());
        let mut pencil_bases = Vec::with_capacity(self.psd_pencils.len());
        for lp in &self.psd_pencils {
            let basis = monomial_basis(self.nvars, lp.basis_degree);
            let keep: Vec<usize> = if reduce_faces {
                standard_positions(&basis, lp.basis_degree, &self.equality_polys)
            } else {
                (0..basis.len()).collect()
            };
            pencils.push(if keep.len() == basis.len() {
                lp.pencil.clone()
            } else {
                lp.pencil.principal(&keep)
            });
            pencil_bases.push(keep.iter().map(|&i| basis[i].clone()).collect());
        }
        ReducedSystem {
            instance: SdpInstance {
                dim: m,
                objective: self.objective_vector.clone(),
                eq_matrix: a,
                eq_rhs: b,
                pencils,
            },
            pencil_bases,
            kept_rows,
        }
    }

    /// `M_t[y]` for `t <= k`.
    pub fn moment_matrix(&self, y: &[f64], t: u32) -> DMatrix<f64> {
        moment_matrix(&self.index, y, t)
    }
}

/// `M_t[y]` built from a moment vector indexed by `index`.
pub fn moment_matrix(index: &MonomialIndex, y: &[f64], t: u32) -> DMatrix<f64> {
    let basis = monomial_basis(index.nvars(), t);
    let n = basis.len();
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let i = index
                .index_of(&basis[a].add(&basis[b]))
                .expect("t within the truncation");
            m[(a, b)] = y[i];
            m[(b, a)] = y[i];
        }
    }
    m
}

/// Moments `y_a = sum_j w_j u_j^a` of a weighted atomic measure.
pub fn tms_from_atoms(index: &MonomialIndex, atoms: &[(f64, Vec<f64>)]) -> Vec<f64> {
    index
        .basis()
        .iter()
        .map(|e| atoms.iter().map(|(w, u)| w * e.eval(u)).sum())
        .collect()
}

/// `<p, y>` for a polynomial in the sequence's variables.
pub fn riesz(index: &MonomialIndex, p: &Polynomial, y: &[f64]) -> f64 {
    p.terms()
        .map(|(e, c)| c * y[index.index_of(e).expect("term within the truncation")])
        .sum()
}

fn poly_vector(index: &MonomialIndex, p: &Polynomial) -> Vec<f64> {
    let mut v = vec![0.0; index.len()];
    for (e, c) in p.terms() {
        v[index.index_of(e).expect("term within the truncation")] += c;
    }
    v
}

fn check_fits(k: u32, what: &str, p: &Polynomial) -> Result<(), RelaxError> {
    if p.degree() > 2 * k {
        return Err(RelaxError::OrderTooSmall {
            k,
            what: what.into(),
            degree: p.degree(),
        });
    }
    Ok(())
}

/// Assemble the order-`k` relaxation of the given kind.
pub fn assemble(
    kind: HierarchyKind,
    prob: &PopProblem,
    k: u32,
) -> Result<MomentRelaxation, RelaxError> {
    let d = prob.objective.degree();
    let (nvars, theta, nu, eqs, ineqs): (usize, Polynomial, Polynomial, Vec<Polynomial>, Vec<Polynomial>) =
        match kind {
            HierarchyKind::Homogenized | HierarchyKind::HomogenizedEven => {
                let h = build_homogenized(prob, kind == HierarchyKind::HomogenizedEven)?;
                let n1 = h.base.nvars;
                let nu = Polynomial::monomial(ExponentVector::unit(n1, 0).scaled(d), 1.0);
                (n1, h.base.objective, nu, h.base.equalities, h.base.inequalities)
            }
            HierarchyKind::PowerX0(l) => {
                let h = build_homogenized(prob, false)?;
                let n1 = h.base.nvars;
                let x0l = Polynomial::monomial(ExponentVector::unit(n1, 0).scaled(2 * l), 1.0);
                let nu = Polynomial::monomial(ExponentVector::unit(n1, 0).scaled(2 * l + d), 1.0);
                (n1, &x0l * &h.base.objective, nu, h.base.equalities, h.base.inequalities)
            }
            HierarchyKind::Denominator(m) => {
                let n = prob.nvars;
                let den = (Polynomial::constant(n, 1.0) + Polynomial::squared_norm(n)).pow(m);
                (
                    n,
                    &den * &prob.objective,
                    den,
                    prob.equalities.clone(),
                    prob.inequalities.clone(),
                )
            }
            HierarchyKind::StandardLasserre => (
                prob.nvars,
                prob.objective.clone(),
                Polynomial::constant(prob.nvars, 1.0),
                prob.equalities.clone(),
                prob.inequalities.clone(),
            ),
        };
    check_fits(k, "objective", &theta)?;
    check_fits(k, "normalizer", &nu)?;
    for (i, p) in eqs.iter().enumerate() {
        check_fits(k, &format!("equality {}", i), p)?;
    }
    for (i, q) in ineqs.iter().enumerate() {
        check_fits(k, &format!("inequality {}", i), q)?;
    }

    let index = MonomialIndex::new(nvars, 2 * k);
    let one = Polynomial::constant(nvars, 1.0);
    let mut psd_pencils = vec![LabeledPencil {
        label: "moment".into(),
        poly: one.clone(),
        basis_degree: k,
        pencil: localizing_pencil(&one, k, &index)?,
    }];
    for (i, q) in ineqs.iter().enumerate() {
        psd_pencils.push(LabeledPencil {
            label: format!("ineq{}", i),
            poly: q.clone(),
            basis_degree: k - q.degree().div_ceil(2),
            pencil: localizing_pencil(q, k, &index)?,
        });
    }

    let mut eq_rows = vec![EqRow {
        coeffs: sparse(&poly_vector(&index, &nu)),
        rhs: 1.0,
        origin: RowOrigin::Normalizer,
    }];
    for (i, p) in eqs.iter().enumerate() {
        for g in monomial_basis(nvars, 2 * k - p.degree()) {
            let shifted = p * &Polynomial::monomial(g.clone(), 1.0);
            eq_rows.push(EqRow {
                coeffs: sparse(&poly_vector(&index, &shifted)),
                rhs: 0.0,
                origin: RowOrigin::Equality { eq: i, shift: g },
            });
        }
    }

    let d_k = std::iter::once(d)
        .chain(eqs.iter().map(|p| p.degree()))
        .chain(ineqs.iter().map(|p| p.degree()))
        .map(|g| g.div_ceil(2))
        .max()
        .unwrap_or(0)
        .max(1);

    Ok(MomentRelaxation {
        kind,
        order: k,
        nvars,
        objective_vector: poly_vector(&index, &theta),
        index,
        theta,
        nu,
        psd_pencils,
        equality_polys: eqs,
        eq_rows,
        objective_degree: d,
        d_k,
    })
}

/// Positions in `basis` (all monomials of degree `<= t`) of the monomials that
/// are not leading terms of the span of `p * x^g`, `deg p + |g| <= t`.
/// Leading terms are taken by degree, then lexicographically, largest first.
fn standard_positions(basis: &[ExponentVector], t: u32, eqs: &[Polynomial]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..basis.len()).collect();
    order.sort_by(|&a, &b| {
        basis[b]
            .degree()
            .cmp(&basis[a].degree())
            .then_with(|| basis[b].exponents().cmp(basis[a].exponents()))
    });
    let mut col_of = HashMap::with_capacity(basis.len());
    for (c, &i) in order.iter().enumerate() {
        col_of.insert(basis[i].clone(), c);
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for p in eqs {
        let dp = p.degree();
        if dp > t || p.is_zero() {
            continue;
        }
        let nvars = basis.first().map_or(0, |e| e.nvars());
        for g in monomial_basis(nvars, t - dp) {
            let mut row = vec![0.0; basis.len()];
            for (e, c) in p.terms() {
                row[col_of[&e.add(&g)]] += c;
            }
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return (0..basis.len()).collect();
    }
    let scale = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = FACE_PIVOT_TOL * scale;
    let mut pivot = vec![false; basis.len()];
    let mut next = 0;
    for c in 0..basis.len() {
        if next == rows.len() {
            break;
        }
        let (best, val) = (next..rows.len())
            .map(|r| (r, rows[r][c].abs()))
            .fold((next, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            continue;
        }
        rows.swap(next, best);
        let pr = rows[next].clone();
        for r in rows.iter_mut().skip(next + 1) {
            let f = r[c] / pr[c];
            if f != 0.0 {
                for (x, &v) in r.iter_mut().zip(&pr).skip(c) {
                    *x -= f * v;
                }
            }
        }
        pivot[c] = true;
        next += 1;
    }
    let mut keep: Vec<usize> = (0..basis.len()).filter(|&c| !pivot[c]).map(|c| order[c]).collect();
    keep.sort_unstable();
    keep
}

fn sparse(v: &[f64]) -> Vec<(usize, f64)> {
    v.iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(i, c)| (i, *c))
        .collect()
}

/// SOS certificate `theta - gamma*nu = sum sigma_q q + sum phi_p p + residual`.
#[derive(Debug, Clone)]
pub struct SosCertificate {
    pub gamma: f64,
    /// Gram matrices, one per PSD pencil (moment matrix first).
    pub gram: Vec<DMatrix<f64>>,
    /// `sigma_q = [x]^T G_q [x]`.
    pub sos: Vec<Polynomial>,
    /// Multiplier `phi_p` per equality polynomial.
    pub eq_multipliers: Vec<Polynomial>,
    pub residual: Polynomial,
    pub residual_max: f64,
}

/// Recover the SOS side from the dual variables of a solved relaxation and
/// check the polynomial identity term by term.
pub fn sos_certificate_from_dual(
    rel: &MomentRelaxation,
    red: &ReducedSystem,
    sol: &SdpSolution,
) -> Result<SosCertificate, RelaxError> {
    if matches!(sol.status, SdpStatus::PrimalInfeasible | SdpStatus::DualInfeasible) {
        return Err(RelaxError::NotConverged(sol.status));
    }
    if sol.dual_blocks.len() != rel.psd_pencils.len()
        || red.pencil_bases.len() != rel.psd_pencils.len()
        || sol.eq_multipliers.len() != red.kept_rows.len() {
        return Err(RelaxError::Mismatch(format!(
            "{} blocks / {} multipliers for {} pencils / {} rows",
            sol.dual_blocks.len(),
            sol.eq_multipliers.len(),
            rel.psd_pencils.len(),
            red.kept_rows.len()
        )));
    }
    let n = rel.nvars;
    let mut gamma = 0.0;
    let mut eq_multipliers = vec![Polynomial::zero(n); rel.equality_polys.len()];
    for (&(row, scale), &w) in red.kept_rows.iter().zip(&sol.eq_multipliers) {
        match &rel.eq_rows[row].origin {
            RowOrigin::Normalizer => gamma += w * scale,
            RowOrigin::Equality { eq, shift } => {
                eq_multipliers[*eq].add_term(shift.clone(), w * scale);
            }
        }
    }
    let mut sos = Vec::with_capacity(rel.psd_pencils.len());
    let mut residual = rel.theta.clone() - rel.nu.scale(gamma);
    for ((lp, x), basis) in rel.psd_pencils.iter().zip(&sol.dual_blocks).zip(&red.pencil_bases) {
        let mut s = Polynomial::zero(n);
        for a in 0..basis.len() {
            for b in 0..basis.len() {
                s.add_term(basis[a].add(&basis[b]), x[(a, b)]);
            }
        }
        residual = residual - &s * &lp.poly;
        sos.push(s);
    }
    for (phi, p) in eq_multipliers.iter().zip(&rel.equality_polys) {
        residual = residual - phi * p;
    }
    let residual_max = residual.max_abs_coeff();
    Ok(SosCertificate {
        gamma,
        gram: sol.dual_blocks.clone(),
        sos,
        eq_multipliers,
        residual,
        residual_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::binomial;
    use crate::sdp::{solve, SdpOptions};

    fn cubic_constraints() -> PopProblem {
        let n = 2;
        let f = Polynomial::from_terms(n, [(vec![1, 0], 1.0), (vec![0, 1], 1.0)]);
        let c1 = Polynomial::from_terms(n, [(vec![3, 0], 1.0), (vec![0, 1], 1.0), (vec![0, 0], 1.0)]);
        let c2 = Polynomial::from_terms(n, [(vec![0, 3], 1.0), (vec![1, 0], -1.0), (vec![0, 0], 1.0)]);
        PopProblem::new(f, vec![], vec![c1, c2]).unwrap()
    }

    #[test]
    fn homogenized_cubic_constraints() {
        let h = build_homogenized(&cubic_constraints(), false).unwrap();
        assert_eq!(h.base.nvars, 3);
        let sphere = Polynomial::from_terms(
            3,
            [(vec![2, 0, 0], 1.0), (vec![0, 2, 0], 1.0), (vec![0, 0, 2], 1.0), (vec![0, 0, 0], -1.0)],
        );
        assert_eq!(h.base.equalities, vec![sphere]);
        let c1 = Polynomial::from_terms(3, [(vec![0, 3, 0], 1.0), (vec![2, 0, 1], 1.0), (vec![3, 0, 0], 1.0)]);
        let c2 = Polynomial::from_terms(3, [(vec![0, 0, 3], 1.0), (vec![2, 1, 0], -1.0), (vec![3, 0, 0], 1.0)]);
        assert_eq!(h.base.inequalities, vec![c1, c2, Polynomial::var(3, 0)]);
        assert!(h.includes_x0_constraint);
        assert_eq!(h.objective_degree, 1);
    }

    #[test]
    fn even_variant_rules() {
        assert!(matches!(
            build_homogenized(&cubic_constraints(), true),
            Err(RelaxError::OddDegree { .. })
        ));
        let f = Polynomial::from_terms(2, [(vec![4, 0], 1.0), (vec![0, 2], 1.0)]);
        let g = Polynomial::from_terms(2, [(vec![0, 0], 1.0), (vec![2, 0], -1.0)]);
        let h = build_homogenized(&PopProblem::new(f.clone(), vec![], vec![g]).unwrap(), true).unwrap();
        assert_eq!(h.base.inequalities.len(), 1);
        let u = build_homogenized(&PopProblem::unconstrained(f), false).unwrap();
        assert_eq!(u.base.equalities.len(), 1);
        assert_eq!(u.base.inequalities, vec![Polynomial::var(3, 0)]);
    }

    #[test]
    fn hankel_moment_pencil() {
        let idx = MonomialIndex::new(1, 2);
        let pen = localizing_pencil(&Polynomial::constant(1, 1.0), 1, &idx).unwrap();
        let m = pen.eval(&[10.0, 20.0, 30.0]);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[10.0, 20.0, 20.0, 30.0]));
    }

    #[test]
    fn localizing_x0_at_order_one() {
        let idx = MonomialIndex::new(2, 2);
        let pen = localizing_pencil(&Polynomial::var(2, 0), 1, &idx).unwrap();
        assert_eq!(pen.dim(), 1);
        let y: Vec<f64> = (0..idx.len()).map(|i| i as f64 + 1.0).collect();
        let i10 = idx.index_of(&ExponentVector::new(vec![1, 0])).unwrap();
        assert_eq!(pen.eval(&y)[(0, 0)], y[i10]);
        assert!(localizing_pencil(&Polynomial::var(2, 0).pow(3), 1, &idx).is_err());
    }

    #[test]
    fn dirac_lift_evaluates_to_scaled_outer_product() {
        let idx = MonomialIndex::new(2, 4);
        let u = [0.7, -1.3];
        let y = tms_from_atoms(&idx, &[(1.0, u.to_vec())]);
        let p = Polynomial::from_terms(2, [(vec![0, 0], 1.0), (vec![2, 0], -1.0), (vec![0, 1], 0.5)]);
        let pen = localizing_pencil(&p, 2, &idx).unwrap();
        let basis = monomial_basis(2, 1);
        let v = DVector::from_iterator(basis.len(), basis.iter().map(|e| e.eval(&u)));
        let expect = &v * v.transpose() * p.eval(&u).unwrap();
        assert!((pen.eval(&y) - expect).amax() < 1e-12);
    }

    #[test]
    fn cubic_constraints_sizes() {
        let rel = assemble(HierarchyKind::Homogenized, &cubic_constraints(), 3).unwrap();
        assert_eq!(rel.tms_dim(), binomial(9, 6));
        assert_eq!(rel.tms_dim(), 84);
        let dims: Vec<usize> = rel.psd_pencils.iter().map(|l| l.pencil.dim()).collect();
        assert_eq!(dims, vec![binomial(6, 3), binomial(4, 1), binomial(4, 1), binomial(5, 2)]);
        assert_eq!(rel.d_k, 2);
    }

    #[test]
    fn order_too_small_is_rejected() {
        assert!(matches!(
            assemble(HierarchyKind::Homogenized, &cubic_constraints(), 1),
            Err(RelaxError::OrderTooSmall { .. })
        ));
    }

    #[test]
    fn standard_min_x_squared() {
        let f = Polynomial::from_terms(1, [(vec![2], 1.0)]);
        let rel = assemble(HierarchyKind::StandardLasserre, &PopProblem::unconstrained(f), 1).unwrap();
        assert_eq!(rel.objective_vector, vec![0.0, 0.0, 1.0]);
        let red = rel.to_sdp();
        let sol = solve(&red.instance, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.primal_obj.abs() < 1e-7);
        let cert = sos_certificate_from_dual(&rel, &red, &sol).unwrap();
        assert!(cert.gamma.abs() < 1e-7);
        assert!(cert.residual_max < 1e-7);
        let g = &cert.gram[0];
        assert!(g[(0, 0)].abs() < 1e-6 && g[(0, 1)].abs() < 1e-6);
        assert!((g[(1, 1)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn denominator_with_zero_power_matches_standard() {
        let f = Polynomial::from_terms(2, [(vec![4, 0], 1.0), (vec![0, 2], 1.0), (vec![1, 1], -0.5)]);
        let prob = PopProblem::unconstrained(f);
        let a = assemble(HierarchyKind::Denominator(0), &prob, 2).unwrap();
        let b = assemble(HierarchyKind::StandardLasserre, &prob, 2).unwrap();
        assert_eq!(a.objective_vector, b.objective_vector);
        assert_eq!(a.eq_rows, b.eq_rows);
        assert_eq!(a.psd_pencils.len(), b.psd_pencils.len());
        for (x, y) in a.psd_pencils.iter().zip(&b.psd_pencils) {
            assert_eq!(x.pencil, y.pencil);
        }
    }

    #[test]
    fn dependent_rows_are_removed() {
        // c = x1 - x2 twice gives identical row blocks
        let f = Polynomial::from_terms(2, [(vec![2, 0], 1.0), (vec![0, 2], 1.0)]);
        let c = Polynomial::from_terms(2, [(vec![1, 0], 1.0), (vec![0, 1], -1.0)]);
        let prob = PopProblem::new(f, vec![c.clone(), c], vec![]).unwrap();
        let rel = assemble(HierarchyKind::StandardLasserre, &prob, 2).unwrap();
        let red = rel.to_sdp();
        let per_eq = binomial(2 + 3, 3);
        assert_eq!(rel.eq_rows.len(), 1 + 2 * per_eq);
        assert_eq!(red.kept_rows.len(), 1 + per_eq);
        assert_eq!(red.kept_rows[0].0, 0);
        let sol = solve(&red.instance, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.primal_obj.abs() < 1e-6);
    }

    #[test]
    fn blocks_reduced_by_the_sphere() {
        let rel = assemble(HierarchyKind::Homogenized, &cubic_constraints(), 3).unwrap();
        let full = rel.to_sdp_with(false);
        let dims: Vec<usize> = full.instance.pencils.iter().map(|p| p.dim()).collect();
        assert_eq!(dims, vec![20, 4, 4, 10]);
        // standard monomials of degree <= t modulo one quadric in 3 variables
        let hilbert = |t: u32| {
            let t = t as usize;
            binomial(3 + t, t) - if t >= 2 { binomial(1 + t, t - 2) } else { 0 }
        };
        let red = rel.to_sdp();
        let dims: Vec<usize> = red.instance.pencils.iter().map(|p| p.dim()).collect();
        let expect: Vec<usize> = rel.psd_pencils.iter().map(|l| hilbert(l.basis_degree)).collect();
        assert_eq!(dims, expect);
        assert_eq!(dims, vec![16, 4, 4, 9]);
        for (b, p) in red.pencil_bases.iter().zip(&red.instance.pencils) {
            assert_eq!(b.len(), p.dim());
            // x0^2 is the leading term of the sphere, so never standard
            assert!(b.iter().all(|e| e.exponents()[0] < 2));
        }
    }

    #[test]
    fn equality_multiples_lie_in_the_kernel() {
        let rel = assemble(HierarchyKind::Homogenized, &cubic_constraints(), 3).unwrap();
        let u = [0.6, 0.0, 0.8];
        let y = tms_from_atoms(&rel.index, &[(1.0, u.to_vec())]);
        let basis = monomial_basis(3, 3);
        let m = rel.psd_pencils[0].pencil.eval(&y);
        let sphere = &rel.equality_polys[0];
        for g in monomial_basis(3, 1) {
            let h = sphere * &Polynomial::monomial(g, 1.0);
            let v = DVector::from_iterator(
                basis.len(),
                basis.iter().map(|e| h.terms().find(|(t, _)| *t == e).map_or(0.0, |(_, c)| c)),
            );
            assert!((&m * v).amax() < 1e-12);
        }
    }

    #[test]
    fn reduced_certificate_identity() {
        let f = Polynomial::from_terms(1, [(vec![2], 1.0)]);
        let rel = assemble(HierarchyKind::Homogenized, &PopProblem::unconstrained(f), 2).unwrap();
        let red = rel.to_sdp();
        assert_eq!(red.instance.pencils[0].dim(), 5);
        let sol = solve(&red.instance, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.primal_obj.abs() < 1e-7);
        let cert = sos_certificate_from_dual(&rel, &red, &sol).unwrap();
        assert_eq!(cert.gram[0].nrows(), 5);
        assert!(cert.residual_max < 1e-7, "{}", cert.residual_max);
    }
}
