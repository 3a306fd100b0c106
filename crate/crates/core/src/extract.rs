//! Flatness tests and atom extraction from truncated moment sequences.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::poly::{monomial_basis, ExponentVector, MonomialIndex};
use crate::relax::{moment_matrix, tms_from_atoms};

pub const DEFAULT_RANK_TOL: f64 = 1e-6;
pub const DEFAULT_TAU_TOL: f64 = 1e-4;

/// Condition number of the pivot block beyond which extraction gives up.
const MAX_BASIS_COND: f64 = 1e10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("moment matrix of order {t} has rank 0")]
    ZeroRank { t: u32 },
    #[error("rank {rank} exceeds the {available} monomials of degree < {t}")]
    RankTooLarge { rank: usize, available: usize, t: u32 },
    #[error("ill-conditioned eigenbasis (condition estimate {cond:e})")]
    IllConditioned { cond: f64 },
    #[error("multiplication matrices have complex eigenvalues (imaginary part {imag:e})")]
    ComplexEigenvalues { imag: f64 },
    #[error("order {t} outside the available truncation")]
    BadOrder { t: u32 },
    #[error("atom with negative first coordinate {tau}")]
    NegativeTau { tau: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub weight: f64,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedPoint {
    pub point: Vec<f64>,
    pub weight: f64,
}

/// Atoms of a homogenized relaxation split by their first coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomSet {
    pub atoms: Vec<Atom>,
    /// `u = v / tau` with weight `a * tau^d`.
    pub regular: Vec<WeightedPoint>,
    /// `v` with weight `a`.
    pub at_infinity: Vec<WeightedPoint>,
    pub d: u32,
    /// Sum of the regular weights (1 for a normalized sequence).
    pub regular_weight: f64,
}

/// Eigenvalues above `tol * max(1, lambda_max)`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let ev = SymmetricEigen::new(sym(m)).eigenvalues;
    let thr = tol * ev.max().max(1.0);
    ev.iter().filter(|&&l| l > thr).count()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn ranks(index: &MonomialIndex, y: &[f64], k: u32, tol: f64) -> Vec<usize> {
    (0..=k)
        .map(|t| numerical_rank(&moment_matrix(index, y, t), tol))
        .collect()
}

/// Smallest `t` in `[d_k, k]` with `rank M_t = rank M_{t - d_k}`.
pub fn flat_truncation(index: &MonomialIndex, y: &[f64], d_k: u32, k: u32, tol: f64) -> Option<u32> {
    if d_k > k || 2 * k > index.max_degree() {
        return None;
    }
    let r = ranks(index, y, k, tol);
    (d_k..=k).find(|&t| r[t as usize] > 0 && r[t as usize] == r[(t - d_k) as usize])
}

/// Smallest `t` in `[1, k]` with `rank M_t = rank M_{t-1}`.
pub fn flat_extension(index: &MonomialIndex, y: &[f64], k: u32, tol: f64) -> Option<u32> {
    if k == 0 || 2 * k > index.max_degree() {
        return None;
    }
    let r = ranks(index, y, k, tol);
    (1..=k).find(|&t| r[t as usize] > 0 && r[t as usize] == r[(t - 1) as usize])
}

/// Recover `r = rank M_t` atoms from a flat moment sequence.
///
/// `M_t = V V^T`; pivot rows among monomials of degree `< t` give the
/// column-echelon form `U = V V_B^{-1}`, from which the multiplication
/// matrices are read off and jointly triangularized.
pub fn extract_atoms(
    index: &MonomialIndex,
    y: &[f64],
    t: u32,
    tol: f64,
    seed: u64,
) -> Result<Vec<Atom>, ExtractError> {
    if t == 0 || 2 * t > index.max_degree() {
        return Err(ExtractError::BadOrder { t });
    }
    let n = index.nvars();
    let basis = monomial_basis(n, t);
    let mt = sym(&moment_matrix(index, y, t));
    let eig = SymmetricEigen::new(mt);
    let lmax = eig.eigenvalues.max().max(1.0);
    let mut order: Vec<usize> = (0..basis.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > tol * lmax)
        .collect();
    let r = keep.len();
    if r == 0 {
        return Err(ExtractError::ZeroRank { t });
    }
    let mut v = DMatrix::zeros(basis.len(), r);
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        v.set_column(c, &(eig.eigenvectors.column(i) * s));
    }

    // pivoted row selection among degree < t
    let lower = basis.iter().take_while(|e| e.degree() < t).count();
    if r > lower {
        return Err(ExtractError::RankTooLarge {
            rank: r,
            available: lower,
            t,
        });
    }
    let mut resid: Vec<DVector<f64>> = (0..lower).map(|i| v.row(i).transpose()).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(r);
    for _ in 0..r {
        let (best, _) = (0..lower)
            .filter(|i| !chosen.contains(i))
            .map(|i| (i, resid[i].norm()))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let q = &resid[best] / resid[best].norm().max(1e-300);
        for (i, rv) in resid.iter_mut().enumerate() {
            if i != best && !chosen.contains(&i) {
                let p = q.dot(rv);
                *rv -= &q * p;
            }
        }
        chosen.push(best);
    }
    chosen.sort_unstable();
    let mut vb = DMatrix::zeros(r, r);
    for (j, &i) in chosen.iter().enumerate() {
        vb.set_row(j, &v.row(i));
    }
    let sv = vb.clone().svd(false, false).singular_values;
    let cond = sv.max() / sv.min().max(1e-300);
    if !cond.is_finite() || cond > MAX_BASIS_COND {
        return Err(ExtractError::IllConditioned { cond });
    }
    let vb_inv = vb.try_inverse().ok_or(ExtractError::IllConditioned { cond: f64::INFINITY })?;
    let u = &v * vb_inv;

    let mults: Vec<DMatrix<f64>> = (0..n)
        .map(|var| {
            let mut nm = DMatrix::zeros(r, r);
            for (j, &bi) in chosen.iter().enumerate() {
                let shifted = basis[bi].add(&ExponentVector::unit(n, var));
                let row = basis.iter().position(|e| *e == shifted).expect("degree <= t");
                nm.set_row(j, &u.row(row));
            }
            nm
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coef: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.1).collect();
    let total: f64 = coef.iter().sum();
    coef.iter_mut().for_each(|c| *c /= total);
    let mut comb = DMatrix::zeros(r, r);
    for (c, m) in coef.iter().zip(&mults) {
        comb += m * *c;
    }
    let scale = comb.amax().max(1.0);
    let schur = nalgebra::linalg::Schur::try_new(comb, 1e-14, 10_000)
        .ok_or(ExtractError::IllConditioned { cond: f64::INFINITY })?;
    let (q, tmat) = schur.unpack();
    for j in 0..r.saturating_sub(1) {
        let sub = tmat[(j + 1, j)];
        if sub.abs() > 1e-8 * scale {
            return Err(ExtractError::ComplexEigenvalues { imag: sub.abs() });
        }
    }
    let points: Vec<Vec<f64>> = {
        let diag: Vec<DMatrix<f64>> = mults.iter().map(|m| q.transpose() * m * &q).collect();
        (0..r).map(|j| diag.iter().map(|d| d[(j, j)]).collect()).collect()
    };

    // weights by least squares on the moments of degree <= 2t
    let nmom = index.count_up_to(2 * t);
    let mut a = DMatrix::zeros(nmom, r);
    for (j, p) in points.iter().enumerate() {
        for i in 0..nmom {
            a[(i, j)] = index.monomial(i).eval(p);
        }
    }
    let b = DVector::from_column_slice(&y[..nmom]);
    let w = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|_| ExtractError::IllConditioned { cond: f64::INFINITY })?;
    Ok(points
        .into_iter()
        .zip(w.iter())
        .map(|(point, &weight)| Atom { weight, point })
        .collect())
}

/// Largest entry of `y|_{2s} - sum_j a_j [p_j]_{2s}`.
pub fn reconstruction_error(index: &MonomialIndex, y: &[f64], atoms: &[Atom], s: u32) -> f64 {
    let sub = MonomialIndex::new(index.nvars(), 2 * s);
    let rebuilt = tms_from_atoms(
        &sub,
        &atoms
            .iter()
            .map(|a| (a.weight, a.point.clone()))
            .collect::<Vec<_>>(),
    );
    rebuilt
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Replace atoms with negative first coordinate by their antipodes and
/// merge duplicates. Used by the even variant, where `(tau, v)` and
/// `(-tau, -v)` represent the same point.
pub fn fold_antipodes(atoms: Vec<Atom>, tol: f64) -> Vec<Atom> {
    let mut out: Vec<Atom> = Vec::new();
    for mut a in atoms {
        if a.point.first().copied().unwrap_or(0.0) < 0.0 {
            a.point.iter_mut().for_each(|x| *x = -*x);
        }
        if let Some(b) = out.iter_mut().find(|b| {
            b.point
                .iter()
                .zip(&a.point)
                .all(|(p, q)| (p - q).abs() <= tol)
        }) {
            b.weight += a.weight;
        } else {
            out.push(a);
        }
    }
    out
}

/// Split homogenized atoms `(tau, v)` into regular points and points at infinity.
///
/// An atom counts as regular when both `tau` and its normalized weight
/// `a * tau^d` exceed `tau_tol`. A solver stopped short of exact optimality
/// leaves points at infinity with small positive `tau` and a negligible
/// normalized weight; those are sent to infinity with `v` rescaled onto the
/// unit sphere.
pub fn classify(atoms: &[Atom], d: u32, tau_tol: f64) -> Result<AtomSet, ExtractError> {
    let mut regular = Vec::new();
    let mut at_infinity = Vec::new();
    for a in atoms {
        let tau = a.point[0];
        let v = &a.point[1..];
        if tau < -tau_tol {
            return Err(ExtractError::NegativeTau { tau });
        }
        let nu = a.weight * tau.max(0.0).powi(d as i32);
        if tau > tau_tol && nu > tau_tol {
            regular.push(WeightedPoint {
                point: v.iter().map(|x| x / tau).collect(),
                weight: nu,
            });
        } else {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let point = if norm > 0.0 {
                v.iter().map(|x| x / norm).collect()
            } else {
                v.to_vec()
            };
            at_infinity.push(WeightedPoint {
                point,
                weight: a.weight,
            });
        }
    }
    let regular_weight = regular.iter().map(|p| p.weight).sum();
    Ok(AtomSet {
        atoms: atoms.to_vec(),
        regular,
        at_infinity,
        d,
        regular_weight,
    })
}
