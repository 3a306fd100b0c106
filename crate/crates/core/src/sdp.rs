//! Dense primal-dual interior-point solver for moment-form SDPs.
//!
//! The problem shape is
//!
//! ```text
//!   minimize    c^T y
//!   subject to  A y = b
//!               F_j(y) = sum_i y_i F_ji  is PSD   for every pencil j
//! ```
//!
//! with free `y`. Its dual is
//!
//! ```text
//!   maximize    b^T w
//!   subject to  A^T w + sum_j F_j^*(X_j) = c,   X_j PSD
//! ```
//!
//! The iteration is an infeasible-start path-following method with the
//! HKM search direction and Mehrotra's predictor-corrector. The Newton
//! system is reduced to the Schur complement `M` on `y` (dense Cholesky)
//! plus a small saddle-point solve for the equality multipliers.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("pencil {pencil} is not symmetric (entry ({row},{col}) for variable {var})")]
    NonSymmetric {
        pencil: usize,
        var: usize,
        row: usize,
        col: usize,
    },
    #[error("equality system is rank deficient (rank {rank} < {rows} rows)")]
    RankDeficient { rank: usize, rows: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One coefficient of a symmetric pencil: `coef * y[var]` at `(row, col)`
/// and, when off-diagonal, at `(col, row)`. Always `row <= col`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PencilEntry {
    pub var: usize,
    pub row: usize,
    pub col: usize,
    pub coef: f64,
}

/// Linear symmetric matrix pencil `y -> sum_i y_i F_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymPencil {
    dim: usize,
    entries: Vec<PencilEntry>,
}

impl SymPencil {
    pub fn new(dim: usize) -> Self {
        SymPencil {
            dim,
            entries: Vec::new(),
        }
    }

    /// Add `coef * y[var]` at `(row, col)` and its mirror.
    pub fn push(&mut self, var: usize, row: usize, col: usize, coef: f64) {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        self.entries.push(PencilEntry {
            var,
            row,
            col,
            coef,
        });
    }

    /// Build from explicit coefficient matrices `F_var`. Each must be symmetric.
    pub fn from_dense(dim: usize, mats: &[(usize, DMatrix<f64>)]) -> Result<Self, SdpError> {
        let mut p = SymPencil::new(dim);
        for (var, m) in mats {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(SdpError::Dimension(format!(
                    "coefficient matrix for variable {} is {}x{}, expected {}x{}",
                    var,
                    m.nrows(),
                    m.ncols(),
                    dim,
                    dim
                )));
            }
            for r in 0..dim {
                for c in r..dim {
                    let a = m[(r, c)];
                    let b = m[(c, r)];
                    if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                        return Err(SdpError::NonSymmetric {
                            pencil: 0,
                            var: *var,
                            row: r,
                            col: c,
                        });
                    }
                    if a != 0.0 {
                        p.push(*var, r, c, a);
                    }
                }
            }
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Principal subpencil on the rows/columns `keep` (in that order).
    pub fn principal(&self, keep: &[usize]) -> SymPencil {
        let mut pos = vec![usize::MAX; self.dim];
        for (i, &k) in keep.iter().enumerate() {
            pos[k] = i;
        }
        let mut out = SymPencil::new(keep.len());
        for e in &self.entries {
            let (r, c) = (pos[e.row], pos[e.col]);
            if r != usize::MAX && c != usize::MAX {
                out.push(e.var, r, c, e.coef);
            }
        }
        out
    }

    pub fn entries(&self) -> &[PencilEntry] {
        &self.entries
    }

    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.dim, self.dim);
        for e in &self.entries {
            let v = e.coef * y[e.var];
            s[(e.row, e.col)] += v;
            if e.row != e.col {
                s[(e.col, e.row)] += v;
            }
        }
        s
    }

    /// Accumulate `out[var] += <F_var, X>`.
    pub fn adjoint_into(&self, x: &DMatrix<f64>, out: &mut [f64]) {
        for e in &self.entries {
            let w = if e.row == e.col { 1.0 } else { 2.0 };
            out[e.var] += w * e.coef * x[(e.row, e.col)];
        }
    }
}

/// One SDP in moment form.
#[derive(Debug, Clone)]
pub struct SdpInstance {
    pub dim: usize,
    pub objective: Vec<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: Vec<f64>,
    pub pencils: Vec<SymPencil>,
}

impl SdpInstance {
    pub fn validate(&self) -> Result<(), SdpError> {
        if self.objective.len() != self.dim {
            return Err(SdpError::Dimension(format!(
                "objective has length {}, expected {}",
                self.objective.len(),
                self.dim
            )));
        }
        if self.eq_matrix.nrows() != self.eq_rhs.len() {
            return Err(SdpError::Dimension(format!(
                "equality matrix has {} rows but rhs has {}",
                self.eq_matrix.nrows(),
                self.eq_rhs.len()
            )));
        }
        if self.eq_matrix.nrows() > 0 && self.eq_matrix.ncols() != self.dim {
            return Err(SdpError::Dimension(format!(
                "equality matrix has {} columns, expected {}",
                self.eq_matrix.ncols(),
                self.dim
            )));
        }
        for (j, p) in self.pencils.iter().enumerate() {
            for e in p.entries() {
                if e.var >= self.dim || e.col >= p.dim() || e.row > e.col {
                    return Err(SdpError::Dimension(format!(
                        "pencil {} has entry out of range: {:?}",
                        j, e
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_rank(&self) -> Result<(), SdpError> {
        let p = self.eq_matrix.nrows();
        if p == 0 {
            return Ok(());
        }
        if p > self.dim {
            return Err(SdpError::RankDeficient {
                rank: self.dim,
                rows: p,
            });
        }
        let sv = self.eq_matrix.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let rank = sv.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count();
        if rank < p {
            return Err(SdpError::RankDeficient { rank, rows: p });
        }
        Ok(())
    }

    /// Write in SDPA sparse format. Equalities become a diagonal LP block
    /// holding `a^T y - b >= 0` and `-a^T y + b >= 0`.
    pub fn write_sdpa<W: Write>(&self, mut out: W) -> Result<(), SdpError> {
        let p = self.eq_matrix.nrows();
        writeln!(out, "\"moment relaxation exported by hompop")?;
        writeln!(out, "{}", self.dim)?;
        let nblocks = self.pencils.len() + usize::from(p > 0);
        writeln!(out, "{}", nblocks)?;
        let mut sizes: Vec<String> = self.pencils.iter().map(|s| s.dim().to_string()).collect();
        if p > 0 {
            sizes.push(format!("-{}", 2 * p));
        }
        writeln!(out, "{}", sizes.join(" "))?;
        let cs: Vec<String> = self.objective.iter().map(|c| format!("{:e}", c)).collect();
        writeln!(out, "{}", cs.join(" "))?;
        let lp_block = self.pencils.len() + 1;
        for (r, &b) in self.eq_rhs.iter().enumerate() {
            if b != 0.0 {
                writeln!(out, "0 {} {} {} {:e}", lp_block, 2 * r + 1, 2 * r + 1, b)?;
                writeln!(out, "0 {} {} {} {:e}", lp_block, 2 * r + 2, 2 * r + 2, -b)?;
            }
        }
        // SDPA wants entries grouped by matrix number
        let mut lines: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
        for (j, pen) in self.pencils.iter().enumerate() {
            for e in pen.entries() {
                lines.push((e.var + 1, j + 1, e.row + 1, e.col + 1, e.coef));
            }
        }
        for r in 0..p {
            for i in 0..self.dim {
                let a = self.eq_matrix[(r, i)];
                if a != 0.0 {
                    lines.push((i + 1, lp_block, 2 * r + 1, 2 * r + 1, a));
                    lines.push((i + 1, lp_block, 2 * r + 2, 2 * r + 2, -a));
                }
            }
        }
        lines.sort_by_key(|a| (a.0, a.1, a.2, a.3));
        // merge duplicates created by repeated pencil entries
        let mut merged: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
        for l in lines {
            match merged.last_mut() {
                Some(m) if (m.0, m.1, m.2, m.3) == (l.0, l.1, l.2, l.3) => m.4 += l.4,
                _ => merged.push(l),
            }
        }
        for (m, b, i, j, v) in merged {
            writeln!(out, "{} {} {} {} {:e}", m, b, i, j, v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SdpOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Fraction-to-boundary factor for step lengths.
    pub step_fraction: f64,
    pub seed: u64,
    pub max_attempts: usize,
    /// Iterate norm beyond which the run is treated as divergent.
    pub divergence_limit: f64,
    /// Radius `R` of the bounding constraint `sum_j tr F_j(y) <= R` added to
    /// every solve. `None` solves the instance as given.
    pub big_m: Option<f64>,
    pub direction: Direction,
    /// Multiple of the identity used for the initial `X` and `S`.
    pub initial_scale: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iter: 200,
            step_fraction: 0.98,
            seed: 0,
            max_attempts: 3,
            divergence_limit: 1e8,
            big_m: Some(1e6),
            direction: Direction::Hkm,
            initial_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SdpStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    NumericalTrouble,
    IterLimit,
}

impl SdpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SdpStatus::Optimal => "Optimal",
            SdpStatus::PrimalInfeasible => "PrimalInfeasible",
            SdpStatus::DualInfeasible => "DualInfeasible",
            SdpStatus::NumericalTrouble => "NumericalTrouble",
            SdpStatus::IterLimit => "IterLimit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub y: Vec<f64>,
    /// `F_j(y)` at the returned `y`.
    pub pencil_values: Vec<DMatrix<f64>>,
    /// Multipliers `w` of the equality rows.
    pub eq_multipliers: Vec<f64>,
    /// Dual PSD blocks `X_j`.
    pub dual_blocks: Vec<DMatrix<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    pub attempts: usize,
    pub rel_gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    /// Normalized improving ray (`y` for dual infeasibility, `w` for primal).
    pub witness: Option<Vec<f64>>,
    /// The bounding constraint of `SdpOptions::big_m` is active, so the
    /// optimum of the original instance is not attained inside the ball.
    pub bound_active: bool,
}

impl SdpSolution {
    /// `<F_j(y), X_j>` per pencil.
    pub fn complementarity(&self) -> Vec<f64> {
        self.pencil_values
            .iter()
            .zip(&self.dual_blocks)
            .map(|(s, x)| s.dot(x))
            .collect()
    }
}

struct Block {
    dim: usize,
    /// Entries per variable, with off-diagonal entries expanded to both triangles.
    by_var: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

impl Block {
    fn from_pencil(p: &SymPencil) -> Self {
        let mut map: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> =
            std::collections::BTreeMap::new();
        for e in p.entries() {
            let v = map.entry(e.var).or_default();
            v.push((e.row, e.col, e.coef));
            if e.row != e.col {
                v.push((e.col, e.row, e.coef));
            }
        }
        Block {
            dim: p.dim(),
            by_var: map.into_iter().collect(),
        }
    }

    fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.dim, self.dim);
        for (var, ents) in &self.by_var {
            let yv = y[*var];
            if yv == 0.0 {
                continue;
            }
            for &(a, b, v) in ents {
                s[(a, b)] += v * yv;
            }
        }
        s
    }

    fn adjoint_into(&self, u: &DMatrix<f64>, out: &mut DVector<f64>) {
        for (var, ents) in &self.by_var {
            let mut acc = 0.0;
            for &(a, b, v) in ents {
                acc += v * u[(a, b)];
            }
            out[*var] += acc;
        }
    }

    /// Writes `svec(G^T F_i G)` for every variable `i` of this block into
    /// rows `row0..` of `bmat`, so that `B^T B` is the NT Schur complement.
    fn scaled_columns(&self, g: &DMatrix<f64>, bmat: &mut DMatrix<f64>, row0: usize) {
        let n = self.dim;
        let gt = g.transpose();
        let mut q = DMatrix::<f64>::zeros(n, n);
        let r2 = std::f64::consts::SQRT_2;
        for (var, ents) in &self.by_var {
            q.fill(0.0);
            for &(a, b, v) in ents {
                q.ger(v, &gt.column(a), &gt.column(b), 1.0);
            }
            let mut r = row0;
            for j in 0..n {
                bmat[(r, *var)] = q[(j, j)];
                r += 1;
                for i in j + 1..n {
                    bmat[(r, *var)] = (q[(i, j)] + q[(j, i)]) * 0.5 * r2;
                    r += 1;
                }
            }
        }
    }

    /// Adds `tr(F_i X F_k G)` for all variable pairs of this block into `m`.
    fn add_schur(&self, x: &DMatrix<f64>, g: &DMatrix<f64>, m: &mut DMatrix<f64>) {
        let n = self.dim;
        let mut q = DMatrix::<f64>::zeros(n, n);
        for (ii, (vi, ents_i)) in self.by_var.iter().enumerate() {
            q.fill(0.0);
            // q = G F_i X
            for &(a, b, v) in ents_i {
                q.ger(v, &g.column(a), &x.column(b), 1.0);
            }
            for (vk, ents_k) in &self.by_var[ii..] {
                let mut acc = 0.0;
                for &(c, d, w) in ents_k {
                    acc += w * q[(d, c)];
                }
                m[(*vi, *vk)] += acc;
                if vi != vk {
                    m[(*vk, *vi)] += acc;
                }
            }
        }
    }
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `alpha` in `(0, 1]` (scaled by `frac`) keeping `z + alpha dz` PSD.
fn step_length(z: &DMatrix<f64>, dz: &DMatrix<f64>, frac: f64) -> f64 {
    let chol = match Cholesky::new(z.clone()) {
        Some(c) => c,
        None => return 0.0,
    };
    let l = chol.l();
    let linv = match l.clone().try_inverse() {
        Some(li) => li,
        None => return 0.0,
    };
    let w = &linv * dz * linv.transpose();
    let w = sym(&w);
    let lmin = SymmetricEigen::new(w).eigenvalues.min();
    if lmin >= 0.0 {
        1.0
    } else {
        (frac * (-1.0 / lmin)).min(1.0)
    }
}

struct State {
    y: DVector<f64>,
    w: DVector<f64>,
    s: Vec<DMatrix<f64>>,
    x: Vec<DMatrix<f64>>,
}

struct Residuals {
    rp: DVector<f64>,
    rd: DVector<f64>,
    rs: Vec<DMatrix<f64>>,
    pobj: f64,
    dobj: f64,
    mu: f64,
    rel_gap: f64,
    pinf: f64,
    dinf: f64,
}

struct Engine<'a> {
    inst: &'a SdpInstance,
    blocks: Vec<Block>,
    a: &'a DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    ntot: f64,
}

impl<'a> Engine<'a> {
    fn new(inst: &'a SdpInstance) -> Self {
        let blocks: Vec<Block> = inst.pencils.iter().map(Block::from_pencil).collect();
        let ntot = blocks.iter().map(|b| b.dim).sum::<usize>().max(1) as f64;
        Engine {
            inst,
            blocks,
            a: &inst.eq_matrix,
            b: DVector::from_column_slice(&inst.eq_rhs),
            c: DVector::from_column_slice(&inst.objective),
            ntot,
        }
    }

    fn m(&self) -> usize {
        self.inst.dim
    }

    fn p(&self) -> usize {
        self.inst.eq_rhs.len()
    }

    fn eval_pencils(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|b| b.eval(y.as_slice())).collect()
    }

    fn adjoint(&self, us: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for (b, u) in self.blocks.iter().zip(us) {
            b.adjoint_into(u, &mut out);
        }
        out
    }

    fn a_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.p() == 0 {
            DVector::zeros(0)
        } else {
            self.a * y
        }
    }

    fn at_mul(&self, w: &DVector<f64>) -> DVector<f64> {
        if self.p() == 0 {
            DVector::zeros(self.m())
        } else {
            self.a.transpose() * w
        }
    }

    fn residuals(&self, st: &State) -> Residuals {
        let rp = &self.b - self.a_mul(&st.y);
        let fy = self.eval_pencils(&st.y);
        let rs: Vec<DMatrix<f64>> = fy.iter().zip(&st.s).map(|(f, s)| f - s).collect();
        let rd = &self.c - self.at_mul(&st.w) - self.adjoint(&st.x);
        let pobj = self.c.dot(&st.y);
        let dobj = self.b.dot(&st.w);
        let xs: f64 = st.x.iter().zip(&st.s).map(|(x, s)| x.dot(s)).sum();
        let mu = xs / self.ntot;
        let denom = 1.0 + pobj.abs() + dobj.abs();
        let rel_gap = (pobj - dobj).abs().max(xs.abs()) / denom;
        let rs_norm: f64 = rs.iter().map(|r| r.norm_squared()).sum::<f64>();
        let pinf = (rp.norm_squared() + rs_norm).sqrt() / (1.0 + self.b.norm());
        let dinf = rd.norm() / (1.0 + self.c.norm());
        Residuals {
            rp,
            rd,
            rs,
            pobj,
            dobj,
            mu,
            rel_gap,
            pinf,
            dinf,
        }
    }

    fn scaled_columns(&self, nt: &[NtScaling]) -> DMatrix<f64> {
        let rows: usize = self.blocks.iter().map(|b| b.dim * (b.dim + 1) / 2).sum();
        let mut bmat = DMatrix::zeros(rows, self.m());
        let mut r0 = 0;
        for (b, n) in self.blocks.iter().zip(nt) {
            b.scaled_columns(&n.g, &mut bmat, r0);
            r0 += b.dim * (b.dim + 1) / 2;
        }
        bmat
    }

    fn schur(&self, x: &[DMatrix<f64>], g: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.m(), self.m());
        for ((b, xj), gj) in self.blocks.iter().zip(x).zip(g) {
            b.add_schur(xj, gj, &mut m);
        }
        m
    }
}

/// Cholesky factor in which pivots that are tiny relative to the original
/// diagonal are replaced by a huge value, so the matching components of the
/// solution are pinned near zero instead of polluting the rest.
struct SkipCholesky {
    l: DMatrix<f64>,
    skipped: usize,
}

impl SkipCholesky {
    const HUGE: f64 = 1e64;

    fn new(mut a: DMatrix<f64>) -> Self {
        let n = a.nrows();
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].abs()).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let mut skipped = 0;
        for j in 0..n {
            let d = a[(j, j)];
            if !(d > 1e-14 * diag[j].max(1e-30 * dmax)) {
                skipped += 1;
                a[(j, j)] = Self::HUGE.sqrt();
                for i in j + 1..n {
                    a[(i, j)] = 0.0;
                }
                continue;
            }
            let r = d.sqrt();
            a[(j, j)] = r;
            for i in j + 1..n {
                a[(i, j)] /= r;
            }
            let col: Vec<f64> = (j + 1..n).map(|i| a[(i, j)]).collect();
            let data = a.as_mut_slice();
            for (kk, k) in (j + 1..n).enumerate() {
                let lk = col[kk];
                if lk == 0.0 {
                    continue;
                }
                // column-major: column k occupies data[k*n .. (k+1)*n]
                let colk = &mut data[k * n + k..(k + 1) * n];
                for (v, c) in colk.iter_mut().zip(&col[kk..]) {
                    *v -= c * lk;
                }
            }
        }
        SkipCholesky { l: a, skipped }
    }

    /// Wraps a lower-triangular factor `L` of `M = L L^T`, skipping pivots
    /// that are tiny relative to `scale[j]`.
    fn from_factor(mut l: DMatrix<f64>, scale: &[f64]) -> Self {
        let n = l.nrows();
        let smax = scale.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let mut skipped = 0;
        for j in 0..n {
            if !(l[(j, j)].abs() > 1e-14 * scale[j].max(1e-30 * smax)) {
                skipped += 1;
                l[(j, j)] = Self::HUGE.sqrt();
                for i in j + 1..n {
                    l[(i, j)] = 0.0;
                }
            }
        }
        SkipCholesky { l, skipped }
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut x = b.clone();
        for j in 0..n {
            x[j] /= self.l[(j, j)];
            let xj = x[j];
            if xj != 0.0 {
                for i in j + 1..n {
                    x[i] -= self.l[(i, j)] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            let mut acc = x[j];
            for i in j + 1..n {
                acc -= self.l[(i, j)] * x[i];
            }
            x[j] = acc / self.l[(j, j)];
        }
        x
    }

    fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            out.set_column(c, &self.solve(&b.column(c).into_owned()));
        }
        out
    }
}

/// Factored Newton system `[M, -A^T; A, 0]`.
struct NewtonSystem {
    m: DMatrix<f64>,
    chol_m: SkipCholesky,
    /// `M^{-1} A^T`.
    minv_at: DMatrix<f64>,
    chol_s: Option<SkipCholesky>,
    /// Full-pivot LU of the augmented matrix, used when `M` lost pivots.
    kkt: Option<nalgebra::linalg::FullPivLU<f64, Dyn, Dyn>>,
}

impl NewtonSystem {
    /// Factors `M = B^T B` through a QR decomposition of `B`, which avoids
    /// squaring the condition number when forming `M`.
    fn factor_qr(bmat: DMatrix<f64>, a: &DMatrix<f64>) -> Option<Self> {
        let m = bmat.ncols();
        if bmat.nrows() < m {
            let mm = bmat.transpose() * &bmat;
            return Self::factor(mm, a);
        }
        let scale: Vec<f64> = (0..m).map(|j| bmat.column(j).norm()).collect();
        let mm = bmat.tr_mul(&bmat);
        let r = bmat.qr().r();
        let chol_m = SkipCholesky::from_factor(r.transpose(), &scale);
        Self::finish(mm, chol_m, a)
    }

    fn factor(m: DMatrix<f64>, a: &DMatrix<f64>) -> Option<Self> {
        let chol_m = SkipCholesky::new(m.clone());
        Self::finish(m, chol_m, a)
    }

    fn finish(m: DMatrix<f64>, chol_m: SkipCholesky, a: &DMatrix<f64>) -> Option<Self> {
        if chol_m.skipped == m.nrows() {
            return None;
        }
        let n = m.nrows();
        let kkt = if chol_m.skipped > 0 {
            let p = a.nrows();
            let mut k = DMatrix::zeros(n + p, n + p);
            k.view_mut((0, 0), (n, n)).copy_from(&m);
            k.view_mut((0, n), (n, p)).copy_from(&(-a.transpose()));
            k.view_mut((n, 0), (p, n)).copy_from(a);
            Some(k.full_piv_lu())
        } else {
            None
        };
        if a.nrows() == 0 {
            return Some(NewtonSystem {
                m,
                chol_m,
                minv_at: DMatrix::zeros(n, 0),
                chol_s: None,
                kkt,
            });
        }
        let minv_at = chol_m.solve_mat(&a.transpose());
        let s = a * &minv_at;
        let s = (&s + s.transpose()) * 0.5;
        let chol_s = SkipCholesky::new(s);
        Some(NewtonSystem {
            m,
            chol_m,
            minv_at,
            chol_s: Some(chol_s),
            kkt,
        })
    }

    /// Solve `M dy - A^T dw = h`, `A dy = rp` with two rounds of iterative
    /// refinement against the unregularized `M`.
    fn solve(&self, h: &DVector<f64>, rp: &DVector<f64>, a: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut dy, mut dw) = self.solve_once(h, rp, a);
        for _ in 0..2 {
            let mut r1 = h - &self.m * &dy;
            let mut r2 = rp.clone();
            if a.nrows() > 0 {
                r1 += a.transpose() * &dw;
                r2 -= a * &dy;
            }
            let (ey, ew) = self.solve_once(&r1, &r2, a);
            dy += ey;
            if a.nrows() > 0 {
                dw += ew;
            }
        }
        (dy, dw)
    }

    fn solve_once(&self, h: &DVector<f64>, rp: &DVector<f64>, a: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
        if let Some(lu) = &self.kkt {
            let n = h.len();
            let p = rp.len();
            let mut rhs = DVector::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(h);
            rhs.rows_mut(n, p).copy_from(rp);
            if let Some(sol) = lu.solve(&rhs) {
                if sol.iter().all(|v| v.is_finite()) {
                    return (sol.rows(0, n).into_owned(), sol.rows(n, p).into_owned());
                }
            }
        }
        let minv_h = self.chol_m.solve(h);
        match &self.chol_s {
            None => (minv_h, DVector::zeros(0)),
            Some(cs) => {
                let rhs = rp - a * &minv_h;
                let dw = cs.solve(&rhs);
                let dy = minv_h + &self.minv_at * &dw;
                (dy, dw)
            }
        }
    }
}

/// Iterations without a 10% merit improvement before giving up.
const STAGNATION_ITERS: usize = 25;

/// Search direction family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Helmberg-Kojima-Monteiro, Schur complement `tr(F_i X F_k S^{-1})`.
    Hkm,
    /// Nesterov-Todd, Schur complement `tr(F_i W F_k W)` with `W S W = X`.
    Nt,
}

enum Scaling {
    Hkm(Vec<DMatrix<f64>>),
    Nt(Vec<NtScaling>),
}

fn invert_spd(s: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let c = Cholesky::new(s.clone())?;
    Some(sym(&c.inverse()))
}

/// Nesterov-Todd scaling of one block: `W = G G^T` with `W S W = X` and
/// `G^T S G = G^{-1} X G^{-T} = diag(lam)`.
struct NtScaling {
    g: DMatrix<f64>,
    ginv: DMatrix<f64>,
    lam: DVector<f64>,
    w: DMatrix<f64>,
}

impl NtScaling {
    fn new(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Self> {
        let lx = Cholesky::new(x.clone())?.l();
        let ls = Cholesky::new(s.clone())?.l();
        let svd = (lx.transpose() * &ls).svd(true, true);
        let u = svd.u?;
        let vt = svd.v_t?;
        let lam = svd.singular_values;
        if lam.iter().any(|&l| !(l > 0.0)) {
            return None;
        }
        let isq = lam.map(|l| 1.0 / l.sqrt());
        let g = lx * u * DMatrix::from_diagonal(&isq);
        let ginv = DMatrix::from_diagonal(&isq) * vt * ls.transpose();
        let w = sym(&(&g * g.transpose()));
        Some(NtScaling { g, ginv, lam, w })
    }

    /// Solves `lam o Z = R` for the Jordan product `(lam Z + Z lam) / 2`.
    fn jordan_solve(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let n = r.nrows();
        DMatrix::from_fn(n, n, |i, j| 2.0 * (r[(i, j)] + r[(j, i)]) * 0.5 / (self.lam[i] + self.lam[j]))
    }

    fn lift(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        sym(&(&self.g * z * self.g.transpose()))
    }

    fn unlift_x(&self, dx: &DMatrix<f64>) -> DMatrix<f64> {
        &self.ginv * dx * self.ginv.transpose()
    }

    fn unlift_s(&self, ds: &DMatrix<f64>) -> DMatrix<f64> {
        self.g.transpose() * ds * &self.g
    }
}

/// Solve one SDP instance.
pub fn solve(inst: &SdpInstance, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
    solve_from(inst, opts, None)
}

/// Appends a variable `t = 1` and the 1x1 block `t - sum_j tr F_j(y) / R`.
fn embed(inst: &SdpInstance, radius: f64) -> SdpInstance {
    let m = inst.dim;
    let p = inst.eq_rhs.len();
    let mut trace = std::collections::BTreeMap::<usize, f64>::new();
    for pen in &inst.pencils {
        for e in pen.entries() {
            if e.row == e.col {
                *trace.entry(e.var).or_default() += e.coef;
            }
        }
    }
    let mut bound = SymPencil::new(1);
    bound.push(m, 0, 0, 1.0);
    for (var, c) in trace {
        if c != 0.0 {
            bound.push(var, 0, 0, -c / radius);
        }
    }
    let mut eq_matrix = DMatrix::zeros(p + 1, m + 1);
    eq_matrix.view_mut((0, 0), (p, m)).copy_from(&inst.eq_matrix);
    eq_matrix[(p, m)] = 1.0;
    let mut eq_rhs = inst.eq_rhs.clone();
    eq_rhs.push(1.0);
    let mut objective = inst.objective.clone();
    objective.push(0.0);
    let mut pencils = inst.pencils.clone();
    pencils.push(bound);
    SdpInstance {
        dim: m + 1,
        objective,
        eq_matrix,
        eq_rhs,
        pencils,
    }
}

fn solve_from(
    inst: &SdpInstance,
    opts: &SdpOptions,
    jitter: Option<&[f64]>,
) -> Result<SdpSolution, SdpError> {
    let radius = match opts.big_m {
        None => return solve_core(inst, opts, jitter),
        Some(r) => r,
    };
    inst.validate()?;
    inst.check_rank()?;
    let ext = embed(inst, radius);
    let jit: Option<Vec<f64>> = jitter.map(|j| {
        let mut j = j.to_vec();
        j.push(1.0);
        j
    });
    let mut sol = solve_core(&ext, opts, jit.as_deref())?;
    let m = inst.dim;
    let slack = sol.pencil_values.pop().map_or(1.0, |v| v[(0, 0)]);
    sol.dual_blocks.pop();
    sol.y.truncate(m);
    sol.eq_multipliers.truncate(inst.eq_rhs.len());
    if let Some(w) = sol.witness.as_mut() {
        if sol.status == SdpStatus::DualInfeasible {
            w.truncate(m);
        } else {
            w.truncate(inst.eq_rhs.len());
        }
    }
    if matches!(sol.status, SdpStatus::Optimal | SdpStatus::NumericalTrouble | SdpStatus::IterLimit)
        && slack <= 1e-3
    {
        sol.bound_active = true;
        // a decreasing ray means the original instance is unbounded
        let norm = sol.y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c_norm = inst.objective.iter().map(|v| v * v).sum::<f64>().sqrt();
        let slope = if norm > 0.0 { sol.primal_obj / norm } else { 0.0 };
        if slope < -1e-6 * (1.0 + c_norm) {
            sol.status = SdpStatus::DualInfeasible;
            sol.witness = Some(sol.y.iter().map(|v| v / norm).collect());
        } else {
            sol.status = SdpStatus::NumericalTrouble;
        }
    }
    Ok(sol)
}

fn solve_core(
    inst: &SdpInstance,
    opts: &SdpOptions,
    jitter: Option<&[f64]>,
) -> Result<SdpSolution, SdpError> {
    inst.validate()?;
    inst.check_rank()?;
    let eng = Engine::new(inst);
    let m = eng.m();
    let p = eng.p();

    // identity-scaled starting point
    let cnorm = eng.c.amax();
    let start = 1.0_f64.max(cnorm.sqrt()) * opts.initial_scale;
    let mut st = State {
        y: DVector::zeros(m),
        w: DVector::zeros(p),
        s: eng
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| DMatrix::identity(b.dim, b.dim) * (start * jitter.map_or(1.0, |js| js[j])))
            .collect(),
        x: eng
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| DMatrix::identity(b.dim, b.dim) * (start / jitter.map_or(1.0, |js| js[j])))
            .collect(),
    };

    let frac = opts.step_fraction;
    let trace = std::env::var_os("HOMPOP_SDP_TRACE").is_some();
    let mut status = SdpStatus::IterLimit;
    let mut iterations = 0;
    let mut witness = None;
    let mut stall = 0usize;
    let mut res = eng.residuals(&st);
    let mut best: Option<(f64, State)> = None;
    let mut last_gain = 0usize;

    for it in 0..opts.max_iter {
        iterations = it;
        if res.rel_gap < opts.gap_tol && res.pinf < opts.feas_tol && res.dinf < opts.feas_tol {
            status = SdpStatus::Optimal;
            break;
        }
        // infeasibility and divergence checks
        let ynorm = st.y.amax();
        let xnorm = st.x.iter().map(|x| x.amax()).fold(st.w.amax(), f64::max);
        if xnorm > opts.divergence_limit && res.dobj > opts.divergence_limit.sqrt() {
            // (w, X) / b^T w must be a Farkas ray: A^T w + F^*(X) ~ 0
            let ray_res = (&eng.c - &res.rd).norm() / res.dobj;
            if ray_res < 1e-6 * (1.0 + eng.c.norm()) {
                let scale = res.dobj;
                status = SdpStatus::PrimalInfeasible;
                witness = Some(st.w.iter().map(|v| v / scale).collect());
            } else {
                status = SdpStatus::NumericalTrouble;
            }
            break;
        }
        if ynorm > opts.divergence_limit {
            if res.pobj < -opts.divergence_limit.sqrt() {
                status = SdpStatus::DualInfeasible;
                let scale = ynorm;
                witness = Some(st.y.iter().map(|v| v / scale).collect());
            } else {
                status = SdpStatus::NumericalTrouble;
            }
            break;
        }

        // keep the most feasible-and-accurate iterate seen so far
        let merit = res.pinf.max(res.dinf).max(res.rel_gap);
        if best.as_ref().is_none_or(|(bm, _)| merit < 0.9 * *bm) {
            last_gain = it;
        }
        if it >= last_gain + STAGNATION_ITERS {
            status = SdpStatus::NumericalTrouble;
            break;
        }
        if best.as_ref().is_none_or(|(bm, _)| merit < *bm) {
            best = Some((
                merit,
                State {
                    y: st.y.clone(),
                    w: st.w.clone(),
                    s: st.s.clone(),
                    x: st.x.clone(),
                },
            ));
        }

        let nb = eng.blocks.len();
        let scaling = match opts.direction {
            Direction::Hkm => st.s.iter().map(invert_spd).collect::<Option<Vec<_>>>().map(Scaling::Hkm),
            Direction::Nt => st
                .x
                .iter()
                .zip(&st.s)
                .map(|(x, s)| NtScaling::new(x, s))
                .collect::<Option<Vec<_>>>()
                .map(Scaling::Nt),
        };
        let scaling = match scaling {
            Some(sc) => sc,
            None => {
                status = SdpStatus::NumericalTrouble;
                break;
            }
        };
        let sys = match &scaling {
            Scaling::Hkm(g) => NewtonSystem::factor(eng.schur(&st.x, g), eng.a),
            Scaling::Nt(nt) => NewtonSystem::factor_qr(eng.scaled_columns(nt), eng.a),
        };
        let sys = match sys {
            Some(s) => s,
            None => {
                status = SdpStatus::NumericalTrouble;
                break;
            }
        };

        // part of the right-hand side coming from the pencil residual
        let rterm: Vec<DMatrix<f64>> = (0..nb)
            .map(|j| match &scaling {
                Scaling::Hkm(g) => sym(&(&st.x[j] * &res.rs[j] * &g[j])),
                Scaling::Nt(nt) => sym(&(&nt[j].w * &res.rs[j] * &nt[j].w)),
            })
            .collect();

        // `pred` carries the affine direction `(dx, ds)` for the corrector
        let direction = |sigma_mu: f64, pred: Option<(&[DMatrix<f64>], &[DMatrix<f64>])>| {
            // `base_j` is the part of `dx_j` that does not depend on `ds_j`
            let base: Vec<DMatrix<f64>> = (0..nb)
                .map(|j| match &scaling {
                    Scaling::Hkm(g) => {
                        let mut u = &g[j] * sigma_mu - &st.x[j];
                        if let Some((dxa, dsa)) = pred {
                            u -= sym(&(&dxa[j] * &dsa[j] * &g[j]));
                        }
                        u
                    }
                    Scaling::Nt(nt) => {
                        let n = &nt[j];
                        let mut rc = -DMatrix::from_diagonal(&n.lam.map(|l| l * l));
                        for i in 0..rc.nrows() {
                            rc[(i, i)] += sigma_mu;
                        }
                        if let Some((dxa, dsa)) = pred {
                            rc -= sym(&(n.unlift_x(&dxa[j]) * n.unlift_s(&dsa[j])));
                        }
                        n.lift(&n.jordan_solve(&rc))
                    }
                })
                .collect();
            let u: Vec<DMatrix<f64>> = base.iter().zip(&rterm).map(|(a, b)| a - b).collect();
            let h = eng.adjoint(&u) - &res.rd;
            let (dy, dw) = sys.solve(&h, &res.rp, eng.a);
            let fdy = eng.eval_pencils(&dy);
            let ds: Vec<DMatrix<f64>> = fdy.iter().zip(&res.rs).map(|(f, r)| f + r).collect();
            let dx: Vec<DMatrix<f64>> = (0..nb)
                .map(|j| match &scaling {
                    Scaling::Hkm(g) => &base[j] - sym(&(&st.x[j] * &ds[j] * &g[j])),
                    Scaling::Nt(nt) => sym(&(&base[j] - &nt[j].w * &ds[j] * &nt[j].w)),
                })
                .collect();
            (dy, dw, ds, dx)
        };

        let steps = |ds: &[DMatrix<f64>], dx: &[DMatrix<f64>], f: f64| {
            let ap = st
                .s
                .iter()
                .zip(ds)
                .map(|(s, d)| step_length(s, d, f))
                .fold(1.0, f64::min);
            let ad = st
                .x
                .iter()
                .zip(dx)
                .map(|(x, d)| step_length(x, d, f))
                .fold(1.0, f64::min);
            (ap, ad)
        };

        // predictor
        let (_, _, ds_a, dx_a) = direction(0.0, None);
        let (ap_a, ad_a) = steps(&ds_a, &dx_a, 1.0);
        let mut xs_aff = 0.0;
        for j in 0..nb {
            let xn = &st.x[j] + &dx_a[j] * ad_a;
            let sn = &st.s[j] + &ds_a[j] * ap_a;
            xs_aff += xn.dot(&sn);
        }
        let mu_aff = xs_aff / eng.ntot;
        let ratio = if res.mu > 0.0 { (mu_aff / res.mu).max(0.0) } else { 0.0 };
        let mut sigma = ratio.powi(3).min(1.0);
        // keep some centering while the iterate is still far from feasible
        let infeas = res.pinf.max(res.dinf);
        if infeas > 1e-2 {
            sigma = sigma.max(0.1);
        }

        // corrector
        let (dy, dw, ds, dx) = direction(sigma * res.mu, Some((&dx_a, &ds_a)));
        let (ap, ad) = steps(&ds, &dx, frac);

        if trace {
            eprintln!(
                "it {:3} pobj {:+.10e} dobj {:+.10e} gap {:.2e} pinf {:.2e} dinf {:.2e} mu {:.2e} sigma {:.2e} ap {:.3} ad {:.3}",
                it, res.pobj, res.dobj, res.rel_gap, res.pinf, res.dinf, res.mu, sigma, ap, ad
            );
        }
        if ap < 1e-10 && ad < 1e-10 {
            stall += 1;
            if stall >= 3 {
                status = SdpStatus::NumericalTrouble;
                break;
            }
        } else {
            stall = 0;
        }

        st.y += &dy * ap;
        for j in 0..eng.blocks.len() {
            st.s[j] += &ds[j] * ap;
            st.s[j] = sym(&st.s[j]);
            st.x[j] += &dx[j] * ad;
            st.x[j] = sym(&st.x[j]);
        }
        st.w += &dw * ad;
        res = eng.residuals(&st);
        iterations = it + 1;
    }
    if status == SdpStatus::IterLimit
        && res.rel_gap < opts.gap_tol
        && res.pinf < opts.feas_tol
        && res.dinf < opts.feas_tol
    {
        status = SdpStatus::Optimal;
    }

    // on failure report the best iterate rather than the last one
    if !matches!(
        status,
        SdpStatus::Optimal | SdpStatus::PrimalInfeasible | SdpStatus::DualInfeasible
    ) {
        if let Some((bm, bst)) = best {
            let cur = res.pinf.max(res.dinf).max(res.rel_gap);
            if bm < cur {
                st = bst;
                res = eng.residuals(&st);
            }
        }
    }

    let pencil_values = eng.eval_pencils(&st.y);
    Ok(SdpSolution {
        y: st.y.iter().copied().collect(),
        pencil_values,
        eq_multipliers: st.w.iter().copied().collect(),
        dual_blocks: st.x,
        primal_obj: res.pobj,
        dual_obj: res.dobj,
        status,
        iterations,
        attempts: 1,
        rel_gap: res.rel_gap,
        primal_infeas: res.pinf,
        dual_infeas: res.dinf,
        witness,
        bound_active: false,
    })
}

/// Retry on `NumericalTrouble` with a jittered start and a shorter step
/// fraction, at most `opts.max_attempts` runs. Deterministic for a fixed seed.
pub fn solve_with_restarts(inst: &SdpInstance, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
    let merit = |s: &SdpSolution| s.primal_infeas.max(s.dual_infeas).max(s.rel_gap);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut sol = solve(inst, opts)?;
    let mut attempt = 1;
    while matches!(sol.status, SdpStatus::NumericalTrouble | SdpStatus::IterLimit)
        && !sol.bound_active
        && attempt < opts.max_attempts.max(1)
    {
        attempt += 1;
        let jitter: Vec<f64> = inst
            .pencils
            .iter()
            .map(|_| 1.0 + 0.5 * (rng.gen::<f64>() - 0.5))
            .collect();
        let mut o = opts.clone();
        o.step_fraction = (opts.step_fraction - 0.05 * (attempt - 1) as f64).max(0.5);
        o.initial_scale = opts.initial_scale * 10f64.powi(attempt as i32 - 1);
        let next = solve_from(inst, &o, Some(&jitter))?;
        if next.status != SdpStatus::NumericalTrouble && next.status != SdpStatus::IterLimit
            || merit(&next) < merit(&sol)
        {
            sol = next;
        }
    }
    sol.attempts = attempt;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// minimize y2 s.t. [[y0, y1], [y1, y2]] PSD, y0 = 1.
    fn min_x_squared() -> SdpInstance {
        let mut p = SymPencil::new(2);
        p.push(0, 0, 0, 1.0);
        p.push(1, 0, 1, 1.0);
        p.push(2, 1, 1, 1.0);
        SdpInstance {
            dim: 3,
            objective: vec![0.0, 0.0, 1.0],
            eq_matrix: DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            eq_rhs: vec![1.0],
            pencils: vec![p],
        }
    }

    #[test]
    fn moment_relaxation_of_x_squared() {
        let sol = solve(&min_x_squared(), &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.primal_obj.abs() < 1e-7, "{}", sol.primal_obj);
        assert!(sol.dual_obj.abs() < 1e-7);
    }

    #[test]
    fn two_by_two_eigenvalue_condition() {
        // min y s.t. [[y, 1], [1, y]] PSD. Constant term carried by y1 = 1.
        let mut p = SymPencil::new(2);
        p.push(0, 0, 0, 1.0);
        p.push(0, 1, 1, 1.0);
        p.push(1, 0, 1, 1.0);
        let inst = SdpInstance {
            dim: 2,
            objective: vec![1.0, 0.0],
            eq_matrix: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            eq_rhs: vec![1.0],
            pencils: vec![p],
        };
        let sol = solve(&inst, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.y[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rank_deficient_equalities_are_rejected() {
        let mut inst = min_x_squared();
        inst.eq_matrix = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        inst.eq_rhs = vec![1.0, 2.0];
        assert!(matches!(
            solve_with_restarts(&inst, &SdpOptions::default()),
            Err(SdpError::RankDeficient { rank: 1, rows: 2 })
        ));
    }

    #[test]
    fn dimension_errors() {
        let mut inst = min_x_squared();
        inst.objective.pop();
        assert!(matches!(solve(&inst, &SdpOptions::default()), Err(SdpError::Dimension(_))));
    }

    #[test]
    fn non_symmetric_dense_pencil_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            SymPencil::from_dense(2, &[(0, m)]),
            Err(SdpError::NonSymmetric { .. })
        ));
    }

    #[test]
    fn well_conditioned_instance_needs_one_attempt() {
        let inst = min_x_squared();
        let a = solve(&inst, &SdpOptions::default()).unwrap();
        let b = solve_with_restarts(&inst, &SdpOptions::default()).unwrap();
        assert_eq!(b.attempts, 1);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn infeasible_instance_detected() {
        // y0 = 1 and [[-y0]] PSD cannot both hold
        let mut p = SymPencil::new(1);
        p.push(0, 0, 0, -1.0);
        let inst = SdpInstance {
            dim: 1,
            objective: vec![0.0],
            eq_matrix: DMatrix::from_row_slice(1, 1, &[1.0]),
            eq_rhs: vec![1.0],
            pencils: vec![p],
        };
        let sol = solve(&inst, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::PrimalInfeasible);
        assert!(sol.witness.is_some());
    }

    #[test]
    fn unbounded_instance_detected() {
        // min y1 s.t. [[y0, 0],[0, y0]] PSD with y0 = 1: y1 is free
        let mut p = SymPencil::new(2);
        p.push(0, 0, 0, 1.0);
        p.push(0, 1, 1, 1.0);
        let mut q = SymPencil::new(1);
        q.push(1, 0, 0, 0.0);
        let inst = SdpInstance {
            dim: 2,
            objective: vec![0.0, 1.0],
            eq_matrix: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            eq_rhs: vec![1.0],
            pencils: vec![p, q],
        };
        let sol = solve(&inst, &SdpOptions::default()).unwrap();
        assert_ne!(sol.status, SdpStatus::Optimal);
    }

    #[test]
    fn sdpa_dump_has_expected_header() {
        let inst = min_x_squared();
        let mut buf = Vec::new();
        inst.write_sdpa(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "3");
        assert_eq!(lines[2], "2");
        assert_eq!(lines[3], "2 -2");
        assert!(lines.contains(&"3 1 2 2 1e0"));
        assert!(lines.iter().any(|l| *l == "0 2 1 1 1e0"));
    }

    #[test]
    fn nt_direction_agrees_with_hkm() {
        let inst = min_x_squared();
        let nt = SdpOptions {
            direction: Direction::Nt,
            ..SdpOptions::default()
        };
        let a = solve(&inst, &SdpOptions::default()).unwrap();
        let b = solve(&inst, &nt).unwrap();
        assert_eq!(b.status, SdpStatus::Optimal);
        assert!((a.primal_obj - b.primal_obj).abs() < 1e-7);
        assert!((a.y[1] - b.y[1]).abs() < 1e-5);
    }

    #[test]
    fn bounded_instance_without_trace_ball() {
        let opts = SdpOptions {
            big_m: None,
            ..SdpOptions::default()
        };
        let sol = solve(&min_x_squared(), &opts).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(!sol.bound_active);
        assert_eq!(sol.y.len(), 3);
        assert_eq!(sol.dual_blocks.len(), 1);
    }

    #[test]
    fn unbounded_ray_hits_the_trace_ball() {
        // min y1 s.t. [[y0, y1], [y1, y2]] PSD, y0 = 1: y1 -> -inf along y2 = y1^2
        let mut p = SymPencil::new(2);
        p.push(0, 0, 0, 1.0);
        p.push(1, 0, 1, 1.0);
        p.push(2, 1, 1, 1.0);
        let inst = SdpInstance {
            dim: 3,
            objective: vec![0.0, 1.0, 0.0],
            eq_matrix: DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            eq_rhs: vec![1.0],
            pencils: vec![p],
        };
        let sol = solve(&inst, &SdpOptions::default()).unwrap();
        assert!(sol.bound_active);
        assert_ne!(sol.status, SdpStatus::Optimal);
        // the ball caps y0 + y2 at 1e6, so y1 >= -sqrt(1e6)
        assert!(sol.primal_obj < -100.0 && sol.primal_obj > -1001.0, "{}", sol.primal_obj);
    }
}
