//! Sparse multivariate polynomials over `f64`.
//!
//! Terms are kept in a [`BTreeMap`] keyed by [`ExponentVector`], whose
//! ordering is the graded alphabetical order used everywhere else in the
//! crate: lower total degree first, and within one degree the monomial with
//! the larger power of the earliest variable first
//! (`1, x1, x2, x1^2, x1*x2, x2^2, ...`).

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Coefficients with absolute value at or below this are dropped.
pub const DEFAULT_DROP_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected} variables, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("graded part index must be at least 1")]
    ZeroGradedIndex,
    #[error("cannot dehomogenize a polynomial in zero variables")]
    NoVariables,
}

/// Exponent vector `alpha` of the monomial `x^alpha`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ExponentVector(Box<[u32]>);

impl ExponentVector {
    pub fn new(exponents: Vec<u32>) -> Self {
        ExponentVector(exponents.into_boxed_slice())
    }

    pub fn zero(nvars: usize) -> Self {
        ExponentVector(vec![0; nvars].into_boxed_slice())
    }

    /// The monomial `x_i`.
    pub fn unit(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        ExponentVector::new(e)
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn add(&self, other: &ExponentVector) -> ExponentVector {
        debug_assert_eq!(self.nvars(), other.nvars());
        ExponentVector(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    /// Evaluate `x^alpha`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .filter(|(e, _)| **e > 0)
            .map(|(e, xi)| xi.powi(*e as i32))
            .product()
    }

    /// Exponent vector with `x0` prepended at power `p`.
    /// Every exponent multiplied by `s`.
    pub fn scaled(&self, s: u32) -> ExponentVector {
        ExponentVector(self.0.iter().map(|e| e * s).collect())
    }

    pub fn prepend(&self, p: u32) -> ExponentVector {
        let mut e = Vec::with_capacity(self.nvars() + 1);
        e.push(p);
        e.extend_from_slice(&self.0);
        ExponentVector::new(e)
    }
}

impl Ord for ExponentVector {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for ExponentVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for ExponentVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// All exponent vectors in `nvars` variables of total degree at most `d`,
/// in graded alphabetical order. Length is `C(nvars + d, d)`.
pub fn monomial_basis(nvars: usize, d: u32) -> Vec<ExponentVector> {
    let mut out = Vec::new();
    for deg in 0..=d {
        let mut cur = vec![0u32; nvars];
        push_compositions(&mut out, &mut cur, 0, deg);
    }
    out
}

fn push_compositions(out: &mut Vec<ExponentVector>, cur: &mut [u32], pos: usize, left: u32) {
    if cur.is_empty() {
        if left == 0 {
            out.push(ExponentVector::new(Vec::new()));
        }
        return;
    }
    if pos == cur.len() - 1 {
        cur[pos] = left;
        out.push(ExponentVector::new(cur.to_vec()));
        cur[pos] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        push_compositions(out, cur, pos + 1, left - e);
    }
    cur[pos] = 0;
}

/// Binomial coefficient `C(n, k)` as `usize`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: usize = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Position lookup for a graded monomial basis.
#[derive(Debug, Clone)]
pub struct MonomialIndex {
    nvars: usize,
    max_degree: u32,
    basis: Vec<ExponentVector>,
    positions: HashMap<ExponentVector, usize>,
}

impl MonomialIndex {
    pub fn new(nvars: usize, max_degree: u32) -> Self {
        let basis = monomial_basis(nvars, max_degree);
        let positions = basis.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
        MonomialIndex {
            nvars,
            max_degree,
            basis,
            positions,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn index_of(&self, e: &ExponentVector) -> Option<usize> {
        self.positions.get(e).copied()
    }

    pub fn monomial(&self, i: usize) -> &ExponentVector {
        &self.basis[i]
    }

    pub fn basis(&self) -> &[ExponentVector] {
        &self.basis
    }

    /// Number of basis elements of degree at most `d`.
    pub fn count_up_to(&self, d: u32) -> usize {
        binomial(self.nvars + d as usize, d as usize)
    }
}

/// A sparse polynomial with `f64` coefficients.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<ExponentVector, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.add_term(ExponentVector::zero(nvars), c);
        p
    }

    /// The coordinate polynomial `x_i` (0-based).
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.add_term(ExponentVector::unit(nvars, i), 1.0);
        p
    }

    pub fn monomial(e: ExponentVector, c: f64) -> Self {
        let mut p = Polynomial::zero(e.nvars());
        p.add_term(e, c);
        p
    }

    /// Build from `(exponents, coefficient)` pairs; duplicate keys are summed.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Polynomial::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent length must equal nvars");
            p.add_term(ExponentVector::new(e), c);
        }
        p
    }

    /// `sum_i x_i^2` in `nvars` variables.
    pub fn squared_norm(nvars: usize) -> Self {
        let mut p = Polynomial::zero(nvars);
        for i in 0..nvars {
            let mut e = vec![0; nvars];
            e[i] = 2;
            p.add_term(ExponentVector::new(e), 1.0);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ExponentVector, f64)> + '_ {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, e: &ExponentVector) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds `c * x^e`, dropping the term if the result is numerically zero.
    pub fn add_term(&mut self, e: ExponentVector, c: f64) {
        assert_eq!(e.nvars(), self.nvars, "exponent length must equal nvars");
        let v = self.terms.entry(e.clone()).or_insert(0.0);
        *v += c;
        if v.abs() <= DEFAULT_DROP_TOL {
            self.terms.remove(&e);
        }
    }

    /// Remove terms with `|coeff| <= tol`.
    pub fn pruned(mut self, tol: f64) -> Self {
        self.terms.retain(|_, c| c.abs() > tol);
        self
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.degree()).max().unwrap_or(0)
    }

    pub fn is_homogeneous(&self) -> bool {
        let d = self.degree();
        self.terms.keys().all(|e| e.degree() == d)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = Polynomial::zero(self.nvars);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), c * s);
        }
        p
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Polynomial::constant(self.nvars, 1.0);
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    /// Largest absolute coefficient.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn check_dim(&self, len: usize) -> Result<(), PolyError> {
        if len != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                got: len,
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        self.check_dim(x.len())?;
        Ok(self.terms.iter().map(|(e, c)| c * e.eval(x)).sum())
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> Polynomial {
        let mut p = Polynomial::zero(self.nvars);
        for (e, c) in &self.terms {
            let k = e.exponents()[i];
            if k == 0 {
                continue;
            }
            let mut ex = e.exponents().to_vec();
            ex[i] -= 1;
            p.add_term(ExponentVector::new(ex), c * k as f64);
        }
        p
    }

    pub fn gradient(&self, x: &[f64]) -> Result<DVector<f64>, PolyError> {
        self.check_dim(x.len())?;
        let mut g = DVector::zeros(self.nvars);
        for i in 0..self.nvars {
            g[i] = self.derivative(i).eval(x)?;
        }
        Ok(g)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>, PolyError> {
        self.check_dim(x.len())?;
        let n = self.nvars;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            let di = self.derivative(i);
            for j in i..n {
                let v = di.derivative(j).eval(x)?;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }

    /// Homogenization `x0^deg(p) * p(x / x0)` with `x0` prepended as variable 0.
    pub fn homogenize(&self) -> Polynomial {
        self.homogenize_to(self.degree())
    }

    /// Homogenize to a prescribed degree `d >= deg(p)`.
    pub fn homogenize_to(&self, d: u32) -> Polynomial {
        assert!(d >= self.degree(), "target degree below polynomial degree");
        let mut p = Polynomial::zero(self.nvars + 1);
        for (e, c) in &self.terms {
            p.add_term(e.prepend(d - e.degree()), *c);
        }
        p
    }

    /// Substitute `x0 = 1` and drop variable 0.
    pub fn dehomogenize(&self) -> Result<Polynomial, PolyError> {
        if self.nvars == 0 {
            return Err(PolyError::NoVariables);
        }
        let mut p = Polynomial::zero(self.nvars - 1);
        for (e, c) in &self.terms {
            p.add_term(ExponentVector::new(e.exponents()[1..].to_vec()), *c);
        }
        Ok(p)
    }

    /// Homogeneous part of degree `deg(p) - (i - 1)`; `i = 1` is the leading form.
    pub fn graded_part(&self, i: u32) -> Result<Polynomial, PolyError> {
        if i == 0 {
            return Err(PolyError::ZeroGradedIndex);
        }
        let d = self.degree();
        let mut p = Polynomial::zero(self.nvars);
        if i - 1 > d {
            return Ok(p);
        }
        let target = d - (i - 1);
        for (e, c) in &self.terms {
            if e.degree() == target {
                p.add_term(e.clone(), *c);
            }
        }
        Ok(p)
    }

    /// Leading form (`graded_part(1)`).
    pub fn leading_form(&self) -> Polynomial {
        self.graded_part(1).expect("index 1 is valid")
    }

    /// Embed into a ring with `extra` more trailing variables.
    pub fn lift_vars(&self, nvars: usize) -> Polynomial {
        assert!(nvars >= self.nvars);
        let mut p = Polynomial::zero(nvars);
        for (e, c) in &self.terms {
            let mut ex = e.exponents().to_vec();
            ex.resize(nvars, 0);
            p.add_term(ExponentVector::new(ex), *c);
        }
        p
    }

    /// Largest coefficient difference against `other`.
    pub fn max_coeff_diff(&self, other: &Polynomial) -> f64 {
        let diff = self - other;
        diff.max_abs_coeff()
    }

    /// Render with the given variable names, e.g. `2*x1^2 - x2 + 1`.
    pub fn to_string_with(&self, names: &[String]) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        // highest degree first reads more naturally
        for (idx, (e, c)) in self.terms.iter().rev().enumerate() {
            let (sign, mag) = if *c < 0.0 { ("-", -c) } else { ("+", *c) };
            if idx == 0 {
                if sign == "-" {
                    s.push('-');
                }
            } else {
                s.push(' ');
                s.push_str(sign);
                s.push(' ');
            }
            let mut factors: Vec<String> = Vec::new();
            for (v, &k) in e.exponents().iter().enumerate() {
                match k {
                    0 => {}
                    1 => factors.push(names[v].clone()),
                    _ => factors.push(format!("{}^{}", names[v], k)),
                }
            }
            if factors.is_empty() {
                s.push_str(&format_coeff(mag));
            } else if mag == 1.0 {
                s.push_str(&factors.join("*"));
            } else {
                s.push_str(&format_coeff(mag));
                s.push('*');
                s.push_str(&factors.join("*"));
            }
        }
        s
    }
}

fn format_coeff(c: f64) -> String {
    // `{:?}` gives the shortest round-tripping representation.
    let s = format!("{:?}", c);
    if s.contains('e') {
        // the problem grammar has no exponent notation
        format!("{}", c)
    } else {
        s
    }
}

/// Default variable names `x1 .. xn`.
pub fn default_names(nvars: usize) -> Vec<String> {
    (1..=nvars).map(|i| format!("x{}", i)).collect()
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.nvars).map(|i| format!("x{}", i)).collect();
        write!(f, "Polynomial[{}]({})", self.nvars, self.to_string_with(&names))
    }
}

impl<'a> Add<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &'a Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut p = self.clone();
        for (e, c) in &rhs.terms {
            p.add_term(e.clone(), *c);
        }
        p
    }
}

impl<'a> Sub<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &'a Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut p = self.clone();
        for (e, c) in &rhs.terms {
            p.add_term(e.clone(), -*c);
        }
        p
    }
}

impl<'a> Mul<&'a Polynomial> for &'a Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &'a Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut p = Polynomial::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                p.add_term(ea.add(eb), ca * cb);
            }
        }
        p
    }
}

impl Add for Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: Polynomial) -> Polynomial {
        &self + &rhs
    }
}

impl Sub for Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: Polynomial) -> Polynomial {
        &self - &rhs
    }
}

impl Mul for Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: Polynomial) -> Polynomial {
        &self * &rhs
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// Polynomial optimization problem: minimize `objective` subject to
/// `equalities == 0` and `inequalities >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopProblem {
    pub nvars: usize,
    pub objective: Polynomial,
    pub equalities: Vec<Polynomial>,
    pub inequalities: Vec<Polynomial>,
}

impl PopProblem {
    pub fn new(
        objective: Polynomial,
        equalities: Vec<Polynomial>,
        inequalities: Vec<Polynomial>,
    ) -> Result<Self, PolyError> {
        let nvars = objective.nvars();
        for p in equalities.iter().chain(inequalities.iter()) {
            if p.nvars() != nvars {
                return Err(PolyError::DimensionMismatch {
                    expected: nvars,
                    got: p.nvars(),
                });
            }
        }
        Ok(PopProblem {
            nvars,
            objective,
            equalities,
            inequalities,
        })
    }

    pub fn unconstrained(objective: Polynomial) -> Self {
        PopProblem {
            nvars: objective.nvars(),
            objective,
            equalities: Vec::new(),
            inequalities: Vec::new(),
        }
    }

    /// `max(ceil(deg f / 2), ceil(deg c_i / 2))`.
    pub fn half_degree(&self) -> u32 {
        std::iter::once(&self.objective)
            .chain(&self.equalities)
            .chain(&self.inequalities)
            .map(|p| p.degree().div_ceil(2))
            .max()
            .unwrap_or(0)
    }

    /// Largest constraint violation at `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> Result<f64, PolyError> {
        let mut v: f64 = 0.0;
        for p in &self.equalities {
            v = v.max(p.eval(x)?.abs());
        }
        for p in &self.inequalities {
            v = v.max(-p.eval(x)?);
        }
        Ok(v)
    }
}
