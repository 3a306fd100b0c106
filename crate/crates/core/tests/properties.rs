//! Property tests for invariants that hold on arbitrary inputs.

use hompop::cli::parse::{parse_problem_file, ProblemFile};
use hompop::extract::{extract_atoms, flat_extension};
use hompop::poly::{default_names, monomial_basis, MonomialIndex, Polynomial, PopProblem};
use hompop::relax::{assemble, riesz, tms_from_atoms, HierarchyKind, RowOrigin};
use hompop::sdp::{solve_with_restarts, SdpInstance, SdpOptions, SdpStatus, SymPencil};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn poly_strategy(n: usize, max_deg: u32) -> impl Strategy<Value = Polynomial> {
    let basis = monomial_basis(n, max_deg);
    let len = basis.len();
    proptest::collection::vec(prop_oneof![Just(0.0), -3.0..3.0f64], len).prop_map(move |cs| {
        Polynomial::from_terms(
            n,
            basis
                .iter()
                .zip(cs)
                .filter(|(_, c)| *c != 0.0)
                .map(|(e, c)| (e.exponents().to_vec(), c)),
        )
    })
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.5..1.5f64, n)
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homogenization_scales_by_degree(
        (p, x) in (1usize..4).prop_flat_map(|n| (poly_strategy(n, 4), point(n + 1))),
        lambda in -2.0..2.0f64,
    ) {
        let ph = p.homogenize();
        let d = p.degree() as i32;
        let xs: Vec<f64> = x.iter().map(|v| v * lambda).collect();
        let lhs = ph.eval(&xs).unwrap();
        let rhs = lambda.powi(d) * ph.eval(&x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()) * (1.0 + p.max_abs_coeff()));
    }

    #[test]
    fn dehomogenize_inverts_homogenize(p in (1usize..4).prop_flat_map(|n| poly_strategy(n, 5))) {
        prop_assert_eq!(p.homogenize().dehomogenize().unwrap(), p);
    }

    #[test]
    fn graded_parts_sum_to_the_polynomial(p in (1usize..4).prop_flat_map(|n| poly_strategy(n, 5))) {
        let mut s = Polynomial::zero(p.nvars());
        for i in 1..=p.degree() + 1 {
            s = s + p.graded_part(i).unwrap();
        }
        prop_assert_eq!(s, p);
    }

    #[test]
    fn derivatives_match_finite_differences(
        (p, x) in (1usize..4).prop_flat_map(|n| (poly_strategy(n, 6), point(n))),
    ) {
        let h = 1e-5;
        let g = p.gradient(&x).unwrap();
        let hs = p.hessian(&x).unwrap();
        let n = x.len();
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (p.eval(&xp).unwrap() - p.eval(&xm).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()).max(p.max_abs_coeff()));
            let gp = p.gradient(&xp).unwrap();
            let gm = p.gradient(&xm).unwrap();
            for j in 0..n {
                let fd = (gp[j] - gm[j]) / (2.0 * h);
                prop_assert!((fd - hs[(i, j)]).abs() <= 1e-5 * (1.0 + hs[(i, j)].abs()).max(p.max_abs_coeff()));
            }
        }
    }

    #[test]
    fn monomial_index_round_trips(n in 1usize..5, d in 0u32..6) {
        let index = MonomialIndex::new(n, d);
        let basis = monomial_basis(n, d);
        prop_assert_eq!(index.basis(), &basis[..]);
        for (i, e) in basis.iter().enumerate() {
            prop_assert_eq!(index.index_of(e), Some(i));
            prop_assert_eq!(index.monomial(i), e);
        }
        prop_assert!(basis.windows(2).all(|w| w[0] != w[1]));
        prop_assert_eq!(basis, monomial_basis(n, d));
    }

    #[test]
    fn parser_round_trip(
        (f, eqs, ineqs) in (1usize..4).prop_flat_map(|n| (
            poly_strategy(n, 3),
            proptest::collection::vec(poly_strategy(n, 2), 0..2),
            proptest::collection::vec(poly_strategy(n, 3), 0..3),
        )),
    ) {
        let n = f.nvars();
        let f = f + Polynomial::constant(n, 1.0);
        let nonzero = |v: Vec<Polynomial>| v.into_iter().filter(|p| !p.is_zero()).collect::<Vec<_>>();
        let file = ProblemFile {
            vars: default_names(n),
            problem: PopProblem::new(f, nonzero(eqs), nonzero(ineqs)).unwrap(),
        };
        let back = parse_problem_file(&file.to_text()).unwrap();
        prop_assert_eq!(back.vars, file.vars);
        prop_assert_eq!(back.problem, file.problem);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Lifting a feasible point gives a feasible moment sequence whose
    /// objective is the value at that point.
    #[test]
    fn lifted_feasible_points_are_feasible_for_the_relaxation(
        (f, g, h, u) in (1usize..3).prop_flat_map(|n| (
            poly_strategy(n, 2),
            proptest::collection::vec(poly_strategy(n, 2), 1..3),
            proptest::collection::vec(poly_strategy(n, 2), 0..2),
            point(n),
        )),
        slack in 0.0..1.0f64,
    ) {
        let n = u.len();
        let f = f + Polynomial::constant(n, 1.0);
        let shift = |p: &Polynomial, s: f64| p - &Polynomial::constant(n, p.eval(&u).unwrap() - s);
        let ineqs: Vec<Polynomial> = g.iter().filter(|p| p.degree() > 0).map(|p| shift(p, slack)).collect();
        let eqs: Vec<Polynomial> = h.iter().filter(|p| p.degree() > 0).map(|p| shift(p, 0.0)).collect();
        let prob = PopProblem::new(f.clone(), eqs, ineqs).unwrap();
        let rel = assemble(HierarchyKind::Homogenized, &prob, 2).unwrap();
        let s = (1.0 + u.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let ut: Vec<f64> = std::iter::once(1.0 / s).chain(u.iter().map(|v| v / s)).collect();
        let nu_val = rel.nu.eval(&ut).unwrap();
        let y = tms_from_atoms(&rel.index, &[(1.0 / nu_val, ut)]);
        for lp in &rel.psd_pencils {
            let m = lp.pencil.eval(&y);
            prop_assert!(min_eig(&m) >= -1e-9 * (1.0 + m.norm()), "{} not PSD", lp.label);
        }
        for row in &rel.eq_rows {
            let v: f64 = row.coeffs.iter().map(|&(i, c)| c * y[i]).sum();
            let tol = 1e-9 * (1.0 + row.coeffs.iter().map(|&(i, c)| (c * y[i]).abs()).sum::<f64>());
            prop_assert!((v - row.rhs).abs() <= tol, "{:?} residual {}", row.origin, v - row.rhs);
        }
        prop_assert!(rel.eq_rows.iter().any(|r| r.origin == RowOrigin::Normalizer));
        let val = riesz(&rel.index, &rel.theta, &y);
        let fu = f.eval(&u).unwrap();
        prop_assert!((val - fu).abs() <= 1e-8 * (1.0 + fu.abs()), "{} vs {}", val, fu);
    }
}

/// SDP with a known optimum: `S* = F(y*)` and `Z*` are complementary PSD
/// matrices and `c` is chosen so that `(y*, Z*)` satisfies the KKT system.
struct Planted {
    inst: SdpInstance,
    optimum: f64,
}

fn planted(dim: usize, m: usize, rank: usize, seed: Vec<f64>) -> Planted {
    let mut it = seed.into_iter().cycle();
    let mut next = move || it.next().unwrap();
    let q = {
        let a = DMatrix::from_fn(dim, dim, |_, _| next());
        a.qr().q()
    };
    let mut s_diag = DMatrix::zeros(dim, dim);
    let mut z_diag = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        if i < rank {
            s_diag[(i, i)] = 0.5 + next().abs();
        } else {
            z_diag[(i, i)] = 0.5 + next().abs();
        }
    }
    let s_star = &q * s_diag * q.transpose();
    let z_star = &q * z_diag * q.transpose();
    let y_star: Vec<f64> = std::iter::once(1.0).chain((1..m).map(|_| next())).collect();
    let mats: Vec<DMatrix<f64>> = (1..m)
        .map(|_| {
            let a = DMatrix::from_fn(dim, dim, |_, _| next());
            (&a + a.transpose()) * 0.5
        })
        .collect();
    let mut f0 = s_star.clone();
    for (yi, fi) in y_star[1..].iter().zip(&mats) {
        f0 -= fi * *yi;
    }
    let all: Vec<(usize, DMatrix<f64>)> = std::iter::once((0, f0)).chain(mats.into_iter().enumerate().map(|(i, f)| (i + 1, f))).collect();
    // c_0 is free: the multiplier of y_0 = 1 absorbs it
    let objective: Vec<f64> = all
        .iter()
        .map(|(i, f)| if *i == 0 { 0.0 } else { f.dot(&z_star) })
        .collect();
    let optimum = objective.iter().zip(&y_star).map(|(c, y)| c * y).sum();
    let mut eq = DMatrix::zeros(1, m);
    eq[(0, 0)] = 1.0;
    let inst = SdpInstance {
        dim: m,
        objective,
        eq_matrix: eq,
        eq_rhs: vec![1.0],
        pencils: vec![SymPencil::from_dense(dim, &all).unwrap()],
    };
    Planted { inst, optimum }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn interior_point_finds_planted_optimum(
        dim in 2usize..6,
        m in 3usize..7,
        rank_frac in 0.0..1.0f64,
        seed in proptest::collection::vec(-1.0..1.0f64, 97),
    ) {
        let rank = 1 + ((dim - 1) as f64 * rank_frac) as usize;
        let p = planted(dim, m, rank, seed);
        let opts = SdpOptions::default();
        let sol = solve_with_restarts(&p.inst, &opts).unwrap();
        prop_assert_eq!(sol.status, SdpStatus::Optimal);
        let scale = 1.0 + p.optimum.abs();
        prop_assert!((sol.primal_obj - p.optimum).abs() <= 1e-6 * scale, "{} vs {}", sol.primal_obj, p.optimum);
        prop_assert!(sol.dual_obj <= sol.primal_obj + 1e-7 * scale);
        for c in sol.complementarity() {
            prop_assert!(c.abs() <= 1e-6 * scale, "complementarity {}", c);
        }
        let again = solve_with_restarts(&p.inst, &opts).unwrap();
        prop_assert_eq!(again.y, sol.y);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn atoms_round_trip(
        (n, atoms) in (1usize..=4).prop_flat_map(|n| (
            Just(n),
            proptest::collection::vec((0.2..1.0f64, point(n)), 1..=5),
        )),
    ) {
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let separated = atoms
            .iter()
            .enumerate()
            .all(|(i, a)| atoms[..i].iter().all(|b| dist(&a.1, &b.1) > 0.25));
        prop_assume!(separated);
        let index = MonomialIndex::new(n, 8);
        let y = tms_from_atoms(&index, &atoms);
        let t = flat_extension(&index, &y, 4, 1e-9);
        prop_assert!(t.is_some());
        let found = extract_atoms(&index, &y, t.unwrap(), 1e-9, 0).unwrap();
        prop_assert_eq!(found.len(), atoms.len());
        for (w, x) in &atoms {
            let err = found
                .iter()
                .map(|a| dist(&a.point, x).max((a.weight - w).abs()))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(err <= 1e-6, "atom {:?} recovered to {}", x, err);
        }
    }
}
