use maisteer::linalg::CMatrix;
use maisteer::split::{build_split_state, condition_on_alice, reduced_bob_state};
use num_complex::Complex64 as C;
use proptest::prelude::*;

/// Symmetric qubit state with `k` excitations among `n` qubits; bit 1 = spin up.
fn dicke(n: usize, k: usize) -> Vec<C> {
    let count = (0..1usize << n).filter(|b| b.count_ones() as usize == k).count();
    let amp = 1.0 / (count as f64).sqrt();
    (0..1usize << n)
        .map(|b| if b.count_ones() as usize == k { C::new(amp, 0.0) } else { C::new(0.0, 0.0) })
        .collect()
}

fn kron(a: &CMatrix<f64>, b: &CMatrix<f64>) -> CMatrix<f64> {
    CMatrix::from_fn(a.rows() * b.rows(), a.cols() * b.cols(), |i, j| {
        a[(i / b.rows(), j / b.cols())] * b[(i % b.rows(), j % b.cols())]
    })
}

/// `sum_i (cos t sigma_y + sin t sigma_z) / 2` on `n` qubits, basis order (down, up).
fn collective(n: usize, theta: f64) -> CMatrix<f64> {
    let (c, s) = (theta.cos(), theta.sin());
    let single = CMatrix::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => C::new(-s / 2.0, 0.0),
        (1, 1) => C::new(s / 2.0, 0.0),
        (0, 1) => C::new(0.0, c / 2.0),
        _ => C::new(0.0, -c / 2.0),
    });
    let mut total = CMatrix::zeros(1 << n, 1 << n);
    for site in 0..n {
        let mut term = CMatrix::identity(1);
        for q in (0..n).rev() {
            let f = if q == site { single.clone() } else { CMatrix::identity(2) };
            term = kron(&term, &f);
        }
        total = &total + &term;
    }
    total
}

/// Bob's unnormalized conditional state for Alice outcome `l`, built in the
/// full qubit space and read back in Bob's Dicke basis.
fn qubit_conditional(atoms: usize, mu: f64, theta: f64, n_a: usize, l: usize) -> CMatrix<f64> {
    let state = build_split_state(atoms, mu).unwrap();
    let c = state.block(n_a).unwrap();
    let n_b = atoms - n_a;
    let (da, db) = (1usize << n_a, 1usize << n_b);
    let mut psi = vec![C::new(0.0, 0.0); da * db];
    for ka in 0..=n_a {
        let va = dicke(n_a, ka);
        for kb in 0..=n_b {
            let vb = dicke(n_b, kb);
            for i in 0..da {
                for j in 0..db {
                    psi[i * db + j] += c[(ka, kb)] * va[i] * vb[j];
                }
            }
        }
    }
    // Lagrange-interpolation projector onto eigenvalue l - n_a/2.
    let x = collective(n_a, theta);
    let lam = |i: usize| i as f64 - n_a as f64 / 2.0;
    let mut proj = CMatrix::identity(da);
    for other in (0..=n_a).filter(|&o| o != l) {
        let shifted = &x - &CMatrix::identity(da).scale_re(lam(other));
        proj = proj.matmul(&shifted).scale_re(1.0 / (lam(l) - lam(other)));
    }
    let full = kron(&proj, &CMatrix::identity(db));
    let out = full.apply(&psi);
    let rho_b = CMatrix::from_fn(db, db, |j, jp| {
        (0..da).fold(C::new(0.0, 0.0), |acc, i| acc + out[i * db + j] * out[i * db + jp].conj())
    });
    let basis: Vec<Vec<C>> = (0..=n_b).map(|k| dicke(n_b, k)).collect();
    CMatrix::from_fn(n_b + 1, n_b + 1, |k, kp| {
        let left = rho_b.apply(&basis[kp]);
        basis[k].iter().zip(&left).fold(C::new(0.0, 0.0), |a, (u, v)| a + u.conj() * v)
    })
}

#[test]
fn conditioning_matches_qubit_space_construction() {
    for (atoms, mu, theta) in [(2, 0.3, 0.0), (3, 0.7, 1.1), (4, 1.9, 2.6), (4, 0.0, 0.4)] {
        let state = build_split_state(atoms, mu).unwrap();
        let asm = condition_on_alice(&state, theta);
        for n_a in 0..=atoms {
            for l in 0..=n_a {
                let want = qubit_conditional(atoms, mu, theta, n_a, l);
                let got = asm
                    .branches()
                    .iter()
                    .find(|b| b.n_a == n_a && b.alice_index == l)
                    .map(|b| CMatrix::outer(&b.state, &b.state).scale_re(b.prob))
                    .unwrap_or_else(|| CMatrix::zeros(atoms - n_a + 1, atoms - n_a + 1));
                assert!(
                    got.max_abs_diff(&want) < 1e-12,
                    "N={atoms} mu={mu} theta={theta} N_A={n_a} l={l}"
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn assemblage_is_complete_and_consistent(
        atoms in 1usize..=14,
        mu in 0.0f64..3.2,
        theta in 0.0f64..std::f64::consts::PI,
    ) {
        let state = build_split_state(atoms, mu).unwrap();
        prop_assert!((state.norm_sqr() - 1.0).abs() < 1e-12);
        let asm = condition_on_alice(&state, theta);
        prop_assert!((asm.total_probability() - 1.0).abs() < 1e-10);
        let rho = reduced_bob_state(&asm);
        prop_assert!(rho.trace_distance(&state.reduced_bob_state()) < 1e-10);
        prop_assert!(rho.validate(1e-10).is_ok());
    }

    #[test]
    fn bob_state_does_not_depend_on_alice_setting(
        atoms in 1usize..=12,
        mu in 0.0f64..3.2,
        t1 in 0.0f64..std::f64::consts::PI,
        t2 in 0.0f64..std::f64::consts::PI,
    ) {
        let state = build_split_state(atoms, mu).unwrap();
        let a = reduced_bob_state(&condition_on_alice(&state, t1));
        let b = reduced_bob_state(&condition_on_alice(&state, t2));
        prop_assert!(a.trace_distance(&b) < 1e-10);
    }

    #[test]
    fn sector_marginals_do_not_depend_on_mu(atoms in 1usize..=20, mu in -4.0f64..4.0) {
        let s = build_split_state(atoms, mu).unwrap();
        let r = build_split_state(atoms, 0.0).unwrap();
        for n_a in 0..=atoms {
            let p = maisteer::split::sector_probability(&s, n_a).unwrap();
            let q = maisteer::split::sector_probability(&r, n_a).unwrap();
            prop_assert!((p - q).abs() < 1e-14);
        }
    }
}
