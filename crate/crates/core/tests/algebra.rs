use cartan_kak::generator::{
    commutator_numeric, commutator_symbolic, lambda_basis, lambda_basis_labels, reassemble, to_lambda_basis, Generator,
};
use cartan_kak::linalg::{frob, random_traceless_hermitian, random_unitary, CMat};
use cartan_kak::partition::{intrinsic_quotient_algebra, verify_closure, verify_closure_with_tol};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn closure_is_exhaustive() {
    for n in [4, 6, 8] {
        let qa = intrinsic_quotient_algebra(n).unwrap();
        let rep = verify_closure(&qa);
        let g = qa.generator_count();
        assert_eq!(g, n * n - 1);
        let mut sizes = vec![qa.center.len()];
        sizes.extend(qa.pairs.iter().flat_map(|p| [p.w.len(), p.w_hat.len()]));
        // ordered pairs inside a space, unordered pairs across spaces
        let expected: usize = (0..sizes.len()).map(|a| (a..sizes.len()).map(|b| sizes[a] * sizes[b]).sum::<usize>()).sum();
        assert_eq!(rep.checked, expected, "su({n})");
        assert!(rep.checked >= g * (g - 1) / 2);
        assert!(rep.passed(), "su({n}): {:?}", rep.violations.first());
        assert!(rep.max_residual < 1e-9);
    }
}

#[test]
fn closure_survives_transport() {
    let qa = intrinsic_quotient_algebra(8).unwrap();
    for seed in 0..3 {
        let u = random_unitary(8, &mut ChaCha8Rng::seed_from_u64(seed));
        let moved = qa.conjugated(&u);
        let rep = verify_closure_with_tol(&moved, 1e-8);
        assert!(rep.passed() && rep.max_residual < 1e-8, "seed {seed}: {:e}", rep.max_residual);
        assert!(!moved.is_center_diagonal());
    }
}

#[test]
fn symbolic_matches_numeric_exhaustively() {
    for n in 2..=8 {
        let basis = lambda_basis(n);
        for a in &basis {
            for b in &basis {
                let sym = commutator_symbolic(&a.label, &b.label).unwrap();
                let num = commutator_numeric(a, b).unwrap();
                let err = frob(&(sym.to_matrix(n).unwrap() - &num));
                assert!(err <= 1e-12, "N={n} [{}, {}]: {err:e}", a.label, b.label);
                assert_eq!(sym.is_zero, frob(&num) <= 1e-12);
            }
        }
    }
}

fn herm(n: usize, seed: u64) -> CMat {
    random_traceless_hermitian(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn commutator_is_antisymmetric(n in 2usize..=6, i in 0usize..35, j in 0usize..35) {
        let labels = lambda_basis_labels(n);
        let (a, b) = (&labels[i % labels.len()], &labels[j % labels.len()]);
        let ab = commutator_symbolic(a, b).unwrap().to_matrix(n).unwrap();
        let ba = commutator_symbolic(b, a).unwrap().to_matrix(n).unwrap();
        prop_assert!(frob(&(ab + ba)) < 1e-12);
    }

    #[test]
    fn jacobi_identity(n in 2usize..=5, i in 0usize..24, j in 0usize..24, k in 0usize..24) {
        let basis = lambda_basis(n);
        let pick = |x: usize| &basis[x % basis.len()];
        let (a, b, c) = (&pick(i).matrix, &pick(j).matrix, &pick(k).matrix);
        let br = |x: &CMat, y: &CMat| x * y - y * x;
        let s = br(a, &br(b, c)) + br(b, &br(c, a)) + br(c, &br(a, b));
        prop_assert!(frob(&s) < 1e-11);
    }

    #[test]
    fn lambda_expansion_round_trips(n in 2usize..=8, seed in any::<u64>()) {
        let m = herm(n, seed);
        let terms = to_lambda_basis(&m).unwrap();
        prop_assert!(frob(&(reassemble(&terms, n).unwrap() - &m)) < 1e-12);
        prop_assert!(terms.iter().all(|(_, l)| l.is_lambda_basis()));
    }

    #[test]
    fn symbolic_commutator_of_sums_is_bilinear(n in 2usize..=6, s1 in any::<u64>(), s2 in any::<u64>()) {
        let (x, y) = (herm(n, s1), herm(n, s2));
        let expand = |m: &CMat| to_lambda_basis(m).unwrap();
        let mut total = CMat::zeros(n, n);
        for (ca, la) in expand(&x) {
            for (cb, lb) in expand(&y) {
                total += commutator_symbolic(&la, &lb).unwrap().to_matrix(n).unwrap() * Complex64::new(ca * cb, 0.0);
            }
        }
        let gx = Generator::custom(x.clone()).unwrap();
        let gy = Generator::custom(y.clone()).unwrap();
        prop_assert!(frob(&(total - commutator_numeric(&gx, &gy).unwrap())) < 1e-10);
    }
}
