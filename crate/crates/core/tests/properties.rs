use num_complex::Complex64;
use proptest::prelude::*;

use moduli_core::coeffring::{rat, Rational};
use moduli_core::hyperbolic::{torus_spectrum, FNTorus};
use moduli_core::kernels::{mirzakhani_b_f, mirzakhani_b_logratio, mirzakhani_c};
use moduli_core::stablegraphs::enumerate;
use moduli_core::tqft::{su2_level, verlinde_rank};
use moduli_core::*;

fn small_rational() -> impl Strategy<Value = Rational> {
    (-20i64..=20, 1i64..=9).prop_map(|(p, q)| rat(p, q))
}

fn coeff_elem() -> impl Strategy<Value = CoeffElem> {
    prop::collection::vec((0u32..4, small_rational()), 0..4).prop_map(|terms| {
        let mut c = CoeffElem::zero();
        for (k, q) in terms {
            c.add_assign_ref(&CoeffElem::term(k, q));
        }
        c
    })
}

fn even_poly(nvars: usize) -> impl Strategy<Value = EvenPoly> {
    prop::collection::vec((prop::collection::vec(0u32..3, nvars), coeff_elem()), 0..5).prop_map(move |terms| {
        let mut p = EvenPoly::new(nvars);
        for (d, c) in terms {
            p.add_term(d, c);
        }
        p
    })
}

proptest! {
    #[test]
    fn coeff_ring_axioms(a in coeff_elem(), b in coeff_elem(), c in coeff_elem()) {
        prop_assert_eq!(a.mul_ref(&b), b.mul_ref(&a));
        prop_assert_eq!(a.mul_ref(&b).mul_ref(&c), a.mul_ref(&b.mul_ref(&c)));
        let mut bc = b.clone();
        bc.add_assign_ref(&c);
        let mut ab_ac = a.mul_ref(&b);
        ab_ac.add_assign_ref(&a.mul_ref(&c));
        prop_assert_eq!(a.mul_ref(&bc), ab_ac);
        prop_assert_eq!(a.mul_ref(&CoeffElem::one()), a.clone());
        let mut z = a.clone();
        z.add_assign_ref(&a.neg_ref());
        prop_assert!(z.is_zero());
        prop_assert!(z.terms().next().is_none());
    }

    #[test]
    fn poly_ring_axioms(p in even_poly(2), q in even_poly(2), r in even_poly(2)) {
        prop_assert_eq!(p.checked_add(&q).unwrap(), q.checked_add(&p).unwrap());
        prop_assert_eq!(p.checked_mul(&q).unwrap(), q.checked_mul(&p).unwrap());
        let left = p.checked_mul(&q.checked_add(&r).unwrap()).unwrap();
        let right = p.checked_mul(&q).unwrap().checked_add(&p.checked_mul(&r).unwrap()).unwrap();
        prop_assert_eq!(left, right);
        prop_assert!(p.checked_sub(&p).unwrap().is_zero());
        prop_assert!(p.terms().all(|(_, c)| !c.is_zero()));
    }

    #[test]
    fn eval_is_a_homomorphism(p in even_poly(2), q in even_poly(2), x in -2.0f64..2.0, y in -2.0f64..2.0, im in -1.0f64..1.0) {
        let pt = [Complex64::new(x, im), Complex64::new(y, 0.3)];
        let pi2 = 9.869604401089358;
        let pq = p.checked_mul(&q).unwrap().eval(&pt, pi2).unwrap();
        let prod = p.eval(&pt, pi2).unwrap() * q.eval(&pt, pi2).unwrap();
        prop_assert!((pq - prod).norm() <= 1e-8 * (1.0 + prod.norm()));
        let s = p.checked_add(&q).unwrap().eval(&pt, pi2).unwrap();
        let sum = p.eval(&pt, pi2).unwrap() + q.eval(&pt, pi2).unwrap();
        prop_assert!((s - sum).norm() <= 1e-9 * (1.0 + sum.norm()));
    }

    #[test]
    fn json_round_trip(p in even_poly(3)) {
        let text = p.to_json_string();
        prop_assert_eq!(EvenPoly::from_json_str(&text).unwrap(), p);
    }

    #[test]
    fn top_degree_is_homogeneous(p in even_poly(2)) {
        let top = p.top_degree_part();
        let degs: std::collections::BTreeSet<u32> = top.terms().map(|(d, _)| d.iter().sum()).collect();
        prop_assert!(degs.len() <= 1);
        prop_assert_eq!(top.half_degree(), p.half_degree());
    }

    #[test]
    fn mirzakhani_kernel_forms_agree(l1 in 0.05f64..8.0, l2 in 0.05f64..8.0, l in 0.0f64..12.0) {
        let a = mirzakhani_b_logratio(l1, l2, l);
        let b = mirzakhani_b_f(l1, l2, l);
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        prop_assert!(b > 0.0 && b <= 1.0 + 1e-12);
    }

    #[test]
    fn c_kernel_symmetric_and_bounded(l1 in 0.05f64..8.0, l in 0.0f64..10.0, lp in 0.0f64..10.0) {
        let c = mirzakhani_c(l1, l, lp);
        prop_assert!((c - mirzakhani_c(l1, lp, l)).abs() < 1e-12);
        prop_assert!(c > 0.0 && c <= 1.0 + 1e-12);
    }

    #[test]
    fn kernel_family_json(p in 1i64..9, q in 1i64..9, h in 1i64..5) {
        let fam = KernelFamily::beta_scaled(rat(p, q)).unwrap().twist(MomentSpec::indicator(rat(h, 2)).unwrap());
        prop_assert_eq!(KernelFamily::from_json(&fam.to_json()).unwrap(), fam);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn holonomy_invariants(l in 0.2f64..4.0, ell in 0.2f64..4.0, tau in -3.0f64..3.0) {
        let t = FNTorus::new(l, ell, tau).unwrap();
        prop_assert!(t.trace_identity_residual().abs() < 1e-10 * (1.0 + t.commutator_trace().abs()));
        prop_assert!(t.commutator_trace() <= -2.0);
        prop_assert!((t.boundary_from_holonomy() - l).abs() < 1e-9);
    }

    #[test]
    fn dehn_twist_preserves_spectrum(l in 0.5f64..4.0, ell in 0.5f64..2.5, tau in -1.0f64..1.0) {
        let a = torus_spectrum(&FNTorus::new(l, ell, tau).unwrap(), 9.0).unwrap();
        let b = torus_spectrum(&FNTorus::new(l, ell, tau + ell).unwrap(), 9.0).unwrap();
        // compare away from the cutoff, where a rounding difference could
        // move a curve across it
        let la: Vec<f64> = a.iter().map(|c| c.length).filter(|x| *x < 8.9).collect();
        let lb: Vec<f64> = b.iter().map(|c| c.length).filter(|x| *x < 8.9).collect();
        prop_assert_eq!(la.len(), lb.len());
        for (x, y) in la.iter().zip(&lb) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leaf_relabelling_is_a_bijection(perm in Just(vec![0usize, 1, 2, 3, 4]).prop_shuffle()) {
        let graphs = enumerate(0, 5).unwrap();
        let mut image: Vec<StableGraph> = graphs.iter().map(|g| g.permute_leaves(&perm)).collect();
        for (g, h) in graphs.iter().zip(&image) {
            prop_assert_eq!(g.aut(), h.aut());
        }
        image.sort();
        let mut sorted = graphs.clone();
        sorted.sort();
        prop_assert_eq!(image, sorted);
    }

    #[test]
    fn verlinde_symmetric(k in 1usize..=4, a in 0usize..5, b in 0usize..5, c in 0usize..5, g in 0u32..2) {
        let alg = su2_level(k).unwrap();
        let (a, b, c) = (a % (k + 1), b % (k + 1), c % (k + 1));
        let r = verlinde_rank(&alg, g, &[a, b, c]).unwrap().rank;
        prop_assert_eq!(r, verlinde_rank(&alg, g, &[c, a, b]).unwrap().rank);
        prop_assert_eq!(r, verlinde_rank(&alg, g, &[b, a, c]).unwrap().rank);
        let d: Vec<usize> = [a, b, c].iter().map(|x| alg.dagger[*x]).collect();
        prop_assert_eq!(r, verlinde_rank(&alg, g, &d).unwrap().rank);
        prop_assert!(r >= 0);
    }
}

#[test]
fn stable_graph_leaf_relabelling_one_three() {
    let graphs = enumerate(1, 3).unwrap();
    for perm in [[1, 0, 2], [2, 1, 0], [1, 2, 0]] {
        let mut image: Vec<StableGraph> = graphs.iter().map(|g| g.permute_leaves(&perm)).collect();
        image.sort();
        let mut sorted = graphs.clone();
        sorted.sort();
        assert_eq!(image, sorted);
    }
}
