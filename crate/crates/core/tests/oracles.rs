use std::sync::Arc;

use moduli_core::coeffring::{rat, rat_int};
use moduli_core::kernels::{moment_b, moment_c, quadrature_oracle, OracleTarget, Perturbed};
use moduli_core::stablegraphs::{enumerate, graph_sum_for_family};
use moduli_core::trengine::{
    airy_tensors, check_airy_relations, check_integrated_symmetry, ks_recursion, laplace_export, psi_intersections,
    stable_range, twisted_volume, AiryTensors,
};
use moduli_core::*;

fn pi2k(k: u32, p: i64, q: i64) -> CoeffElem {
    CoeffElem::term(k, rat(p, q))
}

#[test]
fn frozen_volumes_at_zero() {
    let m = KernelFamily::Mirzakhani;
    let cases: &[(u32, usize, u32, i64, i64)] = &[
        (0, 4, 1, 2, 1),
        (1, 2, 2, 1, 4),
        (0, 5, 2, 10, 1),
        (1, 3, 3, 14, 9),
        (2, 1, 4, 29, 192),
        (0, 6, 3, 244, 3),
        (2, 2, 5, 787, 480),
    ];
    for &(g, n, k, p, q) in cases {
        let v = volume(g, n, &m).unwrap();
        assert_eq!(v.coefficient(&vec![0; n]), pi2k(k, p, q), "({g},{n})");
    }
}

#[test]
fn frozen_one_three() {
    let v = volume(1, 3, &KernelFamily::Mirzakhani).unwrap();
    assert_eq!(v.len(), 20);
    assert_eq!(v.coefficient(&[0, 0, 1]), pi2k(2, 13, 24));
    assert_eq!(v.coefficient(&[0, 1, 1]), pi2k(1, 1, 8));
    assert_eq!(v.coefficient(&[1, 1, 1]), pi2k(0, 1, 96));
    assert_eq!(v.coefficient(&[3, 0, 0]), pi2k(0, 1, 1152));
}

#[test]
fn psi_numbers() {
    let cases: &[(u32, &[u32], i64, i64)] = &[
        (0, &[1, 0, 0, 0], 1, 1),
        (0, &[2, 0, 0, 0, 0], 1, 1),
        (0, &[1, 1, 0, 0, 0], 2, 1),
        (1, &[1, 1], 1, 24),
        (1, &[2, 0], 1, 24),
        (2, &[4], 1, 1152),
        (1, &[1, 1, 1], 1, 12),
        (2, &[3, 2], 29, 5760),
    ];
    for &(g, d, p, q) in cases {
        let t = psi_intersections(g, d.len()).unwrap();
        assert_eq!(t[&d.to_vec()], rat(p, q), "g={g} d={d:?}");
    }
}

#[test]
fn laplace_dictionary() {
    let k = volume(0, 4, &KernelFamily::Kontsevich).unwrap();
    let s = laplace_export(&k);
    for (d, c) in &s.entries {
        assert_eq!(c.as_rational().unwrap(), psi_intersections(0, 4).unwrap()[d]);
    }
}

#[test]
fn ks_recursion_reproduces_volumes() {
    for fam in [KernelFamily::Mirzakhani, KernelFamily::Kontsevich] {
        let t = airy_tensors(&fam, 6).unwrap();
        for (g, n) in stable_range(3) {
            let v = volume(g, n, &fam).unwrap();
            let f = ks_recursion(&t, g, n).unwrap();
            assert_eq!(f.len(), v.len(), "{} ({g},{n})", fam.id());
            for (d, c) in v.terms() {
                assert_eq!(&f[d], c);
            }
        }
    }
}

#[test]
fn graph_sum_matches_twisted_recursion() {
    let f = MomentSpec::Formal { tag: 0 };
    for fam in [KernelFamily::Mirzakhani, KernelFamily::Kontsevich] {
        for (g, n) in stable_range(3) {
            let a = graph_sum_for_family::<FormalCoeff>(g, n, &fam, &f).unwrap();
            let b = twisted_volume::<FormalCoeff>(g, n, &fam, &f).unwrap();
            assert_eq!(a, b, "{} ({g},{n})", fam.id());
        }
    }
}

#[test]
fn graph_sum_with_concrete_twist() {
    let f = MomentSpec::indicator(rat(3, 2)).unwrap();
    for (g, n) in [(1, 1), (0, 4), (1, 2)] {
        let a = graph_sum_for_family::<CoeffElem>(g, n, &KernelFamily::Mirzakhani, &f).unwrap();
        let b = twisted_volume::<CoeffElem>(g, n, &KernelFamily::Mirzakhani, &f).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn formal_twist_specializes() {
    // substituting the moments of an indicator into the formal answer gives
    // the concrete twist
    let h = rat(3, 2);
    let formal = twisted_volume::<FormalCoeff>(0, 4, &KernelFamily::Mirzakhani, &MomentSpec::Formal { tag: 0 }).unwrap();
    let spec = MomentSpec::indicator(h).unwrap();
    let sub = formal.substitute(&|s| match s {
        Symbol::Moment { s, .. } => Some(CoeffElem::from_rational(spec.moment_rational(2 * s + 1).unwrap())),
        _ => None,
    });
    let concrete = twisted_volume::<CoeffElem>(0, 4, &KernelFamily::Mirzakhani, &spec).unwrap();
    assert_eq!(sub.to_elem_poly().unwrap(), concrete);
}

#[test]
fn twisted_torus_has_half_moment() {
    let v = twisted_volume::<FormalCoeff>(1, 1, &KernelFamily::Mirzakhani, &MomentSpec::Formal { tag: 0 }).unwrap();
    let base = FormalCoeff::from_rational(rat(1, 48));
    assert_eq!(v.coefficient(&[1]), base);
    let c0 = v.coefficient(&[0]);
    assert_eq!(c0.get(&vec![]), pi2k(1, 1, 12));
    assert_eq!(c0.get(&vec![(Symbol::Moment { tag: 0, s: 0 }, 1)]), CoeffElem::from_rational(rat(1, 2)));
}

#[test]
fn moment_transforms_match_quadrature() {
    let pts = [(0.5, 0.3), (1.0, 1.0), (2.0, 0.5), (3.0, 2.5), (0.7, 4.0)];
    for fam in [KernelFamily::Mirzakhani, KernelFamily::Kontsevich] {
        for k in 0..=2 {
            let b = moment_b(&fam, k).unwrap();
            for &(l1, l2) in &pts {
                let exact = b.eval_real(&[l1, l2]).unwrap();
                let q = quadrature_oracle(&fam, OracleTarget::B { k, l1, l2 }).unwrap();
                assert!(((q - exact) / exact).abs() < 1e-9, "{} B k={k} at ({l1},{l2}): {q} vs {exact}", fam.id());
            }
        }
        let c = moment_c(&fam, 1, 0).unwrap();
        for l1 in [0.5, 2.0] {
            let exact = c.eval_real(&[l1]).unwrap();
            let q = quadrature_oracle(&fam, OracleTarget::C { j: 1, k: 0, l1 }).unwrap();
            assert!(((q - exact) / exact).abs() < 1e-9);
        }
    }
}

#[test]
fn airy_relations_hold_window_two() {
    for fam in [KernelFamily::Mirzakhani, KernelFamily::Kontsevich] {
        let t = airy_tensors(&fam, 8).unwrap();
        let r = check_airy_relations(&t, 2).unwrap();
        assert!(r.passed(), "{} {r}", fam.id());
    }
}

#[test]
fn airy_relations_detect_mutations() {
    let base = airy_tensors(&KernelFamily::Kontsevich, 6).unwrap();
    let one = CoeffElem::from_rational(rat_int(1));
    let mutations: Vec<Box<dyn Fn(&mut AiryTensors)>> = vec![
        Box::new(|t| t.perturb_a(1, 0, 0, one.clone())),
        Box::new(|t| t.perturb_b(1, 0, 0, one.clone()).unwrap()),
        Box::new(|t| t.perturb_c(0, 0, 0, one.clone()).unwrap()),
        Box::new(|t| t.perturb_d(0, one.clone())),
    ];
    for (i, m) in mutations.iter().enumerate() {
        let mut t = base.clone();
        m(&mut t);
        let r = check_airy_relations(&t, 2).unwrap();
        assert!(!r.passed(), "mutation {i} undetected");
    }
}

#[test]
fn airy_window_needs_cap() {
    let t = airy_tensors(&KernelFamily::Mirzakhani, 2).unwrap();
    assert!(matches!(check_airy_relations(&t, 2), Err(EngineError::CapExceeded { .. })));
}

#[test]
fn integrated_symmetry_and_mutation() {
    let m = KernelFamily::Mirzakhani;
    assert!(check_integrated_symmetry::<CoeffElem>(&m, 2).unwrap().passed());
    assert!(check_integrated_symmetry::<CoeffElem>(&KernelFamily::Kontsevich, 2).unwrap().passed());
    let mut bad = Perturbed::<CoeffElem>::new(Arc::new(m));
    bad.pants = Some(EvenPoly::monomial(vec![1, 0, 0], CoeffElem::one()));
    let r = check_integrated_symmetry::<CoeffElem>(&bad, 2).unwrap();
    assert!(r.failing().contains(&1));
}

#[test]
fn perturbed_kernel_breaks_symmetry_of_volumes() {
    let mut bad = Perturbed::<CoeffElem>::new(Arc::new(KernelFamily::Mirzakhani));
    bad.b.insert(0, EvenPoly::monomial(vec![0, 1], CoeffElem::one()));
    let eng = Engine::new(Arc::new(bad));
    assert!(!eng.volume(0, 5).unwrap().is_symmetric());
}

#[test]
fn scaling_law_and_top_degree() {
    for (g, n) in stable_range(3) {
        let vm = volume(g, n, &KernelFamily::Mirzakhani).unwrap();
        let dim = 6 * g as i64 - 6 + 2 * n as i64;
        for (p, q) in [(1, 2), (2, 3), (1, 1), (3, 2), (2, 1), (5, 2), (3, 1)] {
            let beta = rat(p, q);
            let vb = volume(g, n, &KernelFamily::beta_scaled(beta.clone()).unwrap()).unwrap();
            let mut expect = EvenPoly::new(n);
            for (d, c) in vm.terms() {
                let e = 2 * d.iter().sum::<u32>() as i32 - dim as i32;
                expect.add_term(d.clone(), c.scale(&num_traits::pow::Pow::pow(&beta, e)));
            }
            assert_eq!(vb, expect, "({g},{n}) beta {beta}");
        }
        assert_eq!(vm.top_degree_part(), volume(g, n, &KernelFamily::Kontsevich).unwrap());
    }
}

#[test]
fn volumes_symmetric_and_bounded() {
    for (g, n) in stable_range(4) {
        for fam in [KernelFamily::Mirzakhani, KernelFamily::Kontsevich] {
            let v = volume(g, n, &fam).unwrap();
            assert!(v.is_symmetric(), "({g},{n})");
            assert!(v.total_degree().unwrap() <= 6 * g + 2 * n as u32 - 6);
        }
    }
}

#[test]
fn stable_graph_counts_and_edges() {
    let expect = [((0, 3), 1), ((1, 1), 2), ((0, 4), 4), ((1, 2), 5), ((0, 5), 26), ((2, 1), 16), ((1, 3), 23)];
    for ((g, n), count) in expect {
        let gs = enumerate(g, n).unwrap();
        assert_eq!(gs.len(), count, "({g},{n})");
        for sg in gs {
            assert!(sg.num_edges() <= (3 * g as usize + n) - 3);
            assert_eq!(sg.total_genus(), g);
            assert!(sg.is_connected());
        }
    }
}
