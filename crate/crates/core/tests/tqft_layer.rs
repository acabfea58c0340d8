use moduli_core::coeffring::{rat, rat_int};
use moduli_core::tqft::*;
use moduli_core::trengine::stable_range;
use moduli_core::*;

#[test]
fn decomposition_independence_exhaustive() {
    for k in 1..=3 {
        let alg = su2_level(k).unwrap();
        for (g, n) in stable_range(3) {
            let all = amplitudes_all_decompositions(&alg, g, n).unwrap();
            assert!(!all.is_empty());
            assert!(all.iter().all(|t| *t == all[0]), "k={k} ({g},{n})");
        }
    }
}

#[test]
fn verlinde_matches_fusion_ring() {
    for k in 1..=4 {
        let alg = su2_level(k).unwrap();
        for a in 0..=k {
            for b in 0..=k {
                for c in 0..=k {
                    let r = verlinde_rank(&alg, 0, &[a, b, c]).unwrap();
                    assert_eq!(r.rank, su2_fusion(k, a, b, c) as i64);
                    assert!(r.residual < 1e-8);
                }
            }
        }
        for (g, n) in stable_range(3) {
            let f = tqft_amplitude(&alg, g, n).unwrap();
            for idx in f.indices() {
                let r = verlinde_rank(&alg, g, &idx).unwrap();
                assert_eq!(rat_int(r.rank), *f.get(&idx), "k={k} ({g},{n}) {idx:?}");
            }
        }
    }
}

#[test]
fn bundled_data_agrees_with_closed_form() {
    for k in 1..=4 {
        let a = bundled_su2(k).unwrap();
        let b = su2_level(k).unwrap();
        for (g, n) in [(0, 3), (1, 1), (2, 1)] {
            assert_eq!(tqft_amplitude(&a, g, n).unwrap(), tqft_amplitude(&b, g, n).unwrap());
        }
        let json = a.to_modular_json().unwrap();
        assert_eq!(FrobeniusAlgebra::from_modular_json(&json).unwrap(), a);
    }
    assert!(bundled_su2(5).is_err());
}

#[test]
fn fatgraph_double_count() {
    let expect = [((0, 3), 1), ((1, 1), 1), ((0, 4), 2), ((1, 2), 4), ((2, 1), 5), ((1, 3), 16), ((0, 5), 5)];
    for ((g, n), count) in expect {
        let c = fatgraph_enumerate(g, n).unwrap();
        assert_eq!(c.graphs.len(), count, "({g},{n})");
        assert_eq!(c.orbit_count, rat_int(count as i64));
        for fg in &c.graphs {
            assert_eq!(fg.trivalent, 2 * g as usize + n - 2);
            assert_eq!(fg.types.len(), fg.trivalent);
            assert_eq!(fg.spanning_tree.len() + 1, fg.trivalent);
            assert_eq!(fg.leaf_order.len(), n);
            let mut order = fg.pants_order.clone();
            order.sort();
            assert_eq!(order, (0..fg.trivalent).collect::<Vec<_>>());
            for (i, t) in fg.types.iter().enumerate() {
                if let PantsType::B(BoundaryRef::Cut(j)) = t {
                    assert!(*j < i);
                }
            }
        }
    }
}

#[test]
fn strict_sum_counts_graphs() {
    let triv = FrobeniusAlgebra::trivial();
    for (g, n) in [(0, 4), (1, 2), (2, 1)] {
        let count = fatgraph_enumerate(g, n).unwrap().graphs.len() as i64;
        assert_eq!(strict_gr_sum(&triv, g, n).unwrap().data, vec![rat_int(count)]);
    }
    let alg = su2_level(1).unwrap();
    let w = strict_gr_sum(&alg, 1, 1).unwrap();
    let f = tqft_amplitude(&alg, 1, 1).unwrap();
    assert_eq!(w, f);
    let w = strict_gr_sum(&alg, 0, 3).unwrap();
    assert_eq!(w, tqft_amplitude(&alg, 0, 3).unwrap());
}

#[test]
fn rank_factorization_exact() {
    for k in 1..=4 {
        let alg = su2_level(k).unwrap();
        for (g, n) in stable_range(2) {
            assert!(rank_factorization_residuals(&alg, g, n).unwrap().is_empty(), "k={k} ({g},{n})");
        }
    }
    let triv = FrobeniusAlgebra::trivial();
    let v = algebra_valued_volume(&triv, 1, 2).unwrap();
    let vm = volume(1, 2, &KernelFamily::Mirzakhani).unwrap();
    let expect = EvenPoly::<FormalCoeff>::from_elem_poly(&vm).scale(&FormalCoeff::symbol_pow(Symbol::S, 2));
    assert_eq!(*v.get(&[0, 0]), expect);
}

#[test]
fn torus_component_is_rank() {
    let alg = su2_level(2).unwrap();
    let v = algebra_valued_volume(&alg, 1, 1).unwrap();
    let vd = EvenPoly::<FormalCoeff>::from_elem_poly(&volume(1, 1, &KernelFamily::Mirzakhani).unwrap());
    for l in 0..3 {
        let rk = verlinde_rank(&alg, 1, &[l]).unwrap().rank;
        assert_eq!(*v.get(&[l]), vd.scale(&FormalCoeff::symbol(Symbol::S)).scale_rational(&rat_int(rk)));
    }
}

#[test]
fn conformal_twist_properties() {
    let alg = su2_level(2).unwrap();
    for (g, n) in [(1, 1), (0, 4), (1, 2)] {
        let tw = conformal_block_twist(&alg, g, n).unwrap();
        let plain = algebra_valued_volume(&alg, g, n).unwrap();
        for idx in tw.tensor.indices() {
            let p = tw.get(&idx);
            let zeroed = p.substitute(&|s| match s {
                Symbol::Height(_) => Some(CoeffElem::zero()),
                _ => None,
            });
            assert_eq!(&zeroed, plain.get(&idx));
            for (_, c) in p.terms() {
                for l in 0..3 {
                    assert!(c.degree_in(Symbol::Height(l)) <= 6 * g + 2 * n as u32 - 6);
                }
            }
        }
    }
}

#[test]
fn conformal_twist_torus_base_case() {
    let alg = su2_level(2).unwrap();
    let tw = conformal_block_twist(&alg, 1, 1).unwrap();
    let plain = algebra_valued_volume(&alg, 1, 1).unwrap();
    for l in 0..3 {
        let diff = tw.get(&[l]).checked_sub(plain.get(&[l])).unwrap();
        let mut expect = FormalCoeff::zero();
        for m in 0..3 {
            let h2 = FormalCoeff::symbol_pow(Symbol::Height(m as u32), 2);
            expect.add_assign_ref(&h2.scale(&(rat(-1, 4) * alg.mu(l, m, alg.dagger[m]))));
        }
        assert_eq!(diff, EvenPoly::constant(1, expect));
    }
}

#[test]
fn heights_of_su2() {
    for k in 1..=4 {
        let alg = su2_level(k).unwrap();
        let h = alg.heights().unwrap();
        assert!(h[0].is_some());
        assert!(h[1..].iter().all(Option::is_none));
    }
}

#[test]
fn frobenius_axioms_reject_bad_data() {
    let mut mu = Tensor::filled(2, 3, rat_int(0));
    mu.set(&[0, 0, 0], rat_int(1));
    mu.set(&[0, 1, 1], rat_int(1));
    mu.set(&[1, 0, 1], rat_int(1));
    // not symmetric under moving the last slot
    let eta = vec![vec![rat_int(1), rat_int(0)], vec![rat_int(0), rat_int(1)]];
    assert!(FrobeniusAlgebra::new(vec!["a".into(), "b".into()], vec![0, 1], eta.clone(), mu, None).is_err());
    let degenerate = vec![vec![rat_int(1), rat_int(1)], vec![rat_int(1), rat_int(1)]];
    assert!(FrobeniusAlgebra::new(vec!["a".into(), "b".into()], vec![0, 1], degenerate, Tensor::filled(2, 3, rat_int(1)), None).is_err());
}
