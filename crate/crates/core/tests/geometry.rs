use moduli_core::hyperbolic::*;

const SAMPLES: [(f64, f64, f64); 3] = [(2.0, 1.0, 0.0), (3.0, 2.0, 0.7), (1.5, 0.8, 1.3)];

#[test]
fn mcshane_identity_on_samples() {
    for (l, ell, tau) in SAMPLES {
        let t = FNTorus::new(l, ell, tau).unwrap();
        let rows = mcshane_partial_sums(&t, 25.0, TorusKernel::Mirzakhani).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].partial_sum > w[0].partial_sum);
        }
        let last = rows.last().unwrap().partial_sum;
        assert!(last <= 1.0 + 1e-9);
        assert!((last - 1.0).abs() < 1e-3, "({l},{ell},{tau}): {last}");
    }
}

#[test]
fn mcshane_tail_decays() {
    // 1 - S(cutoff) <= K cutoff^2 exp(-(cutoff - L)/2), with K fitted on the
    // first cutoff and checked on the others
    let t = FNTorus::new(2.0, 1.0, 0.3).unwrap();
    let tail = |c: f64| 1.0 - mcshane_sum(&t, c).unwrap();
    let shape = |c: f64| c * c * (-(c - t.boundary) / 2.0).exp();
    let k = tail(8.0) / shape(8.0);
    for c in [10.0, 12.0, 16.0, 20.0] {
        assert!(tail(c) <= 1.5 * k * shape(c), "cutoff {c}");
    }
}

#[test]
fn kontsevich_sum_is_not_one() {
    let t = FNTorus::new(2.0, 1.0, 0.0).unwrap();
    let s = mcshane_sum_with(&t, 25.0, TorusKernel::Kontsevich).unwrap();
    assert!(s.is_finite());
    assert!((s - 1.0).abs() > 1e-3);
}

#[test]
fn spectrum_oracle_several_points() {
    for (l, ell, tau) in SAMPLES {
        let t = FNTorus::new(l, ell, tau).unwrap();
        for cutoff in [4.0, 6.0, 8.0] {
            let a = torus_spectrum(&t, cutoff).unwrap();
            let b = torus_spectrum_bruteforce(&t, cutoff);
            let ka: Vec<(i64, i64)> = a.iter().map(|c| (c.p, c.q)).collect();
            let kb: Vec<(i64, i64)> = b.iter().map(|c| (c.p, c.q)).collect();
            assert_eq!(ka, kb);
        }
    }
}

#[test]
fn fn_length_is_first_curve() {
    let t = FNTorus::new(3.0, 0.9, 0.4).unwrap();
    let s = torus_spectrum(&t, 5.0).unwrap();
    let c = s.iter().find(|c| (c.p, c.q) == (0, 1)).unwrap();
    assert!((c.length - 0.9).abs() < 1e-12);
}

#[test]
fn quadratic_growth() {
    let t = FNTorus::new(2.0, 1.0, 0.3).unwrap();
    let cutoffs: Vec<f64> = (5..=30).map(f64::from).collect();
    let fit = count_growth(&t, &cutoffs).unwrap();
    for w in fit.counts.windows(2) {
        assert!(w[1] >= w[0]);
    }
    for (c, n) in fit.cutoffs.iter().zip(&fit.counts) {
        assert!(*n as f64 <= fit.constant * c * c + 1e-9);
    }
    assert!(fit.exponent < 2.2, "{}", fit.exponent);
}

#[test]
fn seam_symmetry_and_round_trip() {
    for (a, b, c) in [(1.0, 2.0, 0.5), (0.3, 0.3, 0.6), (4.0, 1.0, 3.5)] {
        let d = seam_length(&PantsMetric::new(a, b, c).unwrap());
        let e = seam_length(&PantsMetric::new(b, a, c).unwrap());
        assert!((d - e).abs() < 1e-14);
        assert!(d > 0.0);
        assert!((third_boundary_from_seam(a, b, d) - c).abs() < 1e-9);
    }
}

#[test]
fn small_pants_filter_excludes_precondition_failures() {
    let rep = count_small_pants_bound_check(1.0, &[[1.0, 1.0, 2.5], [0.5, 1.0, 1.0]]);
    assert_eq!(rep.samples, 0);
}

#[test]
fn small_pants_sweep_values() {
    // The seam bound is exceeded at the corner L1 = L2 = eps, L3 = L1 + L2;
    // the maxima are frozen here.
    let r = count_small_pants_bound_check(0.5, &small_pants_grid(0.5, 4.0, 16));
    assert!((r.max_seam - 4.229_3).abs() < 1e-3);
    assert_eq!(r.argmax, [0.5, 0.5, 1.0]);
    let r = count_small_pants_bound_check(1.0, &small_pants_grid(1.0, 4.0, 16));
    assert!((r.max_seam - 3.029_3).abs() < 1e-3);
}
