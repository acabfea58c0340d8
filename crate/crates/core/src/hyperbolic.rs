//! Hyperbolic geometry at desk scale: pair-of-pants trigonometry, the
//! simple closed geodesics of a one-holed torus, and numerical checks of
//! the McShane identity and of curve-counting bounds.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::kernels::{kontsevich_c, mirzakhani_c};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("lengths must be positive and finite, got {0:?}")]
    BadLength(Vec<f64>),
    #[error("degenerate holonomy: {0}")]
    Degenerate(String),
}

/// Boundary lengths of a hyperbolic pair of pants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PantsMetric {
    pub lengths: [f64; 3],
}

impl PantsMetric {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Result<Self, GeometryError> {
        let lengths = [l1, l2, l3];
        if lengths.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(GeometryError::BadLength(lengths.to_vec()));
        }
        Ok(PantsMetric { lengths })
    }
}

/// Distance between boundaries 1 and 2 along the common perpendicular.
pub fn seam_length(p: &PantsMetric) -> f64 {
    let [l1, l2, l3] = p.lengths;
    let num = (l3 / 2.0).cosh() + (l1 / 2.0).cosh() * (l2 / 2.0).cosh();
    let den = (l1 / 2.0).sinh() * (l2 / 2.0).sinh();
    (num / den).acosh()
}

/// Third boundary length recovered from `L1`, `L2` and the seam `d12`.
pub fn third_boundary_from_seam(l1: f64, l2: f64, d12: f64) -> f64 {
    let c = d12.cosh() * (l1 / 2.0).sinh() * (l2 / 2.0).sinh() - (l1 / 2.0).cosh() * (l2 / 2.0).cosh();
    2.0 * c.acosh()
}

/// Largest `2 ln(4/eps)` violation search over a grid of pants with
/// `L1, L2, L3 >= eps` and `L3 <= L1 + L2`.
#[derive(Clone, Debug, Serialize)]
pub struct SmallPantsReport {
    pub eps: f64,
    pub bound: f64,
    pub samples: usize,
    pub max_seam: f64,
    pub argmax: [f64; 3],
    pub violations: Vec<([f64; 3], f64)>,
}

impl SmallPantsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check `d12 <= 2 ln(4/eps)` on the given samples, skipping those outside
/// the precondition.
pub fn count_small_pants_bound_check(eps: f64, samples: &[[f64; 3]]) -> SmallPantsReport {
    let bound = 2.0 * (4.0 / eps).ln();
    let mut rep = SmallPantsReport { eps, bound, samples: 0, max_seam: 0.0, argmax: [0.0; 3], violations: Vec::new() };
    for &[l1, l2, l3] in samples {
        if l1 < eps || l2 < eps || l3 < eps || l3 > l1 + l2 + 1e-12 {
            continue;
        }
        rep.samples += 1;
        let d = seam_length(&PantsMetric { lengths: [l1, l2, l3] });
        if d > rep.max_seam {
            rep.max_seam = d;
            rep.argmax = [l1, l2, l3];
        }
        if d > bound {
            rep.violations.push(([l1, l2, l3], d));
        }
    }
    rep
}

/// Grid with `L1, L2` in `[eps, eps + span]` and `L3` in `[eps, L1 + L2]`,
/// always including the endpoint `L3 = L1 + L2`.
pub fn small_pants_grid(eps: f64, span: f64, steps: usize) -> Vec<[f64; 3]> {
    let h = span / steps as f64;
    let mut out = Vec::new();
    for i in 0..=steps {
        for j in 0..=steps {
            let (l1, l2) = (eps + i as f64 * h, eps + j as f64 * h);
            let top = l1 + l2;
            let m = ((top - eps) / h).ceil() as usize;
            for k in 0..=m {
                out.push([l1, l2, (eps + k as f64 * h).min(top)]);
            }
        }
    }
    out
}

type Mat = [[f64; 2]; 2];

fn mul(a: &Mat, b: &Mat) -> Mat {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn inv(a: &Mat) -> Mat {
    [[a[1][1], -a[0][1]], [-a[1][0], a[0][0]]]
}

fn trace(a: &Mat) -> f64 {
    a[0][0] + a[1][1]
}

/// Fenchel-Nielsen coordinates of a one-holed torus with boundary length
/// `boundary`, together with generators of its holonomy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FNTorus {
    pub boundary: f64,
    pub ell: f64,
    pub tau: f64,
    pub x: Mat,
    pub y: Mat,
}

impl FNTorus {
    /// `X = diag(e^(l/2), e^(-l/2))`; `Y` translates along the
    /// perpendicular from the axis of `X` to its translate, then twists by
    /// `tau` along that axis.
    pub fn new(boundary: f64, ell: f64, tau: f64) -> Result<Self, GeometryError> {
        if !(boundary.is_finite() && boundary > 0.0 && ell.is_finite() && ell > 0.0 && tau.is_finite()) {
            return Err(GeometryError::BadLength(vec![boundary, ell, tau]));
        }
        let x = [[(ell / 2.0).exp(), 0.0], [0.0, (-ell / 2.0).exp()]];
        let sh = (boundary / 4.0).cosh() / (ell / 2.0).sinh();
        let ch = (1.0 + sh * sh).sqrt();
        let y0 = [[ch, sh], [sh, ch]];
        let twist = [[(tau / 2.0).exp(), 0.0], [0.0, (-tau / 2.0).exp()]];
        let y = mul(&y0, &twist);
        Ok(FNTorus { boundary, ell, tau, x, y })
    }

    /// Traces `(tr X, tr Y, tr XY)`.
    pub fn traces(&self) -> (f64, f64, f64) {
        (trace(&self.x), trace(&self.y), trace(&mul(&self.x, &self.y)))
    }

    pub fn commutator_trace(&self) -> f64 {
        let c = mul(&mul(&self.x, &self.y), &mul(&inv(&self.x), &inv(&self.y)));
        trace(&c)
    }

    /// `tr^2 X + tr^2 Y + tr^2 XY - trX trY trXY - 2 - tr[X,Y]`.
    pub fn trace_identity_residual(&self) -> f64 {
        let (a, b, c) = self.traces();
        a * a + b * b + c * c - a * b * c - 2.0 - self.commutator_trace()
    }

    /// Boundary length recovered from the commutator.
    pub fn boundary_from_holonomy(&self) -> f64 {
        2.0 * (self.commutator_trace().abs() / 2.0).acosh()
    }

    /// Holonomy of the curve with slope `p/q` (`X` has slope 0/1, `Y` 1/0),
    /// as a product along its Christoffel word.
    pub fn word_matrix(&self, p: i64, q: i64) -> Mat {
        let yy = if p >= 0 { self.y } else { inv(&self.y) };
        let (a, b) = (p.unsigned_abs(), q.unsigned_abs());
        let n = a + b;
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        for i in 1..=n {
            if (i * a) / n > ((i - 1) * a) / n {
                m = mul(&m, &yy);
            } else {
                m = mul(&m, &self.x);
            }
        }
        m
    }
}

fn length_from_trace(t: f64) -> f64 {
    2.0 * (t.abs() / 2.0).acosh()
}

/// A simple closed geodesic: slope `p/q` in lowest terms, `q >= 0`, with
/// `1/0` for the curve `Y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurveLength {
    pub p: i64,
    pub q: i64,
    pub length: f64,
}

fn normalize(p: i64, q: i64) -> (i64, i64) {
    if q < 0 || (q == 0 && p < 0) {
        (-p, -q)
    } else {
        (p, q)
    }
}

/// Every simple closed geodesic of length at most `cutoff`, each unoriented
/// curve once, sorted by length then slope.
///
/// Traces follow the Farey tree: if `a`, `b` are neighbours with sum `a+b`
/// and difference `d`, then `tr(a+b) = tr(a) tr(b) - tr(d)`.
pub fn torus_spectrum(t: &FNTorus, cutoff: f64) -> Result<Vec<CurveLength>, GeometryError> {
    let (tx, ty, txy) = t.traces();
    if !(tx > 2.0 && ty > 2.0 && txy > 2.0) {
        return Err(GeometryError::Degenerate(format!("traces {tx}, {ty}, {txy}")));
    }
    let limit = 2.0 * (cutoff / 2.0).cosh();
    let mut out = Vec::new();
    for (p, q, tr) in [(0, 1, tx), (1, 0, ty)] {
        if tr <= limit {
            out.push(CurveLength { p, q, length: length_from_trace(tr) });
        }
    }
    let txy_inv = tx * ty - txy;
    // (a, b, difference) triples as ((p, q), trace)
    let mut stack = vec![(((0, 1), tx), ((1, 0), ty), txy_inv), (((0, 1), tx), ((-1, 0), ty), txy)];
    while let Some((a, b, td)) = stack.pop() {
        let c = ((a.0 .0 + b.0 .0, a.0 .1 + b.0 .1), a.1 * b.1 - td);
        if c.1 <= limit {
            let (p, q) = normalize(c.0 .0, c.0 .1);
            out.push(CurveLength { p, q, length: length_from_trace(c.1) });
        } else if c.1 >= a.1.max(b.1) {
            continue;
        }
        stack.push((a, c, b.1));
        stack.push((c, b, a.1));
    }
    sort_spectrum(&mut out);
    Ok(out)
}

fn sort_spectrum(v: &mut [CurveLength]) {
    v.sort_by(|a, b| a.length.total_cmp(&b.length).then((a.p, a.q).cmp(&(b.p, b.q))));
}

fn gcd(a: i64, b: i64) -> i64 {
    num_integer::gcd(a, b)
}

/// Independent enumeration by direct products along Christoffel words of
/// every primitive slope, growing `|p| + |q|` until several consecutive
/// shells contain nothing below the cutoff.
pub fn torus_spectrum_bruteforce(t: &FNTorus, cutoff: f64) -> Vec<CurveLength> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut empty_shells = 0;
    let mut size = 1i64;
    while empty_shells < 4 {
        let mut hit = false;
        for p in -size..=size {
            let q = size - p.abs();
            for (pp, qq) in [(p, q), (p, -q)] {
                if gcd(pp.abs(), qq.abs()) != 1 {
                    continue;
                }
                let (np, nq) = normalize(pp, qq);
                if !seen.insert((np, nq)) {
                    continue;
                }
                let len = length_from_trace(trace(&t.word_matrix(np, nq)));
                if len <= cutoff {
                    hit = true;
                    out.push(CurveLength { p: np, q: nq, length: len });
                }
            }
        }
        empty_shells = if hit { 0 } else { empty_shells + 1 };
        size += 1;
    }
    sort_spectrum(&mut out);
    out
}

/// Which kernel to sum in the torus identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TorusKernel {
    Mirzakhani,
    Kontsevich,
}

impl TorusKernel {
    pub fn eval(&self, boundary: f64, ell: f64) -> f64 {
        match self {
            TorusKernel::Mirzakhani => mirzakhani_c(boundary, ell, ell),
            TorusKernel::Kontsevich => kontsevich_c(boundary, ell, ell),
        }
    }
}

/// Spectrum with running partial sums of `C(L, l, l)`.
#[derive(Clone, Debug, Serialize)]
pub struct PartialSumRow {
    pub p: i64,
    pub q: i64,
    pub length: f64,
    pub partial_sum: f64,
}

pub fn mcshane_partial_sums(t: &FNTorus, cutoff: f64, kernel: TorusKernel) -> Result<Vec<PartialSumRow>, GeometryError> {
    let mut acc = 0.0;
    Ok(torus_spectrum(t, cutoff)?
        .into_iter()
        .map(|c| {
            acc += kernel.eval(t.boundary, c.length);
            PartialSumRow { p: c.p, q: c.q, length: c.length, partial_sum: acc }
        })
        .collect())
}

/// `sum over simple closed geodesics of length <= cutoff of C(L, l, l)`.
pub fn mcshane_sum(t: &FNTorus, cutoff: f64) -> Result<f64, GeometryError> {
    mcshane_sum_with(t, cutoff, TorusKernel::Mirzakhani)
}

pub fn mcshane_sum_with(t: &FNTorus, cutoff: f64, kernel: TorusKernel) -> Result<f64, GeometryError> {
    Ok(mcshane_partial_sums(t, cutoff, kernel)?.last().map_or(0.0, |r| r.partial_sum))
}

/// Counts of simple closed geodesics at each cutoff, the fitted constant
/// `N = max count/cutoff^2`, and the log-log growth exponent between the
/// first and last cutoff.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthFit {
    pub cutoffs: Vec<f64>,
    pub counts: Vec<usize>,
    pub constant: f64,
    pub exponent: f64,
}

pub fn count_growth(t: &FNTorus, cutoffs: &[f64]) -> Result<GrowthFit, GeometryError> {
    let top = cutoffs.iter().cloned().fold(0.0, f64::max);
    let spec = torus_spectrum(t, top)?;
    let counts: Vec<usize> = cutoffs.iter().map(|c| spec.iter().filter(|x| x.length <= *c).count()).collect();
    let constant = cutoffs.iter().zip(&counts).map(|(c, n)| *n as f64 / (c * c)).fold(0.0, f64::max);
    let (c0, c1) = (cutoffs[0], *cutoffs.last().unwrap());
    let (n0, n1) = (counts[0].max(1) as f64, *counts.last().unwrap() as f64);
    let exponent = (n1 / n0).ln() / (c1 / c0).ln();
    Ok(GrowthFit { cutoffs: cutoffs.to_vec(), counts, constant, exponent })
}
