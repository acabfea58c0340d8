//! Frobenius algebras, 2d TQFT amplitudes, uni-trivalent fatgraphs, the
//! Verlinde formula and the algebra-valued recursion for conformal blocks.
//!
//! Tensors are stored densely over label tuples, last index fastest. An
//! amplitude `T[l_1..l_n]` is the value on `e_{l_1} (x) ... (x) e_{l_n}`;
//! gluing two slots contracts them with the inverse pairing.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use itertools::Itertools;
use nalgebra::DMatrix;
use num_traits::{One, ToPrimitive, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use crate::coeffring::{parse_rational, rat, rat_int, CoeffElem, Coefficient, EvenPoly, FormalCoeff, Rational, Symbol};
use crate::kernels::KernelFamily;
use crate::stablegraphs::{self, contract_edges, Slot, StableGraph};
use crate::trengine::{is_stable, splittings, Engine, EngineError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TqftError {
    #[error("Frobenius axiom fails: {0}")]
    Axiom(String),
    #[error("invalid algebra data: {0}")]
    Data(String),
    #[error("no modular data attached to the algebra")]
    NoModularData,
    #[error("Verlinde value {value} is {residual:e} away from an integer")]
    NotIntegral { value: f64, residual: f64 },
    #[error("label {0} out of range")]
    Label(usize),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Dense tensor of rank `rank` over `dim` labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub dim: usize,
    pub rank: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Tensor<T> {
    pub fn filled(dim: usize, rank: usize, value: T) -> Self {
        Tensor { dim, rank, data: vec![value; dim.pow(rank as u32)] }
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> &T {
        &self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// All index tuples in storage order.
    pub fn indices(&self) -> impl Iterator<Item = Vec<usize>> {
        std::iter::repeat_n(0..self.dim, self.rank).multi_cartesian_product()
    }
}

/// `S`-matrix, conformal weights `r_l` and central charge `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModularData {
    pub s: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub central_charge: f64,
}

/// Commutative Frobenius algebra with a distinguished basis, a unit basis
/// element and an involution on labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FrobeniusAlgebra {
    pub labels: Vec<String>,
    pub dagger: Vec<usize>,
    pub unit: usize,
    eta: Vec<Vec<Rational>>,
    eta_inv: Vec<Vec<Rational>>,
    mu: Tensor<Rational>,
    pub modular: Option<ModularData>,
}

fn invert_rational(m: &[Vec<Rational>]) -> Option<Vec<Vec<Rational>>> {
    let n = m.len();
    let mut a: Vec<Vec<Rational>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|r| !a[*r][col].is_zero())?;
        a.swap(col, piv);
        let p = a[col][col].clone();
        for x in a[col].iter_mut() {
            *x /= &p;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in 0..2 * n {
                    let v = &a[col][c] * &f;
                    a[r][c] -= v;
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

impl FrobeniusAlgebra {
    /// Build from the pairing `eta` and the fully lowered product
    /// `mu[a][b][c] = eta(e_a e_b, e_c)`, checking the axioms exactly.
    pub fn new(
        labels: Vec<String>,
        dagger: Vec<usize>,
        eta: Vec<Vec<Rational>>,
        mu: Tensor<Rational>,
        modular: Option<ModularData>,
    ) -> Result<Self, TqftError> {
        let d = labels.len();
        if d == 0 || dagger.len() != d || eta.len() != d || eta.iter().any(|r| r.len() != d) || mu.dim != d || mu.rank != 3 {
            return Err(TqftError::Data("dimension mismatch".into()));
        }
        if dagger.iter().enumerate().any(|(i, j)| *j >= d || dagger[*j] != i) {
            return Err(TqftError::Data("dagger is not an involution".into()));
        }
        let eta_inv = invert_rational(&eta).ok_or_else(|| TqftError::Axiom("pairing is degenerate".into()))?;
        let unit = (0..d)
            .find(|u| (0..d).all(|a| (0..d).all(|b| *mu.get(&[*u, a, b]) == eta[a][b])))
            .ok_or_else(|| TqftError::Axiom("no basis element is a unit".into()))?;
        let alg = FrobeniusAlgebra { labels, dagger, unit, eta, eta_inv, mu, modular };
        alg.check_axioms()?;
        if let Some(m) = &alg.modular {
            alg.check_modular(m)?;
        }
        Ok(alg)
    }

    /// The ground field as a one-dimensional algebra.
    pub fn trivial() -> Self {
        let mu = Tensor::filled(1, 3, rat_int(1));
        FrobeniusAlgebra::new(vec!["1".into()], vec![0], vec![vec![rat_int(1)]], mu, None).expect("trivial algebra")
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn eta(&self, a: usize, b: usize) -> &Rational {
        &self.eta[a][b]
    }

    pub fn eta_inv(&self, a: usize, b: usize) -> &Rational {
        &self.eta_inv[a][b]
    }

    pub fn mu(&self, a: usize, b: usize, c: usize) -> &Rational {
        self.mu.get(&[a, b, c])
    }

    /// Nonzero entries of the inverse pairing.
    pub fn eta_inv_pairs(&self) -> Vec<(usize, usize, Rational)> {
        let d = self.dim();
        (0..d)
            .flat_map(|a| (0..d).map(move |b| (a, b)))
            .filter(|(a, b)| !self.eta_inv[*a][*b].is_zero())
            .map(|(a, b)| (a, b, self.eta_inv[a][b].clone()))
            .collect()
    }

    fn check_axioms(&self) -> Result<(), TqftError> {
        let d = self.dim();
        for a in 0..d {
            for b in 0..d {
                if self.eta[a][b] != self.eta[b][a] {
                    return Err(TqftError::Axiom("pairing is not symmetric".into()));
                }
                for c in 0..d {
                    let x = self.mu(a, b, c);
                    if x != self.mu(b, a, c) || x != self.mu(a, c, b) {
                        return Err(TqftError::Axiom(format!("product not commutative or not invariant at ({a},{b},{c})")));
                    }
                }
            }
        }
        let pairs = self.eta_inv_pairs();
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let mut left = Rational::zero();
                        let mut right = Rational::zero();
                        for (x, y, w) in &pairs {
                            left += self.mu(a, b, *x) * w * self.mu(*y, c, e);
                            right += self.mu(b, c, *x) * w * self.mu(a, *y, e);
                        }
                        if left != right {
                            return Err(TqftError::Axiom(format!("product not associative at ({a},{b},{c},{e})")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn check_modular(&self, m: &ModularData) -> Result<(), TqftError> {
        let d = self.dim();
        if m.s.len() != d || m.s.iter().any(|r| r.len() != d) || m.weights.len() != d {
            return Err(TqftError::Data("modular data has the wrong size".into()));
        }
        if s_inverse(m).is_none() {
            return Err(TqftError::Axiom("S-matrix is not invertible".into()));
        }
        for l in 0..d {
            if (m.weights[l] - m.weights[self.dagger[l]]).abs() > 1e-12 {
                return Err(TqftError::Axiom(format!("weight of label {l} differs from its dual")));
            }
        }
        Ok(())
    }

    /// `H_l = sqrt(2 (c/24 - r_l))` where positive.
    pub fn heights(&self) -> Result<Vec<Option<f64>>, TqftError> {
        let m = self.modular.as_ref().ok_or(TqftError::NoModularData)?;
        Ok(m.weights
            .iter()
            .map(|r| {
                let x = m.central_charge / 24.0 - r;
                (x > 0.0).then(|| (2.0 * x).sqrt())
            })
            .collect())
    }

    /// Read `{"labels", "dagger", "S", "weights", "c"}`; the fusion
    /// coefficients are derived from `S` by the Verlinde formula and must
    /// come out integral.
    pub fn from_modular_json(v: &Value) -> Result<Self, TqftError> {
        let bad = |what: &str| TqftError::Data(format!("modular data: bad or missing {what}"));
        let labels: Vec<String> = v["labels"]
            .as_array()
            .ok_or_else(|| bad("labels"))?
            .iter()
            .map(|x| x.as_str().map(str::to_string).unwrap_or_else(|| x.to_string()))
            .collect();
        let dagger = v["dagger"]
            .as_array()
            .ok_or_else(|| bad("dagger"))?
            .iter()
            .map(|x| x.as_u64().map(|i| i as usize).ok_or_else(|| bad("dagger")))
            .collect::<Result<Vec<_>, _>>()?;
        let s = v["S"]
            .as_array()
            .ok_or_else(|| bad("S"))?
            .iter()
            .map(|row| row.as_array().ok_or_else(|| bad("S"))?.iter().map(|x| number(x).ok_or_else(|| bad("S"))).collect())
            .collect::<Result<Vec<Vec<f64>>, _>>()?;
        let weights = v["weights"]
            .as_array()
            .ok_or_else(|| bad("weights"))?
            .iter()
            .map(|x| number(x).ok_or_else(|| bad("weights")))
            .collect::<Result<Vec<_>, _>>()?;
        let c = number(&v["c"]).ok_or_else(|| bad("c"))?;
        let m = ModularData { s, weights, central_charge: c };
        let d = labels.len();
        if m.s.len() != d || dagger.len() != d {
            return Err(TqftError::Data("modular data has the wrong size".into()));
        }
        let vacuum = 0;
        let sinv = s_inverse(&m).ok_or_else(|| TqftError::Axiom("S-matrix is not invertible".into()))?;
        let mut mu = Tensor::filled(d, 3, Rational::zero());
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let x: f64 = (0..d).map(|l| m.s[a][l] * m.s[b][l] * sinv[(l, dagger[c])] / m.s[vacuum][l]).sum();
                    let r = x.round();
                    if (x - r).abs() > 1e-8 {
                        return Err(TqftError::NotIntegral { value: x, residual: (x - r).abs() });
                    }
                    mu.set(&[a, b, c], rat_int(r as i64));
                }
            }
        }
        let eta = (0..d).map(|a| (0..d).map(|b| if dagger[a] == b { rat_int(1) } else { rat_int(0) }).collect()).collect();
        FrobeniusAlgebra::new(labels, dagger, eta, mu, Some(m))
    }

    pub fn to_modular_json(&self) -> Result<Value, TqftError> {
        let m = self.modular.as_ref().ok_or(TqftError::NoModularData)?;
        Ok(json!({"labels": self.labels, "dagger": self.dagger, "S": m.s, "weights": m.weights, "c": m.central_charge}))
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => parse_rational(s).ok().and_then(|q| q.to_f64()),
        _ => None,
    }
}

fn s_inverse(m: &ModularData) -> Option<DMatrix<f64>> {
    let d = m.s.len();
    DMatrix::from_fn(d, d, |i, j| m.s[i][j]).try_inverse()
}

/// Truncated Clebsch-Gordan rule of `su(2)` at level `k`.
pub fn su2_fusion(k: usize, a: usize, b: usize, c: usize) -> bool {
    let lo = a.abs_diff(b);
    c >= lo && c <= (a + b).min(2 * k - a - b) && (a + b + c) % 2 == 0 && a + b <= 2 * k
}

/// `su(2)` at level `k`: labels `0..=k`, fusion by the truncated
/// Clebsch-Gordan rule, and the standard modular data.
pub fn su2_level(k: usize) -> Result<FrobeniusAlgebra, TqftError> {
    if k == 0 {
        return Err(TqftError::Data("level must be positive".into()));
    }
    let d = k + 1;
    let mut mu = Tensor::filled(d, 3, Rational::zero());
    for idx in mu.indices().collect::<Vec<_>>() {
        if su2_fusion(k, idx[0], idx[1], idx[2]) {
            mu.set(&idx, rat_int(1));
        }
    }
    let eta = (0..d).map(|a| (0..d).map(|b| if a == b { rat_int(1) } else { rat_int(0) }).collect()).collect();
    let kk = (k + 2) as f64;
    let s = (0..d)
        .map(|a| (0..d).map(|b| (2.0 / kk).sqrt() * (std::f64::consts::PI * ((a + 1) * (b + 1)) as f64 / kk).sin()).collect())
        .collect();
    let weights = (0..d).map(|l| (l * (l + 2)) as f64 / (4.0 * kk)).collect();
    let modular = ModularData { s, weights, central_charge: 3.0 * k as f64 / kk };
    FrobeniusAlgebra::new((0..d).map(|l| l.to_string()).collect(), (0..d).collect(), eta, mu, Some(modular))
}

const SU2_DATA: [&str; 4] = [
    include_str!("../data/su2_k1.json"),
    include_str!("../data/su2_k2.json"),
    include_str!("../data/su2_k3.json"),
    include_str!("../data/su2_k4.json"),
];

/// Bundled modular data for `su(2)` at levels 1 to 4.
pub fn bundled_su2(k: usize) -> Result<FrobeniusAlgebra, TqftError> {
    let text = SU2_DATA.get(k.wrapping_sub(1)).ok_or_else(|| TqftError::Data(format!("no bundled data for level {k}")))?;
    let v: Value = serde_json::from_str(text).map_err(|e| TqftError::Data(e.to_string()))?;
    FrobeniusAlgebra::from_modular_json(&v)
}

// ---------------------------------------------------------------------------
// Contractions

/// A trivalent network: each vertex lists its three slots.
fn contract_network(alg: &FrobeniusAlgebra, vertices: &[[Slot; 3]], num_edges: usize, n: usize) -> Tensor<Rational> {
    let d = alg.dim();
    let pairs = alg.eta_inv_pairs();
    let mut out = Tensor::filled(d, n, Rational::zero());
    // half-edge labels for each edge, in order of first occurrence
    let mut first_seen = vec![None; num_edges];
    let mut occ: Vec<Vec<(usize, usize)>> = vec![Vec::new(); vertices.len()];
    for (v, slots) in vertices.iter().enumerate() {
        for s in slots {
            if let Slot::Edge(e) = s {
                let end = if first_seen[*e].is_none() {
                    first_seen[*e] = Some(v);
                    0
                } else {
                    1
                };
                occ[v].push((*e, end));
            }
        }
    }
    for outer in out.indices().collect::<Vec<_>>() {
        let mut total = Rational::zero();
        for choice in std::iter::repeat_n(0..pairs.len(), num_edges).multi_cartesian_product() {
            let mut w = Rational::one();
            for e in 0..num_edges {
                w *= &pairs[choice[e]].2;
            }
            for (v, slots) in vertices.iter().enumerate() {
                let mut k = 0;
                let lab: Vec<usize> = slots
                    .iter()
                    .map(|s| match s {
                        Slot::Leaf(i) => outer[*i],
                        Slot::Edge(_) => {
                            let (e, end) = occ[v][k];
                            k += 1;
                            if end == 0 {
                                pairs[choice[e]].0
                            } else {
                                pairs[choice[e]].1
                            }
                        }
                    })
                    .collect();
                w *= alg.mu(lab[0], lab[1], lab[2]);
                if w.is_zero() {
                    break;
                }
            }
            total += w;
        }
        out.set(&outer, total);
    }
    out
}

/// Pants decompositions of type (g,n), as stable graphs whose vertices are
/// all pairs of pants.
pub fn pants_decompositions(g: u32, n: usize) -> Result<Vec<StableGraph>, TqftError> {
    Ok(stablegraphs::enumerate(g, n)?
        .into_iter()
        .filter(|sg| (0..sg.num_vertices()).all(|v| sg.genus[v] == 0 && sg.valence(v) == 3))
        .collect())
}

fn network_of(sg: &StableGraph) -> Vec<[Slot; 3]> {
    (0..sg.num_vertices()).map(|v| sg.slots(v).try_into().expect("trivalent vertex")).collect()
}

/// `F_{g,n}` contracted along the given pants decomposition.
pub fn amplitude_along(alg: &FrobeniusAlgebra, sg: &StableGraph) -> Tensor<Rational> {
    contract_network(alg, &network_of(sg), sg.num_edges(), sg.num_leaves())
}

/// TQFT amplitude `F_{g,n}`: `2g-2+n` products contracted along a pants
/// decomposition.
pub fn tqft_amplitude(alg: &FrobeniusAlgebra, g: u32, n: usize) -> Result<Tensor<Rational>, TqftError> {
    let decs = pants_decompositions(g, n)?;
    Ok(amplitude_along(alg, &decs[0]))
}

/// Amplitudes along every pants decomposition; all should agree.
pub fn amplitudes_all_decompositions(alg: &FrobeniusAlgebra, g: u32, n: usize) -> Result<Vec<Tensor<Rational>>, TqftError> {
    Ok(pants_decompositions(g, n)?.iter().map(|sg| amplitude_along(alg, sg)).collect())
}

/// Verlinde value with its distance to the nearest integer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerlindeRank {
    pub rank: i64,
    pub value: f64,
    pub residual: f64,
}

/// `sum_m prod_i Sinv[l_i][m] / Sinv[0][m]^(2g-2+n)`.
pub fn verlinde_rank(alg: &FrobeniusAlgebra, g: u32, labels: &[usize]) -> Result<VerlindeRank, TqftError> {
    let n = labels.len();
    if !is_stable(g, n) {
        return Err(EngineError::Unstable(g, n).into());
    }
    if let Some(l) = labels.iter().find(|l| **l >= alg.dim()) {
        return Err(TqftError::Label(*l));
    }
    let m = alg.modular.as_ref().ok_or(TqftError::NoModularData)?;
    let sinv = s_inverse(m).ok_or_else(|| TqftError::Axiom("S-matrix is not invertible".into()))?;
    let chi = 2 * g as i32 - 2 + n as i32;
    let value: f64 = (0..alg.dim())
        .map(|mu| labels.iter().map(|l| sinv[(*l, mu)]).product::<f64>() / sinv[(alg.unit, mu)].powi(chi))
        .sum();
    let rank = value.round();
    let residual = (value - rank).abs();
    if residual > 1e-8 || rank < 0.0 {
        return Err(TqftError::NotIntegral { value, residual });
    }
    Ok(VerlindeRank { rank: rank as i64, value, residual })
}

// ---------------------------------------------------------------------------
// Fatgraphs

/// Kind of an excised pair of pants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PantsType {
    /// All three boundaries are boundaries of the current surface.
    A,
    /// Exactly two are; the non-root one is recorded.
    B(BoundaryRef),
    /// Only the root boundary is.
    C,
    /// Two boundaries are glued to each other: a one-holed torus.
    D,
}

/// A boundary of the current surface: an original leaf, or the curve
/// cut when excising an earlier pair of pants (by position in the order).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryRef {
    Leaf(usize),
    Cut(usize),
}

impl PantsType {
    pub fn name(&self) -> String {
        match self {
            PantsType::A => "A".into(),
            PantsType::B(BoundaryRef::Leaf(i)) => format!("B[leaf {i}]"),
            PantsType::B(BoundaryRef::Cut(j)) => format!("B[cut {j}]"),
            PantsType::C => "C".into(),
            PantsType::D => "D".into(),
        }
    }
}

/// Connected uni-trivalent fatgraph with first Betti number `g`, `n`
/// univalent vertices and a root leaf; the other leaves are unlabelled.
///
/// Darts `3v, 3v+1, 3v+2` sit at trivalent vertex `v` in cyclic order;
/// darts `3a..3a+n` are the leaves. `edges` is the dart involution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fatgraph {
    pub trivalent: usize,
    pub leaves: usize,
    pub edges: Vec<usize>,
    pub root: usize,
    /// Trivalent vertices in excision order.
    pub pants_order: Vec<usize>,
    /// Edges (as vertex pairs) of the spanning tree of trivalent vertices.
    pub spanning_tree: Vec<(usize, usize)>,
    /// Type of the `i`-th excised pair of pants.
    pub types: Vec<PantsType>,
    /// Leaf darts in output order; the root comes first.
    pub leaf_order: Vec<usize>,
}

fn rotate(d: usize, trivalent: usize) -> usize {
    if d >= 3 * trivalent {
        d
    } else {
        3 * (d / 3) + (d + 1) % 3
    }
}

fn is_connected_map(edges: &[usize], trivalent: usize) -> bool {
    let total = edges.len();
    let mut seen = vec![false; total];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(x) = stack.pop() {
        for y in [edges[x], rotate(x, trivalent)] {
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Traversal code from the root: darts numbered in order of discovery,
/// recording the involution and rotation in the new numbering.
fn canonical_code(edges: &[usize], trivalent: usize, root: usize) -> (Vec<usize>, Vec<usize>) {
    let total = edges.len();
    let mut label = vec![usize::MAX; total];
    let mut order = vec![root];
    label[root] = 0;
    let mut i = 0;
    while i < order.len() {
        let x = order[i];
        for y in [edges[x], rotate(x, trivalent)] {
            if label[y] == usize::MAX {
                label[y] = order.len();
                order.push(y);
            }
        }
        i += 1;
    }
    let code = order.iter().flat_map(|x| [label[edges[*x]], label[rotate(*x, trivalent)]]).collect();
    (code, order)
}

fn perfect_matchings(items: &[usize], out: &mut Vec<Vec<(usize, usize)>>, cur: &mut Vec<(usize, usize)>) {
    if items.is_empty() {
        out.push(cur.clone());
        return;
    }
    let first = items[0];
    for k in 1..items.len() {
        let rest: Vec<usize> = items[1..].iter().enumerate().filter(|(i, _)| *i + 1 != k).map(|(_, x)| *x).collect();
        cur.push((first, items[k]));
        perfect_matchings(&rest, out, cur);
        cur.pop();
    }
}

/// Fatgraph enumeration with two independent counts.
#[derive(Clone, Debug)]
pub struct FatgraphCount {
    pub graphs: Vec<Fatgraph>,
    /// Labelled (involution, root) pairs divided by `3^a a! n!`.
    pub orbit_count: Rational,
}

/// All rooted uni-trivalent fatgraphs of type (g,n) up to isomorphism.
pub fn fatgraph_enumerate(g: u32, n: usize) -> Result<FatgraphCount, TqftError> {
    if !is_stable(g, n) {
        return Err(EngineError::Unstable(g, n).into());
    }
    let a = 2 * g as usize + n - 2;
    let total = 3 * a + n;
    let darts: Vec<usize> = (0..total).collect();
    let mut matchings = Vec::new();
    perfect_matchings(&darts, &mut matchings, &mut Vec::new());
    let mut codes: BTreeMap<Vec<usize>, (Vec<usize>, usize)> = BTreeMap::new();
    let mut labelled = 0u64;
    for m in matchings {
        let mut edges = vec![0; total];
        for (x, y) in m {
            edges[x] = y;
            edges[y] = x;
        }
        if !is_connected_map(&edges, a) {
            continue;
        }
        for root in 3 * a..total {
            labelled += 1;
            let (code, _) = canonical_code(&edges, a, root);
            codes.entry(code).or_insert_with(|| (edges.clone(), root));
        }
    }
    let denom = 3u64.pow(a as u32) * (1..=a as u64).product::<u64>() * (1..=n as u64).product::<u64>();
    let graphs = codes.into_values().map(|(edges, root)| build_fatgraph(&canonical_form(&edges, a, root), a, n)).collect();
    Ok(FatgraphCount { graphs, orbit_count: rat(labelled as i64, denom as i64) })
}

/// Relabel darts so vertices are numbered by discovery from the root and
/// each vertex's darts start at its first discovered dart.
fn canonical_form(edges: &[usize], a: usize, root: usize) -> (Vec<usize>, usize) {
    let (_, order) = canonical_code(edges, a, root);
    let mut vmap = vec![usize::MAX; a];
    let mut start = vec![0; a];
    let mut next_v = 0;
    for &x in &order {
        if x < 3 * a && vmap[x / 3] == usize::MAX {
            vmap[x / 3] = next_v;
            start[x / 3] = x % 3;
            next_v += 1;
        }
    }
    let mut leaf_map = vec![usize::MAX; edges.len()];
    let mut next_leaf = 3 * a;
    for &x in &order {
        if x >= 3 * a {
            leaf_map[x] = next_leaf;
            next_leaf += 1;
        }
    }
    let relabel = |x: usize| -> usize {
        if x >= 3 * a {
            leaf_map[x]
        } else {
            3 * vmap[x / 3] + (x % 3 + 3 - start[x / 3]) % 3
        }
    };
    let mut out = vec![0; edges.len()];
    for x in 0..edges.len() {
        out[relabel(x)] = relabel(edges[x]);
    }
    (out, relabel(root))
}

fn build_fatgraph(form: &(Vec<usize>, usize), a: usize, n: usize) -> Fatgraph {
    let (edges, root) = form.clone();
    let is_leaf = |d: usize| d >= 3 * a;
    let mut excised = vec![false; a];
    let mut pants_index = vec![usize::MAX; a];
    let mut pants_order = Vec::new();
    let mut types = Vec::new();
    let mut tree = Vec::new();
    let mut leaf_order = vec![root];
    let mut stack = vec![edges[root]];
    while let Some(r) = stack.pop() {
        let v = r / 3;
        let d1 = rotate(r, a);
        let d2 = rotate(d1, a);
        pants_index[v] = pants_order.len();
        pants_order.push(v);
        if edges[d1] == d2 {
            excised[v] = true;
            types.push(PantsType::D);
            continue;
        }
        let boundary = |d: usize| {
            let p = edges[d];
            if is_leaf(p) {
                Some(BoundaryRef::Leaf(usize::MAX))
            } else if excised[p / 3] {
                Some(BoundaryRef::Cut(pants_index[p / 3]))
            } else {
                None
            }
        };
        let (b1, b2) = (boundary(d1), boundary(d2));
        excised[v] = true;
        let mut name_leaf = |d: usize, b: BoundaryRef| match b {
            BoundaryRef::Leaf(_) => {
                leaf_order.push(edges[d]);
                BoundaryRef::Leaf(leaf_order.len() - 1)
            }
            cut => cut,
        };
        match (b1, b2) {
            (Some(x), Some(y)) => {
                name_leaf(d1, x);
                name_leaf(d2, y);
                types.push(PantsType::A);
            }
            (Some(x), None) => {
                types.push(PantsType::B(name_leaf(d1, x)));
                tree.push((v, edges[d2] / 3));
                stack.push(edges[d2]);
            }
            (None, Some(y)) => {
                types.push(PantsType::B(name_leaf(d2, y)));
                tree.push((v, edges[d1] / 3));
                stack.push(edges[d1]);
            }
            (None, None) => {
                types.push(PantsType::C);
                let (p1, p2) = (edges[d1], edges[d2]);
                tree.push((v, p1 / 3));
                if reachable(&edges, a, &excised, p1, p2) {
                    stack.push(p1);
                } else {
                    tree.push((v, p2 / 3));
                    stack.push(p2);
                    stack.push(p1);
                }
            }
        }
    }
    Fatgraph { trivalent: a, leaves: n, edges, root, pants_order, spanning_tree: tree, types, leaf_order }
}

/// Whether dart `to` can be reached from dart `from` avoiding excised
/// vertices.
fn reachable(edges: &[usize], a: usize, excised: &[bool], from: usize, to: usize) -> bool {
    let alive = |d: usize| d >= 3 * a || !excised[d / 3];
    let mut seen = BTreeSet::from([from]);
    let mut stack = vec![from];
    while let Some(x) = stack.pop() {
        if x == to {
            return true;
        }
        for y in [edges[x], rotate(x, a)] {
            if alive(y) && seen.insert(y) {
                stack.push(y);
            }
        }
    }
    false
}

impl Fatgraph {
    /// Number of pants of type `C`.
    pub fn c_count(&self) -> usize {
        self.types.iter().filter(|t| **t == PantsType::C).count()
    }

    /// Contraction of the algebra along the graph, leaves in `leaf_order`.
    pub fn contract(&self, alg: &FrobeniusAlgebra) -> Tensor<Rational> {
        let a = self.trivalent;
        let leaf_pos: HashMap<usize, usize> = self.leaf_order.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let mut edge_id = HashMap::new();
        for x in 0..3 * a {
            let y = self.edges[x];
            if y < 3 * a {
                let key = (x.min(y), x.max(y));
                let next = edge_id.len();
                edge_id.entry(key).or_insert(next);
            }
        }
        let vertices: Vec<[Slot; 3]> = (0..a)
            .map(|v| {
                [0, 1, 2].map(|k| {
                    let x = 3 * v + k;
                    let y = self.edges[x];
                    if y >= 3 * a {
                        Slot::Leaf(leaf_pos[&y])
                    } else {
                        Slot::Edge(edge_id[&(x.min(y), x.max(y))])
                    }
                })
            })
            .collect();
        contract_network(alg, &vertices, edge_id.len(), self.leaves)
    }

    pub fn to_json(&self) -> Value {
        let sigma0: Vec<usize> = (0..self.edges.len()).map(|d| rotate(d, self.trivalent)).collect();
        json!({
            "trivalent": self.trivalent,
            "leaves": self.leaves,
            "sigma0": sigma0,
            "sigma1": self.edges,
            "root": self.root,
            "pants_order": self.pants_order,
            "spanning_tree": self.spanning_tree,
            "types": self.types.iter().map(PantsType::name).collect::<Vec<_>>(),
        })
    }
}

/// `sum_G theta^G` over all fatgraphs of type (g,n).
pub fn strict_gr_sum(alg: &FrobeniusAlgebra, g: u32, n: usize) -> Result<Tensor<Rational>, TqftError> {
    let count = fatgraph_enumerate(g, n)?;
    let mut out = Tensor::filled(alg.dim(), n, Rational::zero());
    for fg in &count.graphs {
        let t = fg.contract(alg);
        for (x, y) in out.data.iter_mut().zip(t.data) {
            *x += y;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Algebra-valued volumes

/// Polynomial-valued tensor over the labels of an algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraVolume {
    pub tensor: Tensor<EvenPoly<FormalCoeff>>,
}

impl AlgebraVolume {
    pub fn get(&self, labels: &[usize]) -> &EvenPoly<FormalCoeff> {
        self.tensor.get(labels)
    }

    pub fn to_json(&self, alg: &FrobeniusAlgebra) -> Value {
        let rows: Vec<Value> = self
            .tensor
            .indices()
            .filter(|idx| !self.tensor.get(idx).is_zero())
            .map(|idx| json!({"labels": idx.iter().map(|i| alg.labels[*i].clone()).collect::<Vec<_>>(), "volume": self.tensor.get(&idx).to_json()}))
            .collect();
        json!({"n": self.tensor.rank, "entries": rows})
    }
}

/// Recursion with kernels `B = s B^M mu`, `C = s^2 C^M mu`, pants `mu` and
/// torus `s rk_{1,1} VD^M`, where `s` is a formal scalar.
pub struct AlgebraEngine<'a> {
    alg: &'a FrobeniusAlgebra,
    engine: Engine<FormalCoeff>,
    memo: BTreeMap<(u32, usize), AlgebraVolume>,
}

fn s_power(k: u32) -> FormalCoeff {
    FormalCoeff::symbol_pow(Symbol::S, k)
}

impl<'a> AlgebraEngine<'a> {
    pub fn new(alg: &'a FrobeniusAlgebra) -> Self {
        AlgebraEngine { alg, engine: Engine::for_family(&KernelFamily::Mirzakhani), memo: BTreeMap::new() }
    }

    pub fn volume(&mut self, g: u32, n: usize) -> Result<AlgebraVolume, TqftError> {
        if !is_stable(g, n) {
            return Err(EngineError::Unstable(g, n).into());
        }
        if let Some(v) = self.memo.get(&(g, n)) {
            return Ok(v.clone());
        }
        let v = self.compute(g, n)?;
        self.memo.insert((g, n), v.clone());
        Ok(v)
    }

    fn compute(&mut self, g: u32, n: usize) -> Result<AlgebraVolume, TqftError> {
        let alg = self.alg;
        let d = alg.dim();
        let pairs = alg.eta_inv_pairs();
        let mut tensor = Tensor::filled(d, n, EvenPoly::new(n));
        if (g, n) == (0, 3) {
            for idx in tensor.indices().collect::<Vec<_>>() {
                tensor.set(&idx, EvenPoly::constant(3, FormalCoeff::from_rational(alg.mu(idx[0], idx[1], idx[2]).clone())));
            }
            return Ok(AlgebraVolume { tensor });
        }
        if (g, n) == (1, 1) {
            let vd = self.engine.volume(1, 1)?;
            for l in 0..d {
                let mut rk = Rational::zero();
                for (a, b, w) in &pairs {
                    rk += alg.mu(l, *a, *b) * w;
                }
                tensor.set(&[l], vd.scale(&s_power(1)).scale_rational(&rk));
            }
            return Ok(AlgebraVolume { tensor });
        }
        let prev_b = if is_stable(g, n - 1) { Some(self.volume(g, n - 1)?) } else { None };
        let prev_c = if g >= 1 && is_stable(g - 1, n + 1) { Some(self.volume(g - 1, n + 1)?) } else { None };
        let others: Vec<usize> = (1..n).collect();
        let mut splits = Vec::new();
        for h in 0..=g {
            for (j1, j2) in splittings(&others) {
                let (n1, n2) = (1 + j1.len(), 1 + j2.len());
                if is_stable(h, n1) && is_stable(g - h, n2) {
                    let v1 = self.volume(h, n1)?;
                    let v2 = self.volume(g - h, n2)?;
                    splits.push((j1, v1, j2, v2));
                }
            }
        }
        let s1 = s_power(1);
        let s2_half = s_power(2).scale(&rat(1, 2));
        for idx in tensor.indices().collect::<Vec<_>>() {
            let mut out = EvenPoly::new(n);
            if let Some(prev) = &prev_b {
                for m in 1..n {
                    let mut combined = EvenPoly::new(n - 1);
                    for (a, b, w) in &pairs {
                        let c = alg.mu(idx[0], idx[m], *a) * w;
                        if c.is_zero() {
                            continue;
                        }
                        let mut key = vec![*b];
                        key.extend((1..n).filter(|i| *i != m).map(|i| idx[i]));
                        combined.add_assign_ref(&prev.get(&key).scale_rational(&c));
                    }
                    self.engine.glue_b(&combined.scale(&s1), m, &mut out)?;
                }
            }
            if let Some(prev) = &prev_c {
                let mut combined = EvenPoly::new(n + 1);
                for (a1, b1, w1) in &pairs {
                    for (a2, b2, w2) in &pairs {
                        let c = alg.mu(idx[0], *a1, *a2) * w1 * w2;
                        if c.is_zero() {
                            continue;
                        }
                        let mut key = vec![*b1, *b2];
                        key.extend_from_slice(&idx[1..]);
                        combined.add_assign_ref(&prev.get(&key).scale_rational(&c));
                    }
                }
                self.engine.glue_c(&combined.scale(&s2_half), &mut out)?;
            }
            for (j1, v1, j2, v2) in &splits {
                for (a1, b1, w1) in &pairs {
                    for (a2, b2, w2) in &pairs {
                        let c = alg.mu(idx[0], *a1, *a2) * w1 * w2;
                        if c.is_zero() {
                            continue;
                        }
                        let mut k1 = vec![*b1];
                        k1.extend(j1.iter().map(|i| idx[*i]));
                        let mut k2 = vec![*b2];
                        k2.extend(j2.iter().map(|i| idx[*i]));
                        let p1 = v1.get(&k1).scale(&s2_half).scale_rational(&c);
                        self.engine.glue_c_split(&p1, j1, v2.get(&k2), j2, &mut out)?;
                    }
                }
            }
            tensor.set(&idx, out);
        }
        Ok(AlgebraVolume { tensor })
    }
}

pub fn algebra_valued_volume(alg: &FrobeniusAlgebra, g: u32, n: usize) -> Result<AlgebraVolume, TqftError> {
    AlgebraEngine::new(alg).volume(g, n)
}

/// Residual of `V^Z[l] = s^(3g-3+n) F_{g,n}[l] V^M` for every label tuple;
/// empty when the factorization holds exactly.
pub fn rank_factorization_residuals(alg: &FrobeniusAlgebra, g: u32, n: usize) -> Result<Vec<(Vec<usize>, EvenPoly<FormalCoeff>)>, TqftError> {
    let vz = algebra_valued_volume(alg, g, n)?;
    let f = tqft_amplitude(alg, g, n)?;
    let vm = EvenPoly::<FormalCoeff>::from_elem_poly(&*Engine::<CoeffElem>::for_family(&KernelFamily::Mirzakhani).volume(g, n)?);
    let sp = s_power(3 * g + n as u32 - 3);
    let mut out = Vec::new();
    for idx in vz.tensor.indices() {
        let expect = vm.scale(&sp).scale_rational(f.get(&idx));
        let r = vz.get(&idx).checked_sub(&expect).expect("same variable count");
        if !r.is_zero() {
            out.push((idx, r));
        }
    }
    Ok(out)
}

/// Algebra-valued volume twisted by `f(l) = -sum_l Theta(H_l - l) e_l (x) e_{l*}`,
/// as a stable-graph sum. `H_l` is kept as the formal symbol `H{l}`; the
/// moments are `m_{2d+1} = H^(2d+2)/(2d+2)`.
pub fn conformal_block_twist(alg: &FrobeniusAlgebra, g: u32, n: usize) -> Result<AlgebraVolume, TqftError> {
    let d = alg.dim();
    let mut eng = AlgebraEngine::new(alg);
    let mut tensor = Tensor::filled(d, n, EvenPoly::new(n));
    for sg in stablegraphs::enumerate(g, n)? {
        let slots: Vec<Vec<Slot>> = (0..sg.num_vertices()).map(|v| sg.slots(v)).collect();
        let mut vols = Vec::new();
        for v in 0..sg.num_vertices() {
            vols.push(eng.volume(sg.genus[v], slots[v].len())?);
        }
        let weight = rat(1, sg.aut() as i64);
        let ne = sg.num_edges();
        for outer in tensor.indices().collect::<Vec<_>>() {
            let mut acc = EvenPoly::new(n);
            for edge_labels in std::iter::repeat_n(0..d, ne).multi_cartesian_product() {
                let vertex = |v: usize, _h: u32, _k: usize| -> Result<EvenPoly<FormalCoeff>, EngineError> {
                    let mut seen = vec![false; ne];
                    let labels: Vec<usize> = slots[v]
                        .iter()
                        .map(|s| match s {
                            Slot::Leaf(i) => outer[*i],
                            Slot::Edge(e) => {
                                let first_end = sg.edges[*e].0 == v && !seen[*e];
                                seen[*e] = true;
                                if first_end {
                                    edge_labels[*e]
                                } else {
                                    alg.dagger[edge_labels[*e]]
                                }
                            }
                        })
                        .collect();
                    Ok(vols[v].get(&labels).clone())
                };
                let moment = |e: usize, s: u32| -> Result<FormalCoeff, EngineError> {
                    Ok(FormalCoeff::symbol_pow(Symbol::Height(edge_labels[e] as u32), 2 * s + 2).scale(&rat(-1, 2 * s as i64 + 2)))
                };
                acc.add_assign_ref(&contract_edges(&sg, n, &vertex, moment)?);
            }
            let entry = tensor.get(&outer).checked_add(&acc.scale_rational(&weight)).expect("same variable count");
            tensor.set(&outer, entry);
        }
    }
    Ok(AlgebraVolume { tensor })
}

/// Numerical value of a formal coefficient polynomial at given heights,
/// `s` and `pi^2`.
pub fn eval_heights(c: &FormalCoeff, heights: &[f64], s: f64) -> f64 {
    c.eval(std::f64::consts::PI.powi(2), &|sym| match sym {
        Symbol::Height(l) => heights[l as usize],
        Symbol::S => s,
        Symbol::Moment { .. } => f64::NAN,
    })
}
