//! Topological recursion on moment transforms, the quantum Airy structure
//! view of the same data, and export of volumes as Laplace-transformed
//! series.
//!
//! The recursion for `V_{g,n}(L_1, ..., L_n)` is
//!
//! ```text
//! V_{g,n} = sum_{m=2..n} Bhat[V_{g,n-1}(l, L_{not 1,m})](L_1, L_m)
//!         + 1/2 Chat[V_{g-1,n+1}(l, l', L_{2..n}) + sum' V_{h,1+|J|}(l, L_J) V_{g-h,1+|J'|}(l', L_J')](L_1)
//! ```
//!
//! where the primed sum runs over ordered splittings without unstable
//! pieces. Transforms act monomial by monomial.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use serde_json::{json, Value};
use thiserror::Error;

use crate::coeffring::{rat, rat_int, CoeffElem, CoeffError, Coefficient, EvenPoly, FormalCoeff, Rational};
use crate::kernels::{InitialData, KernelError, KernelFamily, MomentSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("unstable topology (g,n) = ({0},{1})")]
    Unstable(u32, usize),
    #[error("index {index} exceeds the tensor cap {cap}")]
    CapExceeded { index: u32, cap: u32 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

pub fn is_stable(g: u32, n: usize) -> bool {
    2 * g as i64 - 2 + n as i64 > 0 && n > 0
}

fn check_stable(g: u32, n: usize) -> Result<(), EngineError> {
    if is_stable(g, n) {
        Ok(())
    } else {
        Err(EngineError::Unstable(g, n))
    }
}

/// All subsets of `items`, as (subset, complement) pairs.
pub fn splittings(items: &[usize]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::with_capacity(1 << items.len());
    for mask in 0u32..(1 << items.len()) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, x) in items.iter().enumerate() {
            if mask & (1 << i) != 0 {
                a.push(*x);
            } else {
                b.push(*x);
            }
        }
        out.push((a, b));
    }
    out
}

/// Memoizing recursion engine for one set of initial data.
pub struct Engine<C: Coefficient = CoeffElem> {
    data: Arc<dyn InitialData<C>>,
    b_cache: RwLock<HashMap<u32, Arc<EvenPoly<C>>>>,
    c_cache: RwLock<HashMap<(u32, u32), Arc<EvenPoly<C>>>>,
    table: RwLock<HashMap<(u32, usize), Arc<EvenPoly<C>>>>,
}

impl<C: Coefficient> Engine<C> {
    pub fn new(data: Arc<dyn InitialData<C>>) -> Self {
        Engine {
            data,
            b_cache: RwLock::new(HashMap::new()),
            c_cache: RwLock::new(HashMap::new()),
            table: RwLock::new(HashMap::new()),
        }
    }

    pub fn for_family(fam: &KernelFamily) -> Self {
        Self::new(Arc::new(fam.clone()))
    }

    pub fn id(&self) -> String {
        self.data.id()
    }

    pub fn data(&self) -> &Arc<dyn InitialData<C>> {
        &self.data
    }

    pub fn b_moment(&self, k: u32) -> Result<Arc<EvenPoly<C>>, EngineError> {
        if let Some(p) = self.b_cache.read().get(&k) {
            return Ok(p.clone());
        }
        let p = Arc::new(self.data.b_moment(k)?);
        Ok(self.b_cache.write().entry(k).or_insert(p).clone())
    }

    pub fn c_moment(&self, j: u32, k: u32) -> Result<Arc<EvenPoly<C>>, EngineError> {
        if let Some(p) = self.c_cache.read().get(&(j, k)) {
            return Ok(p.clone());
        }
        let p = Arc::new(self.data.c_moment(j, k)?);
        Ok(self.c_cache.write().entry((j, k)).or_insert(p).clone())
    }

    /// `V_{g,n}`, computed once and then served from the memo table.
    pub fn volume(&self, g: u32, n: usize) -> Result<Arc<EvenPoly<C>>, EngineError> {
        check_stable(g, n)?;
        if let Some(v) = self.table.read().get(&(g, n)) {
            return Ok(v.clone());
        }
        let v = Arc::new(self.compute(g, n)?);
        Ok(self.table.write().entry((g, n)).or_insert(v).clone())
    }

    fn compute(&self, g: u32, n: usize) -> Result<EvenPoly<C>, EngineError> {
        if (g, n) == (0, 3) {
            return Ok(self.data.pants()?);
        }
        if (g, n) == (1, 1) {
            return Ok(self.data.torus()?);
        }
        let mut out = EvenPoly::new(n);
        let half = rat(1, 2);

        // B-terms: glue a pants along L_1, L_m.
        if is_stable(g, n - 1) {
            let prev = self.volume(g, n - 1)?;
            for m in 1..n {
                self.glue_b(&prev, m, &mut out)?;
            }
        }

        // C-term, non-separating: V_{g-1,n+1}(l, l', L_2..L_n).
        if g >= 1 && is_stable(g - 1, n + 1) {
            let prev = self.volume(g - 1, n + 1)?;
            self.glue_c(&prev.scale_rational(&half), &mut out)?;
        }

        // C-term, separating: ordered splittings of genus and of L_2..L_n.
        let others: Vec<usize> = (1..n).collect();
        for h in 0..=g {
            for (j1, j2) in splittings(&others) {
                let (n1, n2) = (1 + j1.len(), 1 + j2.len());
                if !is_stable(h, n1) || !is_stable(g - h, n2) {
                    continue;
                }
                let v1 = self.volume(h, n1)?;
                let v2 = self.volume(g - h, n2)?;
                self.glue_c_split(&v1.scale_rational(&half), &j1, &v2, &j2, &mut out)?;
            }
        }
        Ok(out)
    }

    /// Add `Bhat[prev(l, rest)](L_1, L_m)` to `out`, where the remaining
    /// variables of `prev` fill the slots `1..n` other than `m` in order.
    pub fn glue_b(&self, prev: &EvenPoly<C>, m: usize, out: &mut EvenPoly<C>) -> Result<(), EngineError> {
        let n = out.nvars();
        let rest: Vec<usize> = (1..n).filter(|i| *i != m).collect();
        for (d, c) in prev.terms() {
            let b = self.b_moment(d[0])?;
            for (e, bc) in b.terms() {
                let mut x = vec![0u32; n];
                x[0] = e[0];
                x[m] = e[1];
                for (pos, var) in rest.iter().enumerate() {
                    x[*var] = d[pos + 1];
                }
                out.add_term(x, c.mul_ref(bc));
            }
        }
        Ok(())
    }

    /// Add `Chat[prev(l, l', L_2..L_n)](L_1)` to `out`.
    pub fn glue_c(&self, prev: &EvenPoly<C>, out: &mut EvenPoly<C>) -> Result<(), EngineError> {
        let n = out.nvars();
        for (d, c) in prev.terms() {
            let cm = self.c_moment(d[0], d[1])?;
            for (e, cc) in cm.terms() {
                let mut x = vec![0u32; n];
                x[0] = e[0];
                x[1..n].copy_from_slice(&d[2..(n + 1)]);
                out.add_term(x, c.mul_ref(cc));
            }
        }
        Ok(())
    }

    /// Add `Chat[v1(l, L_j1) v2(l', L_j2)](L_1)` to `out`.
    pub fn glue_c_split(&self, v1: &EvenPoly<C>, j1: &[usize], v2: &EvenPoly<C>, j2: &[usize], out: &mut EvenPoly<C>) -> Result<(), EngineError> {
        let n = out.nvars();
        for (d1, c1) in v1.terms() {
            for (d2, c2) in v2.terms() {
                let cm = self.c_moment(d1[0], d2[0])?;
                let c12 = c1.mul_ref(c2);
                for (e, cc) in cm.terms() {
                    let mut x = vec![0u32; n];
                    x[0] = e[0];
                    for (pos, var) in j1.iter().enumerate() {
                        x[*var] = d1[pos + 1];
                    }
                    for (pos, var) in j2.iter().enumerate() {
                        x[*var] = d2[pos + 1];
                    }
                    out.add_term(x, c12.mul_ref(cc));
                }
            }
        }
        Ok(())
    }
}

/// Volume polynomial `V_{g,n}` for a kernel family.
pub fn volume(g: u32, n: usize, fam: &KernelFamily) -> Result<EvenPoly, EngineError> {
    Ok((*Engine::<CoeffElem>::for_family(fam).volume(g, n)?).clone())
}

/// Volume for the family twisted by `f`, with coefficients in any ring
/// able to hold the moments of `f`.
pub fn twisted_volume<C: Coefficient>(g: u32, n: usize, fam: &KernelFamily, f: &MomentSpec) -> Result<EvenPoly<C>, EngineError> {
    let twisted = fam.twist(f.clone());
    Ok((*Engine::<C>::for_family(&twisted).volume(g, n)?).clone())
}

/// Stable `(g,n)` with `2g-2+n <= max_complexity`, ordered by complexity,
/// then genus.
pub fn stable_range(max_complexity: u32) -> Vec<(u32, usize)> {
    let mut out = Vec::new();
    for chi in 1..=max_complexity as i64 {
        for g in 0..=((chi + 1) / 2) {
            let n = chi + 2 - 2 * g;
            if n >= 1 {
                out.push((g as u32, n as usize));
            }
        }
    }
    out
}

/// Table of volume polynomials for one kernel family.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeTable<C: Coefficient = CoeffElem> {
    pub kernel: String,
    pub entries: BTreeMap<(u32, usize), EvenPoly<C>>,
}

impl<C: Coefficient> VolumeTable<C> {
    pub fn compute(engine: &Engine<C>, cells: &[(u32, usize)]) -> Result<Self, EngineError> {
        let mut entries = BTreeMap::new();
        for &(g, n) in cells {
            entries.insert((g, n), (*engine.volume(g, n)?).clone());
        }
        Ok(VolumeTable { kernel: engine.id(), entries })
    }

    pub fn get(&self, g: u32, n: usize) -> Option<&EvenPoly<C>> {
        self.entries.get(&(g, n))
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .entries
            .iter()
            .map(|((g, n), p)| json!({"g": g, "n": n, "volume": p.to_json()}))
            .collect();
        json!({"kernel": self.kernel, "volumes": rows})
    }
}

impl VolumeTable<CoeffElem> {
    /// One row per (monomial, pi^2 power): g, n, d, pi2, num, den.
    pub fn to_rows(&self) -> Vec<(u32, usize, Vec<u32>, u32, String, String)> {
        let mut rows = Vec::new();
        for ((g, n), p) in &self.entries {
            for (d, c) in p.terms() {
                for (k, q) in c.terms() {
                    rows.push((*g, *n, d.clone(), k, q.numer().to_string(), q.denom().to_string()));
                }
            }
        }
        rows
    }
}

fn two_pow_factorial(d: &[u32]) -> Rational {
    let mut w = rat_int(1);
    for &x in d {
        w *= Rational::from_integer(num_bigint::BigInt::from(1) << x);
        for i in 1..=x {
            w *= rat_int(i as i64);
        }
    }
    w
}

/// Intersection numbers `<tau_{d_1} ... tau_{d_n}>_g`, keyed by `d`.
pub fn psi_intersections(g: u32, n: usize) -> Result<BTreeMap<Vec<u32>, Rational>, EngineError> {
    let v = volume(g, n, &KernelFamily::Kontsevich)?;
    let mut out = BTreeMap::new();
    for (d, c) in v.terms() {
        let q = c.as_rational().expect("Kontsevich volumes are rational");
        out.insert(d.clone(), q * two_pow_factorial(d));
    }
    Ok(out)
}

/// Coefficients of `omega_{g,n}` against `prod (2d_i+1)!! / z_i^(2d_i+2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EOSeries {
    pub nvars: usize,
    pub entries: BTreeMap<Vec<u32>, CoeffElem>,
}

impl EOSeries {
    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self.entries.iter().map(|(d, c)| json!({"d": d, "coeff": c.to_json()})).collect();
        json!({"nvars": self.nvars, "terms": rows})
    }
}

/// Laplace export: the coefficient of `prod L_i^(2d_i)` times
/// `prod 2^(d_i) d_i!`.
pub fn laplace_export(v: &EvenPoly) -> EOSeries {
    EOSeries {
        nvars: v.nvars(),
        entries: v.terms().map(|(d, c)| (d.clone(), c.scale(&two_pow_factorial(d)))).collect(),
    }
}

// ---------------------------------------------------------------------------
// Quantum Airy structure tensors

/// Tensors of the initial data in the monomial basis:
/// `A(L1,L2,L3) = sum A^i_{j,k} L1^2i L2^2j L3^2k`,
/// `Bhat[l^2k] = sum B^i_{j,k} L1^2i L2^2j`, `Chat[l^2j l'^2k] = sum C^i_{j,k} L1^2i`,
/// `VD = sum D^i L1^2i`.
///
/// Moment transforms are stored for input indices up to `cap`; every entry
/// they produce is kept, and asking for an input index above `cap` is an
/// error rather than a silent zero.
#[derive(Clone, Debug)]
pub struct AiryTensors<C: Coefficient = CoeffElem> {
    pub cap: u32,
    pants: EvenPoly<C>,
    torus: EvenPoly<C>,
    b: Vec<EvenPoly<C>>,
    c: BTreeMap<(u32, u32), EvenPoly<C>>,
}

impl<C: Coefficient> AiryTensors<C> {
    pub fn from_data(data: &dyn InitialData<C>, cap: u32) -> Result<Self, EngineError> {
        let b = (0..=cap).map(|k| data.b_moment(k)).collect::<Result<Vec<_>, _>>()?;
        let mut c = BTreeMap::new();
        for j in 0..=cap {
            for k in 0..=cap {
                c.insert((j, k), data.c_moment(j, k)?);
            }
        }
        Ok(AiryTensors { cap, pants: data.pants()?, torus: data.torus()?, b, c })
    }

    fn check(&self, k: u32) -> Result<(), EngineError> {
        if k > self.cap {
            Err(EngineError::CapExceeded { index: k, cap: self.cap })
        } else {
            Ok(())
        }
    }

    pub fn a(&self, i: u32, j: u32, k: u32) -> C {
        self.pants.coefficient(&[i, j, k])
    }

    pub fn b(&self, i: u32, j: u32, k: u32) -> Result<C, EngineError> {
        self.check(k)?;
        Ok(self.b[k as usize].coefficient(&[i, j]))
    }

    pub fn c(&self, i: u32, j: u32, k: u32) -> Result<C, EngineError> {
        self.check(j)?;
        self.check(k)?;
        Ok(self.c[&(j, k)].coefficient(&[i]))
    }

    pub fn d(&self, i: u32) -> C {
        self.torus.coefficient(&[i])
    }

    pub fn pants_poly(&self) -> &EvenPoly<C> {
        &self.pants
    }

    pub fn torus_poly(&self) -> &EvenPoly<C> {
        &self.torus
    }

    pub fn b_poly(&self, k: u32) -> Result<&EvenPoly<C>, EngineError> {
        self.check(k)?;
        Ok(&self.b[k as usize])
    }

    pub fn c_poly(&self, j: u32, k: u32) -> Result<&EvenPoly<C>, EngineError> {
        self.check(j)?;
        self.check(k)?;
        Ok(&self.c[&(j, k)])
    }

    /// Add `delta` to the single entry `B^i_{j,k}`.
    pub fn perturb_b(&mut self, i: u32, j: u32, k: u32, delta: C) -> Result<(), EngineError> {
        self.check(k)?;
        self.b[k as usize].add_term(vec![i, j], delta);
        Ok(())
    }

    pub fn perturb_a(&mut self, i: u32, j: u32, k: u32, delta: C) {
        self.pants.add_term(vec![i, j, k], delta);
    }

    pub fn perturb_c(&mut self, i: u32, j: u32, k: u32, delta: C) -> Result<(), EngineError> {
        self.check(j)?;
        self.check(k)?;
        self.c.get_mut(&(j, k)).unwrap().add_term(vec![i], delta);
        Ok(())
    }

    pub fn perturb_d(&mut self, i: u32, delta: C) {
        self.torus.add_term(vec![i], delta);
    }
}

/// Tensors for a kernel family; `cap` bounds the input indices.
pub fn airy_tensors(fam: &KernelFamily, cap: u32) -> Result<AiryTensors, EngineError> {
    AiryTensors::from_data(fam, cap)
}

/// Amplitudes `F_{g,n}[i_1..i_n]` from the Kontsevich-Soibelman recursion
/// on the tensors. Only nonzero entries are stored.
pub fn ks_recursion<C: Coefficient>(t: &AiryTensors<C>, g: u32, n: usize) -> Result<BTreeMap<Vec<u32>, C>, EngineError> {
    let mut memo = HashMap::new();
    ks_inner(t, g, n, &mut memo)
}

type KsMemo<C> = HashMap<(u32, usize), BTreeMap<Vec<u32>, C>>;

fn push<C: Coefficient>(map: &mut BTreeMap<Vec<u32>, C>, key: Vec<u32>, v: C) {
    if v.is_zero() {
        return;
    }
    match map.get_mut(&key) {
        Some(x) => {
            x.add_assign_ref(&v);
            if x.is_zero() {
                map.remove(&key);
            }
        }
        None => {
            map.insert(key, v);
        }
    }
}

fn ks_inner<C: Coefficient>(t: &AiryTensors<C>, g: u32, n: usize, memo: &mut KsMemo<C>) -> Result<BTreeMap<Vec<u32>, C>, EngineError> {
    check_stable(g, n)?;
    if let Some(v) = memo.get(&(g, n)) {
        return Ok(v.clone());
    }
    let mut out = BTreeMap::new();
    if (g, n) == (0, 3) {
        for (d, c) in t.pants.terms() {
            out.insert(d.clone(), c.clone());
        }
    } else if (g, n) == (1, 1) {
        for (d, c) in t.torus.terms() {
            out.insert(d.clone(), c.clone());
        }
    } else {
        let half = rat(1, 2);
        if is_stable(g, n - 1) {
            let prev = ks_inner(t, g, n - 1, memo)?;
            for (idx, f) in &prev {
                let a = idx[0];
                t.check(a)?;
                for (e, bc) in t.b[a as usize].terms() {
                    // B^{i1}_{im,a}
                    for m in 1..n {
                        let mut key = vec![0u32; n];
                        key[0] = e[0];
                        key[m] = e[1];
                        let mut pos = 1;
                        for (var, slot) in key.iter_mut().enumerate().skip(1) {
                            if var == m {
                                continue;
                            }
                            *slot = idx[pos];
                            pos += 1;
                        }
                        push(&mut out, key, bc.mul_ref(f));
                    }
                }
            }
        }
        let contract = |a: u32, b: u32, weight: C, rest: Vec<(usize, u32)>, out: &mut BTreeMap<Vec<u32>, C>| -> Result<(), EngineError> {
            t.check(a)?;
            t.check(b)?;
            for (e, cc) in t.c[&(a, b)].terms() {
                let mut key = vec![0u32; n];
                key[0] = e[0];
                for (var, v) in &rest {
                    key[*var] = *v;
                }
                push(out, key, cc.mul_ref(&weight));
            }
            Ok(())
        };
        if g >= 1 && is_stable(g - 1, n + 1) {
            let prev = ks_inner(t, g - 1, n + 1, memo)?;
            for (idx, f) in &prev {
                let rest = (1..n).map(|v| (v, idx[v + 1])).collect();
                contract(idx[0], idx[1], f.scale(&half), rest, &mut out)?;
            }
        }
        let others: Vec<usize> = (1..n).collect();
        for h in 0..=g {
            for (j1, j2) in splittings(&others) {
                let (n1, n2) = (1 + j1.len(), 1 + j2.len());
                if !is_stable(h, n1) || !is_stable(g - h, n2) {
                    continue;
                }
                let f1 = ks_inner(t, h, n1, memo)?;
                let f2 = ks_inner(t, g - h, n2, memo)?;
                for (i1, x1) in &f1 {
                    for (i2, x2) in &f2 {
                        let mut rest: Vec<(usize, u32)> = j1.iter().enumerate().map(|(p, v)| (*v, i1[p + 1])).collect();
                        rest.extend(j2.iter().enumerate().map(|(p, v)| (*v, i2[p + 1])));
                        contract(i1[0], i2[0], x1.mul_ref(x2).scale(&half), rest, &mut out)?;
                    }
                }
            }
        }
    }
    memo.insert((g, n), out.clone());
    Ok(out)
}

/// A nonzero residual of one of the Lie algebra relations.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual<C: Coefficient> {
    pub relation: u8,
    pub indices: Vec<u32>,
    pub value: C,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AiryReport<C: Coefficient> {
    pub window: u32,
    pub checked: [usize; 6],
    pub residuals: Vec<Residual<C>>,
}

impl<C: Coefficient> AiryReport<C> {
    pub fn passed(&self) -> bool {
        self.residuals.is_empty()
    }

    /// Relations with at least one nonzero residual (numbered 1 to 6).
    pub fn failing_relations(&self) -> Vec<u8> {
        let mut v: Vec<u8> = self.residuals.iter().map(|r| r.relation).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

impl<C: Coefficient> fmt::Display for AiryReport<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "window {}: ", self.window)?;
        for r in 0..6 {
            let bad = self.residuals.iter().filter(|x| x.relation as usize == r + 1).count();
            write!(f, "[{}] {}/{} ok ", r + 1, self.checked[r] - bad, self.checked[r])?;
        }
        Ok(())
    }
}

/// Upper indices with nonzero entries, per polynomial variable.
fn support(p: &EvenPoly<impl Coefficient>, var: usize) -> Vec<u32> {
    let mut v: Vec<u32> = p.terms().map(|(d, _)| d[var]).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Check the six families of relations equivalent to the Lie algebra
/// property, for all free indices in `0..=window`. Each internal sum runs
/// over the support of a factor that is a finite polynomial, so it is
/// complete; an entry needed outside the cap is reported as an error.
pub fn check_airy_relations<C: Coefficient>(t: &AiryTensors<C>, window: u32) -> Result<AiryReport<C>, EngineError> {
    let mut report = AiryReport { window, checked: [0; 6], residuals: Vec::new() };
    let w = window;
    let a_support = support(&t.pants, 0);
    let d_support = support(&t.torus, 0);
    let record = |rel: u8, idx: Vec<u32>, v: C, report: &mut AiryReport<C>| {
        report.checked[rel as usize - 1] += 1;
        if !v.is_zero() {
            report.residuals.push(Residual { relation: rel, indices: idx, value: v });
        }
    };

    // 1. A^i_{j,k} = A^j_{i,k}, plus the declared symmetry in (j,k).
    for i in 0..=w {
        for j in 0..=w {
            for k in 0..=w {
                let mut v = t.a(i, j, k);
                v.add_assign_ref(&t.a(j, i, k).neg_ref());
                let mut s = t.a(i, j, k);
                s.add_assign_ref(&t.a(i, k, j).neg_ref());
                v.add_assign_ref(&s);
                record(1, vec![i, j, k], v, &mut report);
            }
        }
    }

    // 2. f^k_{i,j} = B^i_{j,k} - B^j_{i,k} is antisymmetric in (i,j).
    for i in 0..=w {
        for j in 0..=w {
            for k in 0..=w {
                let mut f_ij = t.b(i, j, k)?;
                f_ij.add_assign_ref(&t.b(j, i, k)?.neg_ref());
                let mut f_ji = t.b(j, i, k)?;
                f_ji.add_assign_ref(&t.b(i, j, k)?.neg_ref());
                f_ij.add_assign_ref(&f_ji);
                record(2, vec![i, j, k], f_ij, &mut report);
            }
        }
    }

    // Left-hand sides of relations 3-6 as functions of (i, j, k, l).
    let rel3 = |i: u32, j: u32, k: u32, l: u32| -> Result<C, EngineError> {
        let mut s = C::zero();
        for &a in &a_support {
            s.add_assign_ref(&t.b(i, j, a)?.mul_ref(&t.a(a, k, l)));
            s.add_assign_ref(&t.b(i, k, a)?.mul_ref(&t.a(j, a, l)));
            s.add_assign_ref(&t.b(i, l, a)?.mul_ref(&t.a(j, a, k)));
        }
        Ok(s)
    };
    let rel4 = |i: u32, j: u32, k: u32, l: u32| -> Result<C, EngineError> {
        let mut s = C::zero();
        let bl = t.b_poly(l)?;
        for a in support(bl, 0) {
            s.add_assign_ref(&t.b(i, j, a)?.mul_ref(&t.b(a, k, l)?));
        }
        for a in support(bl, 1) {
            s.add_assign_ref(&t.b(i, k, a)?.mul_ref(&t.b(j, a, l)?));
        }
        for &a in &a_support {
            s.add_assign_ref(&t.c(i, l, a)?.mul_ref(&t.a(j, a, k)));
        }
        Ok(s)
    };
    let rel5 = |i: u32, j: u32, k: u32, l: u32| -> Result<C, EngineError> {
        let mut s = C::zero();
        for a in support(t.c_poly(k, l)?, 0) {
            s.add_assign_ref(&t.b(i, j, a)?.mul_ref(&t.c(a, k, l)?));
        }
        for a in support(t.b_poly(l)?, 1) {
            s.add_assign_ref(&t.c(i, k, a)?.mul_ref(&t.b(j, a, l)?));
        }
        for a in support(t.b_poly(k)?, 1) {
            s.add_assign_ref(&t.c(i, l, a)?.mul_ref(&t.b(j, a, k)?));
        }
        Ok(s)
    };
    let half = rat(1, 2);
    let rel6 = |i: u32, j: u32| -> Result<C, EngineError> {
        let mut s = C::zero();
        for &a in &d_support {
            s.add_assign_ref(&t.b(i, j, a)?.mul_ref(&t.d(a)));
        }
        for (d, c) in t.pants.terms() {
            if d[0] == j {
                s.add_assign_ref(&t.c(i, d[1], d[2])?.mul_ref(c).scale(&half));
            }
        }
        Ok(s)
    };

    for i in 0..=w {
        for j in 0..=w {
            for k in 0..=w {
                for l in 0..=w {
                    for (rel, f) in [(3u8, &rel3 as &dyn Fn(u32, u32, u32, u32) -> Result<C, EngineError>), (4, &rel4), (5, &rel5)] {
                        let mut v = f(i, j, k, l)?;
                        v.add_assign_ref(&f(j, i, k, l)?.neg_ref());
                        record(rel, vec![i, j, k, l], v, &mut report);
                    }
                }
            }
            let mut v = rel6(i, j)?;
            v.add_assign_ref(&rel6(j, i)?.neg_ref());
            record(6, vec![i, j], v, &mut report);
        }
    }
    Ok(report)
}

/// Residual polynomials of the four averaged symmetry conditions.
///
/// Kernel arguments that are not integrated against a pants boundary are
/// tested against `L^(2l+1) dL`: in conditions 2 and 3 the exponent `l` of
/// that test monomial is recorded as the exponent of `L4` (and of `L3` for
/// the first tested slot of condition 3), for `l <= window`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryReport<C: Coefficient = CoeffElem> {
    pub residuals: [EvenPoly<C>; 4],
}

impl<C: Coefficient> SymmetryReport<C> {
    pub fn passed(&self) -> bool {
        self.residuals.iter().all(EvenPoly::is_zero)
    }

    pub fn failing(&self) -> Vec<usize> {
        (0..4).filter(|i| !self.residuals[*i].is_zero()).map(|i| i + 1).collect()
    }
}

pub fn check_integrated_symmetry<C: Coefficient>(data: &dyn InitialData<C>, window: u32) -> Result<SymmetryReport<C>, EngineError> {
    let a = data.pants()?;
    let vd = data.torus()?;
    let mut bcache: HashMap<u32, EvenPoly<C>> = HashMap::new();
    let mut bm = |k: u32| -> Result<EvenPoly<C>, EngineError> {
        if let Some(p) = bcache.get(&k) {
            return Ok(p.clone());
        }
        let p = data.b_moment(k)?;
        bcache.insert(k, p.clone());
        Ok(p)
    };

    let antisym = |p: &EvenPoly<C>| p.checked_sub(&p.swap_vars(0, 1));

    // 1. int l B(L1,L2,l) A(l,L3,L4) + B(L1,L3,l) A(L2,l,L4) + B(L1,L4,l) A(L2,l,L3)
    let mut s1 = EvenPoly::new(4);
    for (d, c) in a.terms() {
        let (p, q, r) = (d[0], d[1], d[2]);
        let mono34 = EvenPoly::monomial(vec![0, 0, q, r], c.clone());
        s1.add_assign_ref(&bm(p)?.embed(4, &[0, 1]).checked_mul(&mono34)?);
        let mono24 = EvenPoly::monomial(vec![0, p, 0, r], c.clone());
        s1.add_assign_ref(&bm(q)?.embed(4, &[0, 2]).checked_mul(&mono24)?);
        let mono23 = EvenPoly::monomial(vec![0, p, r, 0], c.clone());
        s1.add_assign_ref(&bm(q)?.embed(4, &[0, 3]).checked_mul(&mono23)?);
    }

    // 2. int l B(L1,L2,l) B(l,L3,L4) + B(L1,L3,l) B(L2,l,L4) + C(L1,L4,l) A(L2,l,L3),
    //    with L4 tested against L4^(2l+1).
    let mut s2 = EvenPoly::new(4);
    for l in 0..=window {
        let bl = bm(l)?;
        for (d, c) in bl.terms() {
            let (p, q) = (d[0], d[1]);
            let m3 = EvenPoly::monomial(vec![0, 0, q, l], c.clone());
            s2.add_assign_ref(&bm(p)?.embed(4, &[0, 1]).checked_mul(&m3)?);
            let m2 = EvenPoly::monomial(vec![0, p, 0, l], c.clone());
            s2.add_assign_ref(&bm(q)?.embed(4, &[0, 2]).checked_mul(&m2)?);
        }
        for (d, c) in a.terms() {
            let (p, q, r) = (d[0], d[1], d[2]);
            let m = EvenPoly::monomial(vec![0, p, r, l], c.clone());
            s2.add_assign_ref(&data.c_moment(l, q)?.embed(4, &[0]).checked_mul(&m)?);
        }
    }

    // 3. int l B(L1,L2,l) C(l,L3,L4) + C(L1,L3,l) B(L2,l,L4) + C(L1,L4,l) B(L2,l,L3),
    //    with L3, L4 tested against L3^(2k+1) L4^(2l+1).
    let mut s3 = EvenPoly::new(4);
    for k in 0..=window {
        for l in 0..=window {
            for (d, c) in data.c_moment(k, l)?.terms() {
                let m = EvenPoly::monomial(vec![0, 0, k, l], c.clone());
                s3.add_assign_ref(&bm(d[0])?.embed(4, &[0, 1]).checked_mul(&m)?);
            }
            for (d, c) in bm(l)?.terms() {
                let m = EvenPoly::monomial(vec![0, d[0], k, l], c.clone());
                s3.add_assign_ref(&data.c_moment(k, d[1])?.embed(4, &[0]).checked_mul(&m)?);
            }
            for (d, c) in bm(k)?.terms() {
                let m = EvenPoly::monomial(vec![0, d[0], k, l], c.clone());
                s3.add_assign_ref(&data.c_moment(l, d[1])?.embed(4, &[0]).checked_mul(&m)?);
            }
        }
    }

    // 4. int l B(L1,L2,l) VD(l) + 1/2 int int C(L1,l,l') A(L2,l,l')
    let mut s4 = EvenPoly::new(2);
    for (d, c) in vd.terms() {
        s4.add_assign_ref(&bm(d[0])?.scale(c));
    }
    let half = rat(1, 2);
    for (d, c) in a.terms() {
        let m = EvenPoly::monomial(vec![0, d[0]], c.scale(&half));
        s4.add_assign_ref(&data.c_moment(d[1], d[2])?.embed(2, &[0]).checked_mul(&m)?);
    }

    Ok(SymmetryReport { residuals: [antisym(&s1)?, antisym(&s2)?, antisym(&s3)?, antisym(&s4)?] })
}

/// Convenience: formal twist of a family as [`FormalCoeff`] volumes.
pub fn formal_twisted_volume(g: u32, n: usize, fam: &KernelFamily, tag: u32) -> Result<EvenPoly<FormalCoeff>, EngineError> {
    twisted_volume::<FormalCoeff>(g, n, fam, &MomentSpec::Formal { tag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffring::Symbol;

    fn pi2(q: Rational) -> CoeffElem {
        CoeffElem::term(1, q)
    }

    #[test]
    fn base_cases() {
        assert_eq!(volume(0, 3, &KernelFamily::Mirzakhani).unwrap(), EvenPoly::one(3));
        let v11 = volume(1, 1, &KernelFamily::Mirzakhani).unwrap();
        assert_eq!(v11.coefficient(&[0]), pi2(rat(1, 12)));
        assert_eq!(v11.coefficient(&[1]).as_rational(), Some(rat(1, 48)));
        let k11 = volume(1, 1, &KernelFamily::Kontsevich).unwrap();
        assert_eq!(k11, EvenPoly::monomial(vec![1], CoeffElem::from_rational(rat(1, 48))));
        assert_eq!(volume(0, 2, &KernelFamily::Mirzakhani), Err(EngineError::Unstable(0, 2)));
    }

    #[test]
    fn four_holed_sphere() {
        let v = volume(0, 4, &KernelFamily::Mirzakhani).unwrap();
        assert_eq!(v.coefficient(&[0, 0, 0, 0]), pi2(rat_int(2)));
        assert_eq!(v.coefficient(&[0, 1, 0, 0]).as_rational(), Some(rat(1, 2)));
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn known_volumes() {
        // V_{1,2} = (1/192)(L1^2+L2^2)^2 + (pi^2/12)(L1^2+L2^2) + pi^4/4
        let v = volume(1, 2, &KernelFamily::Mirzakhani).unwrap();
        assert_eq!(v.coefficient(&[2, 0]).as_rational(), Some(rat(1, 192)));
        assert_eq!(v.coefficient(&[1, 1]).as_rational(), Some(rat(1, 96)));
        assert_eq!(v.coefficient(&[1, 0]), pi2(rat(1, 12)));
        assert_eq!(v.coefficient(&[0, 0]), CoeffElem::term(2, rat(1, 4)));
        // V_{2,1}(0) = 29 pi^8 / 192
        let w = volume(2, 1, &KernelFamily::Mirzakhani).unwrap();
        assert_eq!(w.coefficient(&[0]), CoeffElem::term(4, rat(29, 192)));
        // V_{0,5}(0) = 10 pi^4
        let z = volume(0, 5, &KernelFamily::Mirzakhani).unwrap();
        assert_eq!(z.coefficient(&[0, 0, 0, 0, 0]), CoeffElem::term(2, rat_int(10)));
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi_intersections(0, 3).unwrap()[&vec![0, 0, 0]], rat_int(1));
        assert_eq!(psi_intersections(1, 1).unwrap()[&vec![1]], rat(1, 24));
        assert_eq!(psi_intersections(0, 4).unwrap()[&vec![1, 0, 0, 0]], rat_int(1));
        assert_eq!(psi_intersections(2, 1).unwrap()[&vec![4]], rat(1, 1152));
        assert_eq!(psi_intersections(1, 2).unwrap()[&vec![1, 1]], rat(1, 24));
    }

    #[test]
    fn laplace_examples() {
        let s = laplace_export(&volume(0, 3, &KernelFamily::Kontsevich).unwrap());
        assert_eq!(s.entries.len(), 1);
        assert_eq!(s.entries[&vec![0, 0, 0]], CoeffElem::one());
        let s = laplace_export(&volume(1, 1, &KernelFamily::Kontsevich).unwrap());
        assert_eq!(s.entries[&vec![1]].as_rational(), Some(rat(1, 24)));
        assert!(laplace_export(&EvenPoly::new(2)).entries.is_empty());
    }

    #[test]
    fn tensors_and_ks() {
        let t = airy_tensors(&KernelFamily::Kontsevich, 4).unwrap();
        assert_eq!(t.a(0, 0, 0), CoeffElem::one());
        assert!(t.a(1, 0, 0).is_zero());
        let m = airy_tensors(&KernelFamily::Mirzakhani, 4).unwrap();
        assert_eq!(m.d(0), pi2(rat(1, 12)));
        assert_eq!(m.d(1).as_rational(), Some(rat(1, 48)));
        let f11 = ks_recursion(&m, 1, 1).unwrap();
        assert_eq!(f11[&vec![1]].as_rational(), Some(rat(1, 48)));
        let f04 = ks_recursion(&m, 0, 4).unwrap();
        assert_eq!(f04[&vec![0, 0, 0, 0]], pi2(rat_int(2)));
        assert!(matches!(m.b(0, 0, 5), Err(EngineError::CapExceeded { .. })));
    }

    #[test]
    fn ks_cap_exhaustion_is_an_error() {
        let m = airy_tensors(&KernelFamily::Mirzakhani, 0).unwrap();
        assert!(matches!(ks_recursion(&m, 1, 2), Err(EngineError::CapExceeded { .. })));
    }

    #[test]
    fn airy_relations_small_window() {
        let t = airy_tensors(&KernelFamily::Kontsevich, 4).unwrap();
        let r = check_airy_relations(&t, 1).unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn integrated_symmetry_small() {
        let r = check_integrated_symmetry::<CoeffElem>(&KernelFamily::Mirzakhani, 1).unwrap();
        assert!(r.passed(), "{:?}", r.failing());
    }

    #[test]
    fn twisted_torus_formal() {
        let v = formal_twisted_volume(1, 1, &KernelFamily::Mirzakhani, 0).unwrap();
        let u0 = FormalCoeff::symbol(Symbol::Moment { tag: 0, s: 0 });
        assert_eq!(v.coefficient(&[0]).get(&vec![(Symbol::Moment { tag: 0, s: 0 }, 1)]).as_rational(), Some(rat(1, 2)));
        assert_eq!(v.coefficient(&[0]).degree_in(Symbol::Moment { tag: 0, s: 0 }), 1);
        let _ = u0;
    }

    #[test]
    fn stable_range_order() {
        assert_eq!(stable_range(2), vec![(0, 3), (1, 1), (0, 4), (1, 2)]);
        assert!(stable_range(0).is_empty());
    }
}
