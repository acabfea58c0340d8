//! Exact coefficients and sparse even polynomials.
//!
//! [`CoeffElem`] is an element of Q[pi^2] with pi^2 kept as a formal symbol.
//! [`FormalCoeff`] extends it by commuting formal symbols (twist moments,
//! the TQFT scalar, label heights). [`EvenPoly`] is a sparse polynomial in
//! the squared lengths `L_i^2`, keyed by exponent vectors.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};
use thiserror::Error;

pub type Rational = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoeffError {
    #[error("variable count mismatch: {left} vs {right}")]
    NvarsMismatch { left: usize, right: usize },
    #[error("polynomials in zero variables are not supported")]
    ZeroVariables,
    #[error("exponent vector has length {got}, expected {expected}")]
    BadExponent { expected: usize, got: usize },
    #[error("evaluation point has length {got}, expected {expected}")]
    BadPoint { expected: usize, got: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

pub fn rat(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rational {
    BigRational::from_integer(BigInt::from(n))
}

fn rat_to_f64(q: &Rational) -> f64 {
    match (q.numer().to_f64(), q.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // Scale both down so that the quotient survives f64 range limits.
            let shift = q.numer().bits().max(q.denom().bits()).saturating_sub(1000);
            let n = (q.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let d = (q.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}

/// Element of Q[pi^2]: map from pi^2-exponent to a nonzero rational.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CoeffElem {
    terms: BTreeMap<u32, Rational>,
}

impl CoeffElem {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::from_rational(Rational::one())
    }

    pub fn from_rational(q: Rational) -> Self {
        Self::term(0, q)
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rational(rat_int(n))
    }

    /// `q * pi^(2k)`.
    pub fn term(k: u32, q: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !q.is_zero() {
            terms.insert(k, q);
        }
        CoeffElem { terms }
    }

    pub fn pi2_pow(k: u32) -> Self {
        Self::term(k, Rational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, &Rational)> {
        self.terms.iter().map(|(k, q)| (*k, q))
    }

    /// Coefficient of `pi^(2k)`.
    pub fn get(&self, k: u32) -> Rational {
        self.terms.get(&k).cloned().unwrap_or_else(Rational::zero)
    }

    /// The rational value if no pi^2 power occurs.
    pub fn as_rational(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self.terms.get(&0).cloned(),
            _ => None,
        }
    }

    pub fn max_pi2_power(&self) -> Option<u32> {
        self.terms.keys().next_back().copied()
    }

    fn add_term(&mut self, k: u32, q: &Rational) {
        if q.is_zero() {
            return;
        }
        let entry = self.terms.entry(k).or_insert_with(Rational::zero);
        *entry += q;
        if entry.is_zero() {
            self.terms.remove(&k);
        }
    }

    pub fn add_assign_ref(&mut self, other: &CoeffElem) {
        for (k, q) in &other.terms {
            self.add_term(*k, q);
        }
    }

    pub fn scale(&self, q: &Rational) -> CoeffElem {
        if q.is_zero() {
            return CoeffElem::zero();
        }
        CoeffElem {
            terms: self.terms.iter().map(|(k, v)| (*k, v * q)).collect(),
        }
    }

    pub fn mul_ref(&self, other: &CoeffElem) -> CoeffElem {
        let mut out = CoeffElem::zero();
        for (k1, q1) in &self.terms {
            for (k2, q2) in &other.terms {
                out.add_term(k1 + k2, &(q1 * q2));
            }
        }
        out
    }

    pub fn neg_ref(&self) -> CoeffElem {
        CoeffElem {
            terms: self.terms.iter().map(|(k, v)| (*k, -v)).collect(),
        }
    }

    /// Replace pi^2 by `pi2 * t`, i.e. multiply the pi^(2k) term by `t^k`.
    pub fn rescale_pi2(&self, t: &Rational) -> CoeffElem {
        CoeffElem {
            terms: self
                .terms
                .iter()
                .map(|(k, v)| (*k, v * num_traits::pow(t.clone(), *k as usize)))
                .filter(|(_, v)| !v.is_zero())
                .collect(),
        }
    }

    pub fn eval(&self, pi2_value: f64) -> f64 {
        self.terms
            .iter()
            .map(|(k, q)| rat_to_f64(q) * pi2_value.powi(*k as i32))
            .sum()
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.terms
                .iter()
                .map(|(k, q)| {
                    json!({"pi2": k, "num": q.numer().to_string(), "den": q.denom().to_string()})
                })
                .collect(),
        )
    }

    pub fn from_json(v: &Value) -> Result<Self, CoeffError> {
        let arr = v
            .as_array()
            .ok_or_else(|| CoeffError::Parse("coefficient must be an array".into()))?;
        let mut out = CoeffElem::zero();
        for t in arr {
            let k = t
                .get("pi2")
                .and_then(Value::as_u64)
                .ok_or_else(|| CoeffError::Parse("missing pi2 exponent".into()))?;
            let q = parse_num_den(t)?;
            out.add_term(k as u32, &q);
        }
        Ok(out)
    }
}

pub(crate) fn parse_num_den(t: &Value) -> Result<Rational, CoeffError> {
    let num = t
        .get("num")
        .and_then(Value::as_str)
        .ok_or_else(|| CoeffError::Parse("missing num".into()))?;
    let den = t
        .get("den")
        .and_then(Value::as_str)
        .ok_or_else(|| CoeffError::Parse("missing den".into()))?;
    let n: BigInt = num.parse().map_err(|_| CoeffError::Parse(format!("bad integer {num}")))?;
    let d: BigInt = den.parse().map_err(|_| CoeffError::Parse(format!("bad integer {den}")))?;
    if d.is_zero() {
        return Err(CoeffError::Parse("zero denominator".into()));
    }
    Ok(BigRational::new(n, d))
}

/// Parse "p/q" or "p" into a rational.
pub fn parse_rational(s: &str) -> Result<Rational, CoeffError> {
    let s = s.trim();
    let bad = || CoeffError::Parse(format!("bad rational {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

impl fmt::Display for CoeffElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, q) in &self.terms {
            let (sign, abs) = if q.is_negative() { ("-", -q) } else { ("+", q.clone()) };
            if first {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{abs}")?,
                1 => write!(f, "{abs}*pi^2")?,
                _ => write!(f, "{abs}*pi^{}", 2 * k)?,
            }
        }
        Ok(())
    }
}

impl fmt::Debug for CoeffElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoeffElem({self})")
    }
}

impl Add for CoeffElem {
    type Output = CoeffElem;
    fn add(mut self, rhs: CoeffElem) -> CoeffElem {
        self.add_assign_ref(&rhs);
        self
    }
}

impl Sub for CoeffElem {
    type Output = CoeffElem;
    fn sub(mut self, rhs: CoeffElem) -> CoeffElem {
        self.add_assign_ref(&rhs.neg_ref());
        self
    }
}

impl Mul for CoeffElem {
    type Output = CoeffElem;
    fn mul(self, rhs: CoeffElem) -> CoeffElem {
        self.mul_ref(&rhs)
    }
}

impl Neg for CoeffElem {
    type Output = CoeffElem;
    fn neg(self) -> CoeffElem {
        self.neg_ref()
    }
}

/// Formal commuting symbols that may appear in coefficients.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Symbol {
    /// Odd moment `m_{2s+1}` of a formal twisting function; `tag` separates
    /// independent twisting functions.
    Moment { tag: u32, s: u32 },
    /// The scalar attached to each pants of the conformal-block initial data.
    S,
    /// Height `H_lambda` of the step-function twist for label `lambda`.
    Height(u32),
}

impl Symbol {
    pub fn name(&self) -> String {
        match self {
            Symbol::Moment { tag, s } => format!("m{}_{}", tag, 2 * s + 1),
            Symbol::S => "s".to_string(),
            Symbol::Height(l) => format!("H{l}"),
        }
    }

    pub fn parse(name: &str) -> Result<Symbol, CoeffError> {
        let bad = || CoeffError::Parse(format!("bad symbol {name:?}"));
        if name == "s" {
            return Ok(Symbol::S);
        }
        if let Some(rest) = name.strip_prefix('H') {
            return Ok(Symbol::Height(rest.parse().map_err(|_| bad())?));
        }
        if let Some(rest) = name.strip_prefix('m') {
            let (tag, k) = rest.split_once('_').ok_or_else(bad)?;
            let tag: u32 = tag.parse().map_err(|_| bad())?;
            let k: u32 = k.parse().map_err(|_| bad())?;
            if k % 2 == 0 {
                return Err(bad());
            }
            return Ok(Symbol::Moment { tag, s: (k - 1) / 2 });
        }
        Err(bad())
    }
}

/// Monomial in formal symbols: sorted list of (symbol, positive exponent).
pub type SymMonomial = Vec<(Symbol, u32)>;

fn mul_sym_monomials(a: &SymMonomial, b: &SymMonomial) -> SymMonomial {
    let mut out: BTreeMap<Symbol, u32> = a.iter().cloned().collect();
    for (s, e) in b {
        *out.entry(*s).or_insert(0) += e;
    }
    out.into_iter().collect()
}

/// Polynomial in [`Symbol`]s with coefficients in Q[pi^2].
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FormalCoeff {
    terms: BTreeMap<SymMonomial, CoeffElem>,
}

impl FormalCoeff {
    pub fn symbol(s: Symbol) -> Self {
        Self::from_parts(vec![(s, 1)], CoeffElem::one())
    }

    pub fn symbol_pow(s: Symbol, e: u32) -> Self {
        if e == 0 {
            return Self::from_parts(vec![], CoeffElem::one());
        }
        Self::from_parts(vec![(s, e)], CoeffElem::one())
    }

    pub fn from_parts(mono: SymMonomial, c: CoeffElem) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(mono, c);
        }
        FormalCoeff { terms }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&SymMonomial, &CoeffElem)> {
        self.terms.iter()
    }

    /// Coefficient of a symbol monomial.
    pub fn get(&self, mono: &SymMonomial) -> CoeffElem {
        self.terms.get(mono).cloned().unwrap_or_default()
    }

    /// The symbol-free part, if that is all there is.
    pub fn as_elem(&self) -> Option<CoeffElem> {
        match self.terms.len() {
            0 => Some(CoeffElem::zero()),
            1 => self.terms.get(&Vec::new()).cloned(),
            _ => None,
        }
    }

    /// Max exponent of `s` over all terms.
    pub fn degree_in(&self, s: Symbol) -> u32 {
        self.terms
            .keys()
            .map(|m| m.iter().find(|(x, _)| *x == s).map(|(_, e)| *e).unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    fn add_term(&mut self, mono: &SymMonomial, c: &CoeffElem) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(mono.clone()).or_default();
        entry.add_assign_ref(c);
        if entry.is_zero() {
            self.terms.remove(mono);
        }
    }

    /// Substitute numeric values for symbols and pi^2.
    pub fn eval(&self, pi2_value: f64, value: &dyn Fn(Symbol) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let sym: f64 = m.iter().map(|(s, e)| value(*s).powi(*e as i32)).product();
                sym * c.eval(pi2_value)
            })
            .sum()
    }

    /// Substitute exact elements of Q[pi^2] for some symbols.
    pub fn substitute(&self, value: &dyn Fn(Symbol) -> Option<CoeffElem>) -> FormalCoeff {
        let mut out = FormalCoeff::default();
        for (m, c) in &self.terms {
            let mut acc = FormalCoeff::from_parts(vec![], c.clone());
            for (s, e) in m {
                let factor = match value(*s) {
                    Some(v) => {
                        let mut p = CoeffElem::one();
                        for _ in 0..*e {
                            p = p.mul_ref(&v);
                        }
                        FormalCoeff::from_elem(p)
                    }
                    None => FormalCoeff::symbol_pow(*s, *e),
                };
                acc = acc.mul_ref(&factor);
            }
            out.add_assign_ref(&acc);
        }
        out
    }
}

impl fmt::Display for FormalCoeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(m, c)| {
                if m.is_empty() {
                    format!("({c})")
                } else {
                    let syms: Vec<String> = m
                        .iter()
                        .map(|(s, e)| if *e == 1 { s.name() } else { format!("{}^{}", s.name(), e) })
                        .collect();
                    format!("({c})*{}", syms.join("*"))
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl fmt::Debug for FormalCoeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FormalCoeff({self})")
    }
}

/// Commutative coefficient ring used by [`EvenPoly`] and the recursion.
pub trait Coefficient: Clone + PartialEq + fmt::Debug + fmt::Display + Send + Sync + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn from_elem(c: CoeffElem) -> Self;
    fn add_assign_ref(&mut self, other: &Self);
    fn mul_ref(&self, other: &Self) -> Self;
    fn neg_ref(&self) -> Self;
    fn scale(&self, q: &Rational) -> Self;
    fn mul_elem(&self, c: &CoeffElem) -> Self;
    /// The formal moment `m_{2s+1}` of the twisting function `tag`, if this
    /// ring can represent it.
    fn formal_moment(tag: u32, s: u32) -> Option<Self>;
    fn to_json(&self) -> Value;
    fn from_json(v: &Value) -> Result<Self, CoeffError>;

    fn from_rational(q: Rational) -> Self {
        Self::from_elem(CoeffElem::from_rational(q))
    }
}

impl Coefficient for CoeffElem {
    fn zero() -> Self {
        CoeffElem::zero()
    }
    fn one() -> Self {
        CoeffElem::one()
    }
    fn is_zero(&self) -> bool {
        CoeffElem::is_zero(self)
    }
    fn from_elem(c: CoeffElem) -> Self {
        c
    }
    fn add_assign_ref(&mut self, other: &Self) {
        CoeffElem::add_assign_ref(self, other)
    }
    fn mul_ref(&self, other: &Self) -> Self {
        CoeffElem::mul_ref(self, other)
    }
    fn neg_ref(&self) -> Self {
        CoeffElem::neg_ref(self)
    }
    fn scale(&self, q: &Rational) -> Self {
        CoeffElem::scale(self, q)
    }
    fn mul_elem(&self, c: &CoeffElem) -> Self {
        CoeffElem::mul_ref(self, c)
    }
    fn formal_moment(_tag: u32, _s: u32) -> Option<Self> {
        None
    }
    fn to_json(&self) -> Value {
        CoeffElem::to_json(self)
    }
    fn from_json(v: &Value) -> Result<Self, CoeffError> {
        CoeffElem::from_json(v)
    }
}

impl Coefficient for FormalCoeff {
    fn zero() -> Self {
        FormalCoeff::default()
    }
    fn one() -> Self {
        FormalCoeff::from_elem(CoeffElem::one())
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    fn from_elem(c: CoeffElem) -> Self {
        FormalCoeff::from_parts(vec![], c)
    }
    fn add_assign_ref(&mut self, other: &Self) {
        for (m, c) in &other.terms {
            self.add_term(m, c);
        }
    }
    fn mul_ref(&self, other: &Self) -> Self {
        let mut out = FormalCoeff::default();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(&mul_sym_monomials(m1, m2), &c1.mul_ref(c2));
            }
        }
        out
    }
    fn neg_ref(&self) -> Self {
        FormalCoeff {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c.neg_ref())).collect(),
        }
    }
    fn scale(&self, q: &Rational) -> Self {
        let mut out = FormalCoeff::default();
        for (m, c) in &self.terms {
            out.add_term(m, &c.scale(q));
        }
        out
    }
    fn mul_elem(&self, c: &CoeffElem) -> Self {
        let mut out = FormalCoeff::default();
        for (m, x) in &self.terms {
            out.add_term(m, &x.mul_ref(c));
        }
        out
    }
    fn formal_moment(tag: u32, s: u32) -> Option<Self> {
        Some(FormalCoeff::symbol(Symbol::Moment { tag, s }))
    }
    fn to_json(&self) -> Value {
        Value::Array(
            self.terms
                .iter()
                .map(|(m, c)| {
                    let syms: Vec<Value> = m.iter().map(|(s, e)| json!([s.name(), e])).collect();
                    json!({"sym": syms, "coeff": c.to_json()})
                })
                .collect(),
        )
    }
    fn from_json(v: &Value) -> Result<Self, CoeffError> {
        let arr = v
            .as_array()
            .ok_or_else(|| CoeffError::Parse("formal coefficient must be an array".into()))?;
        let mut out = FormalCoeff::default();
        for t in arr {
            let syms = t
                .get("sym")
                .and_then(Value::as_array)
                .ok_or_else(|| CoeffError::Parse("missing sym".into()))?;
            let mut mono = SymMonomial::new();
            for s in syms {
                let name = s.get(0).and_then(Value::as_str);
                let e = s.get(1).and_then(Value::as_u64);
                match (name, e) {
                    (Some(name), Some(e)) if e > 0 => mono = mul_sym_monomials(&mono, &vec![(Symbol::parse(name)?, e as u32)]),
                    _ => return Err(CoeffError::Parse("bad symbol entry".into())),
                }
            }
            let c = CoeffElem::from_json(t.get("coeff").unwrap_or(&Value::Null))?;
            out.add_term(&mono, &c);
        }
        Ok(out)
    }
}

/// Sparse polynomial in `L_1^2, ..., L_n^2`: the key `d` stands for
/// `prod_i L_i^(2 d_i)`.
#[derive(Clone, PartialEq)]
pub struct EvenPoly<C: Coefficient = CoeffElem> {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, C>,
}

impl<C: Coefficient> fmt::Debug for EvenPoly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EvenPoly[{}]({})", self.nvars, self)
    }
}

impl<C: Coefficient> fmt::Display for EvenPoly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(d, c)| {
                let vars: Vec<String> = d
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| **e > 0)
                    .map(|(i, e)| format!("L{}^{}", i + 1, 2 * e))
                    .collect();
                if vars.is_empty() {
                    format!("({c})")
                } else {
                    format!("({c})*{}", vars.join("*"))
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl<C: Coefficient> EvenPoly<C> {
    /// Zero polynomial in `nvars` variables. Panics if `nvars == 0`; use
    /// [`EvenPoly::try_new`] for a checked constructor.
    pub fn new(nvars: usize) -> Self {
        Self::try_new(nvars).expect("EvenPoly needs at least one variable")
    }

    pub fn try_new(nvars: usize) -> Result<Self, CoeffError> {
        if nvars == 0 {
            return Err(CoeffError::ZeroVariables);
        }
        Ok(EvenPoly { nvars, terms: BTreeMap::new() })
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        let mut p = Self::new(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, C::one())
    }

    pub fn monomial(d: Vec<u32>, c: C) -> Self {
        let mut p = Self::new(d.len());
        p.add_term(d, c);
        p
    }

    /// The polynomial `L_i^2` (0-based `i`).
    pub fn length_sq(nvars: usize, i: usize) -> Self {
        let mut d = vec![0; nvars];
        d[i] = 1;
        Self::monomial(d, C::one())
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Vec<u32>, C)>) -> Result<Self, CoeffError> {
        let mut p = Self::try_new(nvars)?;
        for (d, c) in terms {
            if d.len() != nvars {
                return Err(CoeffError::BadExponent { expected: nvars, got: d.len() });
            }
            p.add_term(d, c);
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &C)> {
        self.terms.iter()
    }

    pub fn into_terms(self) -> impl Iterator<Item = (Vec<u32>, C)> {
        self.terms.into_iter()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|d| d.iter().all(|e| *e == 0))
    }

    /// Add `c * prod L_i^(2 d_i)` in place. Panics on a wrong-length `d`.
    pub fn add_term(&mut self, d: Vec<u32>, c: C) {
        assert_eq!(d.len(), self.nvars, "exponent vector length");
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&d) {
            Some(e) => {
                e.add_assign_ref(&c);
                if e.is_zero() {
                    self.terms.remove(&d);
                }
            }
            None => {
                self.terms.insert(d, c);
            }
        }
    }

    pub fn add_term_ref(&mut self, d: &[u32], c: &C) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(d) {
            Some(e) => {
                e.add_assign_ref(c);
                if e.is_zero() {
                    self.terms.remove(d);
                }
            }
            None => {
                assert_eq!(d.len(), self.nvars, "exponent vector length");
                self.terms.insert(d.to_vec(), c.clone());
            }
        }
    }

    pub fn coefficient(&self, d: &[u32]) -> C {
        self.terms.get(d).cloned().unwrap_or_else(C::zero)
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, CoeffError> {
        if self.nvars != other.nvars {
            return Err(CoeffError::NvarsMismatch { left: self.nvars, right: other.nvars });
        }
        let mut out = self.clone();
        for (d, c) in &other.terms {
            out.add_term_ref(d, c);
        }
        Ok(out)
    }

    pub fn add_assign_ref(&mut self, other: &Self) {
        assert_eq!(self.nvars, other.nvars, "variable count mismatch");
        for (d, c) in &other.terms {
            self.add_term_ref(d, c);
        }
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, CoeffError> {
        self.checked_add(&other.neg_ref())
    }

    pub fn neg_ref(&self) -> Self {
        self.map_coeffs(|c| c.neg_ref())
    }

    /// Product. Polynomials with different variable counts multiply only if
    /// one of them is constant.
    pub fn checked_mul(&self, other: &Self) -> Result<Self, CoeffError> {
        if self.nvars != other.nvars {
            if other.is_constant() {
                return Ok(self.scale(&other.coefficient(&vec![0; other.nvars])));
            }
            if self.is_constant() {
                return Ok(other.scale(&self.coefficient(&vec![0; self.nvars])));
            }
            return Err(CoeffError::NvarsMismatch { left: self.nvars, right: other.nvars });
        }
        let mut out = Self::new(self.nvars);
        let mut d = vec![0u32; self.nvars];
        for (d1, c1) in &self.terms {
            for (d2, c2) in &other.terms {
                for i in 0..self.nvars {
                    d[i] = d1[i] + d2[i];
                }
                out.add_term_ref(&d, &c1.mul_ref(c2));
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = Self::new(self.nvars);
        if c.is_zero() {
            return out;
        }
        for (d, x) in &self.terms {
            out.add_term_ref(d, &x.mul_ref(c));
        }
        out
    }

    pub fn scale_rational(&self, q: &Rational) -> Self {
        self.map_coeffs(|c| c.scale(q))
    }

    pub fn map_coeffs<D: Coefficient>(&self, f: impl Fn(&C) -> D) -> EvenPoly<D> {
        let mut out = EvenPoly::<D>::new(self.nvars);
        for (d, c) in &self.terms {
            out.add_term(d.clone(), f(c));
        }
        out
    }

    /// Max of `sum_i d_i` over the support (half the total degree in L);
    /// `None` for the zero polynomial.
    pub fn half_degree(&self) -> Option<u32> {
        self.terms.keys().map(|d| d.iter().sum()).max()
    }

    /// Total degree in the lengths (twice the exponent sum).
    pub fn total_degree(&self) -> Option<u32> {
        self.half_degree().map(|h| 2 * h)
    }

    /// Sum of the monomials of maximal total degree.
    pub fn top_degree_part(&self) -> Self {
        let mut out = Self::new(self.nvars);
        if let Some(top) = self.half_degree() {
            for (d, c) in &self.terms {
                if d.iter().sum::<u32>() == top {
                    out.add_term(d.clone(), c.clone());
                }
            }
        }
        out
    }

    /// Multiply each monomial `prod L_i^(2 d_i)` by `beta^(2 sum d_i)`,
    /// with beta appended as a new last variable.
    pub fn scale_lengths(&self) -> Self {
        let mut out = Self::new(self.nvars + 1);
        for (d, c) in &self.terms {
            let mut e = d.clone();
            e.push(d.iter().sum());
            out.add_term(e, c.clone());
        }
        out
    }

    /// Polynomial with variables reordered: variable `i` of `self` becomes
    /// variable `perm[i]` of the result.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.nvars);
        let mut out = Self::new(self.nvars);
        for (d, c) in &self.terms {
            let mut e = vec![0; self.nvars];
            for (i, x) in d.iter().enumerate() {
                e[perm[i]] = *x;
            }
            out.add_term(e, c.clone());
        }
        out
    }

    /// Swap two variables.
    pub fn swap_vars(&self, i: usize, j: usize) -> Self {
        let mut perm: Vec<usize> = (0..self.nvars).collect();
        perm.swap(i, j);
        self.permute(&perm)
    }

    /// Invariance under all permutations of the variables (checked on
    /// adjacent transpositions, which generate the symmetric group).
    pub fn is_symmetric(&self) -> bool {
        (0..self.nvars.saturating_sub(1)).all(|i| self.swap_vars(i, i + 1) == *self)
    }

    /// Place the variables of `self` at `positions` inside a polynomial in
    /// `nvars` variables.
    pub fn embed(&self, nvars: usize, positions: &[usize]) -> Self {
        assert_eq!(positions.len(), self.nvars);
        let mut out = Self::new(nvars);
        for (d, c) in &self.terms {
            let mut e = vec![0; nvars];
            for (i, x) in d.iter().enumerate() {
                e[positions[i]] += x;
            }
            out.add_term(e, c.clone());
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let terms: Vec<Value> = self
            .terms
            .iter()
            .map(|(d, c)| json!({"d": d, "coeff": c.to_json()}))
            .collect();
        json!({"nvars": self.nvars, "terms": terms})
    }

    pub fn from_json(v: &Value) -> Result<Self, CoeffError> {
        let nvars = v
            .get("nvars")
            .and_then(Value::as_u64)
            .ok_or_else(|| CoeffError::Parse("missing nvars".into()))? as usize;
        let terms = v
            .get("terms")
            .and_then(Value::as_array)
            .ok_or_else(|| CoeffError::Parse("missing terms".into()))?;
        let mut out = Self::try_new(nvars)?;
        for t in terms {
            let d: Vec<u32> = t
                .get("d")
                .and_then(Value::as_array)
                .ok_or_else(|| CoeffError::Parse("missing d".into()))?
                .iter()
                .map(|x| x.as_u64().map(|x| x as u32).ok_or_else(|| CoeffError::Parse("bad exponent".into())))
                .collect::<Result<_, _>>()?;
            if d.len() != nvars {
                return Err(CoeffError::BadExponent { expected: nvars, got: d.len() });
            }
            let c = C::from_json(t.get("coeff").unwrap_or(&Value::Null))?;
            out.add_term(d, c);
        }
        Ok(out)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("json serialization")
    }

    pub fn from_json_str(s: &str) -> Result<Self, CoeffError> {
        let v: Value = serde_json::from_str(s).map_err(|e| CoeffError::Parse(e.to_string()))?;
        Self::from_json(&v)
    }
}

impl EvenPoly<CoeffElem> {
    /// Numeric value at a complex point with pi^2 replaced by `pi2_value`.
    pub fn eval(&self, point: &[Complex64], pi2_value: f64) -> Result<Complex64, CoeffError> {
        if point.len() != self.nvars {
            return Err(CoeffError::BadPoint { expected: self.nvars, got: point.len() });
        }
        let sq: Vec<Complex64> = point.iter().map(|z| z * z).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (d, c) in &self.terms {
            let mut m = Complex64::new(c.eval(pi2_value), 0.0);
            for (i, e) in d.iter().enumerate() {
                m *= sq[i].powu(*e);
            }
            acc += m;
        }
        Ok(acc)
    }

    /// Real evaluation with the true value of pi^2.
    pub fn eval_real(&self, point: &[f64]) -> Result<f64, CoeffError> {
        let pt: Vec<Complex64> = point.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        Ok(self.eval(&pt, std::f64::consts::PI * std::f64::consts::PI)?.re)
    }

    /// Replace pi^2 by `t * pi^2` in every coefficient.
    pub fn rescale_pi2(&self, t: &Rational) -> Self {
        self.map_coeffs(|c| c.rescale_pi2(t))
    }
}

impl EvenPoly<FormalCoeff> {
    pub fn from_elem_poly(p: &EvenPoly<CoeffElem>) -> Self {
        p.map_coeffs(|c| FormalCoeff::from_elem(c.clone()))
    }

    /// Substitute exact values for some formal symbols.
    pub fn substitute(&self, value: &dyn Fn(Symbol) -> Option<CoeffElem>) -> Self {
        self.map_coeffs(|c| c.substitute(value))
    }

    /// Collapse to Q[pi^2] coefficients if no formal symbol remains.
    pub fn to_elem_poly(&self) -> Option<EvenPoly<CoeffElem>> {
        let mut out = EvenPoly::<CoeffElem>::new(self.nvars);
        for (d, c) in &self.terms {
            out.add_term(d.clone(), c.as_elem()?);
        }
        Some(out)
    }
}

impl<C: Coefficient> Add for EvenPoly<C> {
    type Output = EvenPoly<C>;
    fn add(self, rhs: Self) -> Self {
        self.checked_add(&rhs).expect("variable count mismatch")
    }
}

impl<C: Coefficient> Sub for EvenPoly<C> {
    type Output = EvenPoly<C>;
    fn sub(self, rhs: Self) -> Self {
        self.checked_sub(&rhs).expect("variable count mismatch")
    }
}

impl<C: Coefficient> Mul for EvenPoly<C> {
    type Output = EvenPoly<C>;
    fn mul(self, rhs: Self) -> Self {
        self.checked_mul(&rhs).expect("variable count mismatch")
    }
}

impl<C: Coefficient> Neg for EvenPoly<C> {
    type Output = EvenPoly<C>;
    fn neg(self) -> Self {
        self.neg_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vd_mirzakhani() -> EvenPoly {
        EvenPoly::from_terms(
            1,
            [
                (vec![0], CoeffElem::term(1, rat(1, 12))),
                (vec![1], CoeffElem::from_rational(rat(1, 48))),
            ],
        )
        .unwrap()
    }

    fn v04() -> EvenPoly {
        let mut p = EvenPoly::constant(4, CoeffElem::term(1, rat_int(2)));
        for i in 0..4 {
            p = p + EvenPoly::length_sq(4, i).scale_rational(&rat(1, 2));
        }
        p
    }

    #[test]
    fn add_examples() {
        let a = EvenPoly::constant(1, CoeffElem::term(1, rat(1, 12)));
        let b = EvenPoly::monomial(vec![1], CoeffElem::from_rational(rat(1, 48)));
        assert_eq!(a + b, vd_mirzakhani());
        assert_eq!(vd_mirzakhani() + EvenPoly::new(1), vd_mirzakhani());
        assert!((v04() + (-v04())).is_zero());
        assert!(EvenPoly::<CoeffElem>::new(1).checked_add(&EvenPoly::new(2)).is_err());
    }

    #[test]
    fn mul_examples() {
        let p = vd_mirzakhani();
        assert_eq!(EvenPoly::one(1) * p.clone(), p);
        let pi2 = EvenPoly::constant(1, CoeffElem::pi2_pow(1));
        let prod = pi2.clone() * pi2;
        assert_eq!(prod.coefficient(&[0]).get(2), rat_int(1));
        let l = EvenPoly::monomial(vec![1], CoeffElem::from_rational(rat(1, 48)));
        assert_eq!(l * EvenPoly::constant(1, CoeffElem::from_int(48)), EvenPoly::length_sq(1, 0));
        // a constant in a different variable count broadcasts
        assert_eq!(v04().checked_mul(&EvenPoly::one(1)).unwrap(), v04());
        assert!(v04().checked_mul(&vd_mirzakhani()).is_err());
    }

    #[test]
    fn eval_examples() {
        let pi2 = std::f64::consts::PI.powi(2);
        let v = vd_mirzakhani().eval(&[Complex64::new(0.0, 0.0)], pi2).unwrap();
        assert!((v.re - 0.8224670334241132).abs() < 1e-12);
        assert_eq!(v04().eval(&[Complex64::new(0.0, 0.0); 4], 0.0).unwrap().re, 0.0);
        let l2 = EvenPoly::<CoeffElem>::length_sq(1, 0);
        let z = l2.eval(&[Complex64::new(0.0, 2.0)], pi2).unwrap();
        assert!((z.re + 4.0).abs() < 1e-15 && z.im.abs() < 1e-15);
        assert!(l2.eval(&[], pi2).is_err());
    }

    #[test]
    fn top_degree_and_coefficient() {
        let vd = vd_mirzakhani();
        assert_eq!(vd.top_degree_part(), EvenPoly::monomial(vec![1], CoeffElem::from_rational(rat(1, 48))));
        let c = EvenPoly::constant(2, CoeffElem::from_int(3));
        assert_eq!(c.top_degree_part(), c);
        let top = v04().top_degree_part();
        assert_eq!(top.len(), 4);
        assert_eq!(top.coefficient(&[0, 0, 1, 0]).as_rational(), Some(rat(1, 2)));
        assert_eq!(vd.coefficient(&[1]).as_rational(), Some(rat(1, 48)));
        assert!(vd.coefficient(&[7]).is_zero());
        assert_eq!(v04().coefficient(&[1, 0, 0, 0]).as_rational(), Some(rat(1, 2)));
    }

    #[test]
    fn scale_lengths_tracks_beta() {
        let s = vd_mirzakhani().scale_lengths();
        assert_eq!(s.nvars(), 2);
        assert_eq!(s.coefficient(&[1, 1]).as_rational(), Some(rat(1, 48)));
        assert_eq!(s.coefficient(&[0, 0]).get(1), rat(1, 12));
    }

    #[test]
    fn zero_variables_rejected() {
        assert_eq!(EvenPoly::<CoeffElem>::try_new(0), Err(CoeffError::ZeroVariables));
        assert!(EvenPoly::<CoeffElem>::from_json_str(r#"{"nvars":0,"terms":[]}"#).is_err());
    }

    #[test]
    fn json_format() {
        let s = vd_mirzakhani().to_json_string();
        assert_eq!(
            s,
            r#"{"nvars":1,"terms":[{"coeff":[{"den":"12","num":"1","pi2":1}],"d":[0]},{"coeff":[{"den":"48","num":"1","pi2":0}],"d":[1]}]}"#
        );
        assert_eq!(EvenPoly::from_json_str(&s).unwrap(), vd_mirzakhani());
    }

    #[test]
    fn formal_coefficients() {
        let u = FormalCoeff::formal_moment(0, 1).unwrap();
        let sq = u.mul_ref(&u);
        assert_eq!(sq.degree_in(Symbol::Moment { tag: 0, s: 1 }), 2);
        let back = FormalCoeff::from_json(&sq.to_json()).unwrap();
        assert_eq!(back, sq);
        let sub = sq.substitute(&|_| Some(CoeffElem::from_rational(rat(1, 2))));
        assert_eq!(sub.as_elem().unwrap().as_rational(), Some(rat(1, 4)));
        assert!(CoeffElem::formal_moment(0, 0).is_none());
    }

    #[test]
    fn display() {
        assert_eq!(vd_mirzakhani().to_string(), "(1/12*pi^2)*L1^0 + (1/48)*L1^2".replace("*L1^0", ""));
        assert_eq!(CoeffElem::term(2, rat(-3, 4)).to_string(), "-3/4*pi^4");
    }
}
