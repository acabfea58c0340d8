//! Recursion kernels and their exact moment transforms.
//!
//! A kernel family supplies the pants amplitude `A(L1,L2,L3)`, the kernels
//! `B(L1,L2,l)` and `C(L1,l,l')`, and the one-holed torus volume `VD(L1)`.
//! The exact path only ever uses the moment transforms
//!
//! ```text
//! Bhat[l^2k](L1,L2)      = int_0^inf B(L1,L2,l) l^(2k+1) dl
//! Chat[l^2j l'^2k](L1)   = int int C(L1,l,l') l^(2j+1) l'^(2k+1) dl dl'
//! ```
//!
//! which are even polynomials. For the Mirzakhani kernels they are derived
//! from `int_0^inf (F(a-l) - F(-a-l)) l^p dl = G_p(a)`, an odd polynomial
//! whose coefficients are even zeta values. [`quadrature_oracle`] evaluates
//! the same integrals numerically and is only meant for validation.

pub mod quadrature;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::binomial;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use crate::coeffring::{parse_rational, rat, rat_int, CoeffElem, CoeffError, Coefficient, EvenPoly, Rational};
use quadrature::{integrate_pieces, QuadError, QuadOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("first length argument must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("length arguments must be nonnegative")]
    NegativeArgument,
    #[error("formal moments have no pointwise value")]
    FormalPointwise,
    #[error("formal moments need a coefficient ring with formal symbols")]
    FormalInExactRing,
    #[error("invalid kernel specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

/// Numerically stable `F(x) = 2 ln(1 + e^{x/2})`.
pub fn eval_f(x: f64) -> f64 {
    if x > 0.0 {
        x + 2.0 * (-x / 2.0).exp().ln_1p()
    } else {
        2.0 * (x / 2.0).exp().ln_1p()
    }
}

/// Mirzakhani `B` via the logarithm of a ratio of hyperbolic cosines.
pub fn mirzakhani_b_logratio(l1: f64, l2: f64, l: f64) -> f64 {
    let c2 = (l2 / 2.0).cosh();
    1.0 - ((c2 + ((l1 + l) / 2.0).cosh()) / (c2 + ((l1 - l) / 2.0).cosh())).ln() / l1
}

/// Mirzakhani `B` as a combination of `F` values.
pub fn mirzakhani_b_f(l1: f64, l2: f64, l: f64) -> f64 {
    (eval_f(l1 - l2 - l) + eval_f(l1 + l2 - l) - eval_f(-l1 + l2 - l) - eval_f(-l1 - l2 - l)) / (2.0 * l1)
}

pub fn mirzakhani_c(l1: f64, l: f64, lp: f64) -> f64 {
    (eval_f(l1 - l - lp) - eval_f(-l1 - l - lp)) / l1
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

pub fn kontsevich_b(l1: f64, l2: f64, l: f64) -> f64 {
    (pos(l1 - l2 - l) - pos(-l1 + l2 - l) + pos(l1 + l2 - l)) / (2.0 * l1)
}

pub fn kontsevich_c(l1: f64, l: f64, lp: f64) -> f64 {
    pos(l1 - l - lp) / l1
}

/// Twisting function, described through its moments `m_k = int l^k f(l) dl`.
#[derive(Clone, Debug, PartialEq)]
pub enum MomentSpec {
    Zero,
    /// Indicator of `[0, height]`: `m_k = height^(k+1)/(k+1)`.
    Indicator { height: Rational },
    /// `e^{-rate l}`: `m_k = k!/rate^(k+1)`.
    Exponential { rate: Rational },
    /// Odd moments kept as formal symbols, distinguished by `tag`.
    Formal { tag: u32 },
    Sum(Vec<MomentSpec>),
}

fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

impl MomentSpec {
    pub fn indicator(height: Rational) -> Result<Self, KernelError> {
        if !height.is_positive() {
            return Err(KernelError::InvalidSpec("indicator height must be positive".into()));
        }
        Ok(MomentSpec::Indicator { height })
    }

    pub fn exponential(rate: Rational) -> Result<Self, KernelError> {
        if !rate.is_positive() {
            return Err(KernelError::InvalidSpec("exponential rate must be positive".into()));
        }
        Ok(MomentSpec::Exponential { rate })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MomentSpec::Zero => true,
            MomentSpec::Sum(v) => v.iter().all(MomentSpec::is_zero),
            _ => false,
        }
    }

    pub fn is_formal(&self) -> bool {
        match self {
            MomentSpec::Formal { .. } => true,
            MomentSpec::Sum(v) => v.iter().any(MomentSpec::is_formal),
            _ => false,
        }
    }

    /// Exact moment `m_k` when no formal part is involved.
    pub fn moment_rational(&self, k: u32) -> Option<Rational> {
        match self {
            MomentSpec::Zero => Some(Rational::zero()),
            MomentSpec::Indicator { height } => Some(num_traits::pow(height.clone(), k as usize + 1) / rat_int(k as i64 + 1)),
            MomentSpec::Exponential { rate } => {
                Some(Rational::from_integer(factorial(k)) / num_traits::pow(rate.clone(), k as usize + 1))
            }
            MomentSpec::Formal { .. } => None,
            MomentSpec::Sum(v) => v.iter().map(|f| f.moment_rational(k)).sum(),
        }
    }

    /// Odd moment `m_{2s+1}` in the coefficient ring `C`.
    pub fn odd_moment<C: Coefficient>(&self, s: u32) -> Result<C, KernelError> {
        match self {
            MomentSpec::Formal { tag } => C::formal_moment(*tag, s).ok_or(KernelError::FormalInExactRing),
            MomentSpec::Sum(v) => {
                let mut acc = C::zero();
                for f in v {
                    acc.add_assign_ref(&f.odd_moment::<C>(s)?);
                }
                Ok(acc)
            }
            other => Ok(C::from_rational(other.moment_rational(2 * s + 1).expect("non-formal moment"))),
        }
    }

    /// `u_{i,j} = m_{2(i+j)+1}`.
    pub fn u<C: Coefficient>(&self, i: u32, j: u32) -> Result<C, KernelError> {
        self.odd_moment(i + j)
    }

    /// Pointwise value `f(l)`.
    pub fn eval(&self, l: f64) -> Result<f64, KernelError> {
        match self {
            MomentSpec::Zero => Ok(0.0),
            MomentSpec::Indicator { height } => Ok(if l < height.to_f64().unwrap_or(f64::INFINITY) { 1.0 } else { 0.0 }),
            MomentSpec::Exponential { rate } => Ok((-rate.to_f64().unwrap_or(f64::NAN) * l).exp()),
            MomentSpec::Formal { .. } => Err(KernelError::FormalPointwise),
            MomentSpec::Sum(v) => v.iter().map(|f| f.eval(l)).sum(),
        }
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            MomentSpec::Indicator { height } => out.push(height.to_f64().unwrap_or(0.0)),
            MomentSpec::Sum(v) => v.iter().for_each(|f| f.breakpoints(out)),
            _ => {}
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            MomentSpec::Zero => json!({"type": "zero"}),
            MomentSpec::Indicator { height } => json!({"type": "indicator", "height": height.to_string()}),
            MomentSpec::Exponential { rate } => json!({"type": "exponential", "rate": rate.to_string()}),
            MomentSpec::Formal { tag } => json!({"type": "formal", "tag": tag}),
            MomentSpec::Sum(v) => json!({"type": "sum", "terms": v.iter().map(MomentSpec::to_json).collect::<Vec<_>>()}),
        }
    }

    pub fn from_json(v: &Value) -> Result<Self, KernelError> {
        let bad = |m: &str| KernelError::InvalidSpec(m.to_string());
        let ty = v.get("type").and_then(Value::as_str).ok_or_else(|| bad("moment spec needs a type"))?;
        let rational_field = |name: &str| -> Result<Rational, KernelError> {
            match v.get(name) {
                Some(Value::String(s)) => Ok(parse_rational(s)?),
                Some(Value::Number(n)) if n.is_i64() => Ok(rat_int(n.as_i64().unwrap())),
                _ => Err(bad(&format!("missing rational field {name}"))),
            }
        };
        match ty {
            "zero" => Ok(MomentSpec::Zero),
            "indicator" => MomentSpec::indicator(rational_field("height")?),
            "exponential" => MomentSpec::exponential(rational_field("rate")?),
            "formal" => Ok(MomentSpec::Formal { tag: v.get("tag").and_then(Value::as_u64).unwrap_or(0) as u32 }),
            "sum" => Ok(MomentSpec::Sum(
                v.get("terms")
                    .and_then(Value::as_array)
                    .ok_or_else(|| bad("sum needs terms"))?
                    .iter()
                    .map(MomentSpec::from_json)
                    .collect::<Result<_, _>>()?,
            )),
            other => Err(bad(&format!("unknown moment spec type {other}"))),
        }
    }
}

/// Kernel families of polynomial type.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelFamily {
    Mirzakhani,
    Kontsevich,
    /// Mirzakhani kernels evaluated at scaled lengths, `X(bL1, bL2, bl)`.
    BetaScaled(Rational),
    Twisted(Box<KernelFamily>, MomentSpec),
}

impl KernelFamily {
    pub fn beta_scaled(beta: Rational) -> Result<Self, KernelError> {
        if !beta.is_positive() {
            return Err(KernelError::InvalidSpec("beta must be positive".into()));
        }
        Ok(KernelFamily::BetaScaled(beta))
    }

    /// Twisted family; twisting by the zero function returns `self`.
    pub fn twist(&self, f: MomentSpec) -> KernelFamily {
        if f.is_zero() {
            return self.clone();
        }
        KernelFamily::Twisted(Box::new(self.clone()), f)
    }

    pub fn id(&self) -> String {
        match self {
            KernelFamily::Mirzakhani => "mirzakhani".into(),
            KernelFamily::Kontsevich => "kontsevich".into(),
            KernelFamily::BetaScaled(b) => format!("beta({b})"),
            KernelFamily::Twisted(base, f) => format!("twisted({},{})", base.id(), f.to_json()),
        }
    }

    /// All families here have moment transforms preserving even polynomials.
    pub fn polynomial_type(&self) -> bool {
        true
    }

    pub fn eval_a(&self, _l1: f64, _l2: f64, _l3: f64) -> f64 {
        1.0
    }

    fn check_args(l1: f64, rest: &[f64]) -> Result<(), KernelError> {
        if !(l1 > 0.0) {
            return Err(KernelError::NonPositiveLength(l1));
        }
        if rest.iter().any(|x| !(*x >= 0.0)) {
            return Err(KernelError::NegativeArgument);
        }
        Ok(())
    }

    pub fn eval_b(&self, l1: f64, l2: f64, l: f64) -> Result<f64, KernelError> {
        Self::check_args(l1, &[l2, l])?;
        Ok(match self {
            KernelFamily::Mirzakhani => mirzakhani_b_f(l1, l2, l),
            KernelFamily::Kontsevich => kontsevich_b(l1, l2, l),
            KernelFamily::BetaScaled(b) => {
                let b = b.to_f64().unwrap();
                mirzakhani_b_f(b * l1, b * l2, b * l)
            }
            KernelFamily::Twisted(base, f) => base.eval_b(l1, l2, l)? + base.eval_a(l1, l2, l) * f.eval(l)?,
        })
    }

    pub fn eval_c(&self, l1: f64, l: f64, lp: f64) -> Result<f64, KernelError> {
        Self::check_args(l1, &[l, lp])?;
        Ok(match self {
            KernelFamily::Mirzakhani => mirzakhani_c(l1, l, lp),
            KernelFamily::Kontsevich => kontsevich_c(l1, l, lp),
            KernelFamily::BetaScaled(b) => {
                let b = b.to_f64().unwrap();
                mirzakhani_c(b * l1, b * l, b * lp)
            }
            KernelFamily::Twisted(base, f) => {
                let (fl, flp) = (f.eval(l)?, f.eval(lp)?);
                base.eval_c(l1, l, lp)?
                    + base.eval_b(l1, l, lp)? * fl
                    + base.eval_b(l1, lp, l)? * flp
                    + base.eval_a(l1, l, lp) * fl * flp
            }
        })
    }

    pub fn to_json(&self) -> Value {
        match self {
            KernelFamily::Mirzakhani => json!({"family": "mirzakhani"}),
            KernelFamily::Kontsevich => json!({"family": "kontsevich"}),
            KernelFamily::BetaScaled(b) => json!({"family": "beta", "beta": b.to_string()}),
            KernelFamily::Twisted(base, f) => json!({"family": "twisted", "base": base.to_json(), "twist": f.to_json()}),
        }
    }

    pub fn from_json(v: &Value) -> Result<Self, KernelError> {
        let bad = |m: &str| KernelError::InvalidSpec(m.to_string());
        let fam = v.get("family").and_then(Value::as_str).ok_or_else(|| bad("kernel spec needs a family"))?;
        match fam {
            "mirzakhani" => Ok(KernelFamily::Mirzakhani),
            "kontsevich" => Ok(KernelFamily::Kontsevich),
            "beta" => {
                let b = match v.get("beta") {
                    Some(Value::String(s)) => parse_rational(s)?,
                    Some(Value::Number(n)) if n.is_i64() => rat_int(n.as_i64().unwrap()),
                    _ => return Err(bad("beta family needs a rational beta")),
                };
                KernelFamily::beta_scaled(b)
            }
            "twisted" => {
                let base = KernelFamily::from_json(v.get("base").ok_or_else(|| bad("twisted family needs a base"))?)?;
                let f = MomentSpec::from_json(v.get("twist").ok_or_else(|| bad("twisted family needs a twist"))?)?;
                Ok(base.twist(f))
            }
            other => Err(bad(&format!("unknown family {other}"))),
        }
    }

    /// Parse a bare family name as accepted on the command line.
    pub fn from_name(name: &str) -> Result<Self, KernelError> {
        match name {
            "mirzakhani" | "M" => Ok(KernelFamily::Mirzakhani),
            "kontsevich" | "K" => Ok(KernelFamily::Kontsevich),
            other => match other.strip_prefix("beta:") {
                Some(b) => KernelFamily::beta_scaled(parse_rational(b)?),
                None => Err(KernelError::InvalidSpec(format!("unknown family {other}"))),
            },
        }
    }
}

/// Initial data of polynomial type over the coefficient ring `C`.
pub trait InitialData<C: Coefficient>: Send + Sync {
    fn id(&self) -> String;
    /// `A(L1,L2,L3)` as a polynomial in three variables.
    fn pants(&self) -> Result<EvenPoly<C>, KernelError>;
    /// `VD(L1)` in one variable.
    fn torus(&self) -> Result<EvenPoly<C>, KernelError>;
    /// `Bhat[l^2k](L1,L2)` in two variables.
    fn b_moment(&self, k: u32) -> Result<EvenPoly<C>, KernelError>;
    /// `Chat[l^2j l'^2k](L1)` in one variable.
    fn c_moment(&self, j: u32, k: u32) -> Result<EvenPoly<C>, KernelError>;
}

// ---------------------------------------------------------------------------
// Closed forms

fn bernoulli_numbers(n: usize) -> Vec<Rational> {
    let mut b = vec![Rational::one()];
    for m in 1..=n {
        let mut acc = Rational::zero();
        for (k, bk) in b.iter().enumerate() {
            acc += Rational::from_integer(binomial(BigInt::from(m + 1), BigInt::from(k))) * bk;
        }
        b.push(-acc / rat_int(m as i64 + 1));
    }
    b
}

/// Rational `r` with `zeta(2i) = r * pi^(2i)`.
fn zeta_even(i: u32) -> Rational {
    let b = bernoulli_numbers(2 * i as usize);
    let sign = if i % 2 == 1 { rat_int(1) } else { rat_int(-1) };
    sign * &b[2 * i as usize] * Rational::from_integer(BigInt::one() << (2 * i))
        / (rat_int(2) * Rational::from_integer(factorial(2 * i)))
}

/// `G_p(a) = int_0^inf (F(a-l) - F(-a-l)) l^p dl` for odd `p`, as a list of
/// (odd power of `a`, coefficient).
fn g_poly(p: u32) -> Vec<(u32, CoeffElem)> {
    assert!(p % 2 == 1);
    (0..=(p + 1) / 2)
        .map(|i| {
            let e = p + 2 - 2 * i;
            let ratio = Rational::new(factorial(p), factorial(e));
            let c = if i == 0 {
                CoeffElem::from_rational(ratio)
            } else {
                let w = rat_int((1i64 << (2 * i + 1)) - 4) * zeta_even(i);
                CoeffElem::term(i, ratio * w)
            };
            (e, c)
        })
        .collect()
}

/// `(1/(2 L1)) * sum_e g_e [(L1+L2)^e + (L1-L2)^e]` for odd `e`.
fn symmetrized_over_l1(terms: &[(u32, CoeffElem)]) -> EvenPoly {
    let mut out = EvenPoly::new(2);
    for (e, g) in terms {
        for i in (0..=*e).step_by(2) {
            let b = Rational::from_integer(binomial(BigInt::from(*e), BigInt::from(i)));
            out.add_term(vec![(e - i - 1) / 2, i / 2], g.scale(&b));
        }
    }
    out
}

fn beta_weight(j: u32, k: u32) -> Rational {
    Rational::new(factorial(2 * j + 1) * factorial(2 * k + 1), factorial(2 * (j + k) + 3))
}

fn rescale_by_beta(p: &EvenPoly, beta: &Rational, shift: i64) -> EvenPoly {
    // coefficient of d gets beta^(2|d| - shift)
    let mut out = EvenPoly::new(p.nvars());
    for (d, c) in p.terms() {
        let e = 2 * d.iter().sum::<u32>() as i64 - shift;
        let w = if e >= 0 {
            num_traits::pow(beta.clone(), e as usize)
        } else {
            num_traits::pow(beta.clone(), (-e) as usize).recip()
        };
        out.add_term(d.clone(), c.scale(&w));
    }
    out
}

/// `int_0^inf l^(2k+1) C(L,l,l) dl` for an untwisted family.
pub fn diagonal_moment(fam: &KernelFamily, k: u32) -> Result<EvenPoly, KernelError> {
    let quarter = Rational::new(BigInt::one(), BigInt::one() << (2 * k + 2));
    match fam {
        KernelFamily::Mirzakhani => {
            let mut out = EvenPoly::new(1);
            for (e, g) in g_poly(2 * k + 1) {
                out.add_term(vec![(e - 1) / 2], g.scale(&quarter));
            }
            Ok(out)
        }
        KernelFamily::Kontsevich => {
            let w = quarter / rat_int(((2 * k + 2) * (2 * k + 3)) as i64);
            Ok(EvenPoly::monomial(vec![k + 1], CoeffElem::from_rational(w)))
        }
        KernelFamily::BetaScaled(b) => Ok(rescale_by_beta(&diagonal_moment(&KernelFamily::Mirzakhani, k)?, b, 2 * k as i64 + 2)),
        KernelFamily::Twisted(..) => Err(KernelError::InvalidSpec("diagonal moment of a twisted family".into())),
    }
}

fn untwisted_b(fam: &KernelFamily, k: u32) -> EvenPoly {
    let p = 2 * k + 1;
    match fam {
        KernelFamily::Mirzakhani => symmetrized_over_l1(&g_poly(p)),
        KernelFamily::Kontsevich => {
            let w = Rational::one() / rat_int(((p + 1) * (p + 2)) as i64);
            symmetrized_over_l1(&[(p + 2, CoeffElem::from_rational(w))])
        }
        KernelFamily::BetaScaled(b) => rescale_by_beta(&untwisted_b(&KernelFamily::Mirzakhani, k), b, 2 * k as i64 + 2),
        KernelFamily::Twisted(..) => unreachable!(),
    }
}

fn untwisted_c(fam: &KernelFamily, j: u32, k: u32) -> EvenPoly {
    let m = j + k;
    let w = beta_weight(j, k);
    match fam {
        KernelFamily::Mirzakhani => {
            let mut out = EvenPoly::new(1);
            for (e, g) in g_poly(2 * m + 3) {
                out.add_term(vec![(e - 1) / 2], g.scale(&w));
            }
            out
        }
        KernelFamily::Kontsevich => {
            let c = w / rat_int(((2 * m + 4) * (2 * m + 5)) as i64);
            EvenPoly::monomial(vec![m + 2], CoeffElem::from_rational(c))
        }
        KernelFamily::BetaScaled(b) => rescale_by_beta(&untwisted_c(&KernelFamily::Mirzakhani, j, k), b, 2 * m as i64 + 4),
        KernelFamily::Twisted(..) => unreachable!(),
    }
}

fn lift<C: Coefficient>(p: &EvenPoly) -> EvenPoly<C> {
    p.map_coeffs(|c| C::from_elem(c.clone()))
}

impl<C: Coefficient> InitialData<C> for KernelFamily {
    fn id(&self) -> String {
        KernelFamily::id(self)
    }

    fn pants(&self) -> Result<EvenPoly<C>, KernelError> {
        Ok(EvenPoly::one(3))
    }

    fn torus(&self) -> Result<EvenPoly<C>, KernelError> {
        match self {
            KernelFamily::Twisted(base, f) => {
                let mut out = InitialData::<C>::torus(base.as_ref())?;
                let a = InitialData::<C>::pants(base.as_ref())?;
                let half = rat(1, 2);
                for (d, c) in a.terms() {
                    let u = f.odd_moment::<C>(d[1] + d[2])?;
                    out.add_term(vec![d[0]], c.mul_ref(&u).scale(&half));
                }
                Ok(out)
            }
            _ => Ok(lift(&diagonal_moment(self, 0)?.scale_rational(&rat(1, 2)))),
        }
    }

    fn b_moment(&self, k: u32) -> Result<EvenPoly<C>, KernelError> {
        match self {
            KernelFamily::Twisted(base, f) => {
                let mut out = InitialData::<C>::b_moment(base.as_ref(), k)?;
                for (d, c) in InitialData::<C>::pants(base.as_ref())?.terms() {
                    out.add_term(vec![d[0], d[1]], c.mul_ref(&f.u::<C>(d[2], k)?));
                }
                Ok(out)
            }
            _ => Ok(lift(&untwisted_b(self, k))),
        }
    }

    fn c_moment(&self, j: u32, k: u32) -> Result<EvenPoly<C>, KernelError> {
        match self {
            KernelFamily::Twisted(base, f) => {
                let base = base.as_ref();
                let mut out = InitialData::<C>::c_moment(base, j, k)?;
                // B(L1,l,l') f(l): integrate l' against B's last slot first.
                for (d, c) in InitialData::<C>::b_moment(base, k)?.terms() {
                    out.add_term(vec![d[0]], c.mul_ref(&f.u::<C>(d[1], j)?));
                }
                for (d, c) in InitialData::<C>::b_moment(base, j)?.terms() {
                    out.add_term(vec![d[0]], c.mul_ref(&f.u::<C>(d[1], k)?));
                }
                for (d, c) in InitialData::<C>::pants(base)?.terms() {
                    let uu = f.u::<C>(d[1], j)?.mul_ref(&f.u::<C>(d[2], k)?);
                    out.add_term(vec![d[0]], c.mul_ref(&uu));
                }
                Ok(out)
            }
            _ => Ok(lift(&untwisted_c(self, j, k))),
        }
    }
}

/// Exact `Bhat[l^2k](L1,L2)` with coefficients in Q[pi^2].
pub fn moment_b(fam: &KernelFamily, k: u32) -> Result<EvenPoly, KernelError> {
    InitialData::<CoeffElem>::b_moment(fam, k)
}

/// Exact `Chat[l^2j l'^2k](L1)` with coefficients in Q[pi^2].
pub fn moment_c(fam: &KernelFamily, j: u32, k: u32) -> Result<EvenPoly, KernelError> {
    InitialData::<CoeffElem>::c_moment(fam, j, k)
}

/// Exact `VD(L1)`.
pub fn torus_volume(fam: &KernelFamily) -> Result<EvenPoly, KernelError> {
    InitialData::<CoeffElem>::torus(fam)
}

/// Initial data with additive corrections, used to build deliberately
/// broken kernels for mutation tests.
#[derive(Clone)]
pub struct Perturbed<C: Coefficient> {
    pub base: Arc<dyn InitialData<C>>,
    pub pants: Option<EvenPoly<C>>,
    pub torus: Option<EvenPoly<C>>,
    pub b: BTreeMap<u32, EvenPoly<C>>,
    pub c: BTreeMap<(u32, u32), EvenPoly<C>>,
}

impl<C: Coefficient> Perturbed<C> {
    pub fn new(base: Arc<dyn InitialData<C>>) -> Self {
        Perturbed { base, pants: None, torus: None, b: BTreeMap::new(), c: BTreeMap::new() }
    }
}

impl<C: Coefficient> InitialData<C> for Perturbed<C> {
    fn id(&self) -> String {
        format!("perturbed({})", self.base.id())
    }
    fn pants(&self) -> Result<EvenPoly<C>, KernelError> {
        let p = self.base.pants()?;
        Ok(match &self.pants {
            Some(d) => p.checked_add(d)?,
            None => p,
        })
    }
    fn torus(&self) -> Result<EvenPoly<C>, KernelError> {
        let p = self.base.torus()?;
        Ok(match &self.torus {
            Some(d) => p.checked_add(d)?,
            None => p,
        })
    }
    fn b_moment(&self, k: u32) -> Result<EvenPoly<C>, KernelError> {
        let p = self.base.b_moment(k)?;
        Ok(match self.b.get(&k) {
            Some(d) => p.checked_add(d)?,
            None => p,
        })
    }
    fn c_moment(&self, j: u32, k: u32) -> Result<EvenPoly<C>, KernelError> {
        let p = self.base.c_moment(j, k)?;
        Ok(match self.c.get(&(j, k)) {
            Some(d) => p.checked_add(d)?,
            None => p,
        })
    }
}

// ---------------------------------------------------------------------------
// Quadrature oracle

/// Which moment integral to evaluate numerically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleTarget {
    B { k: u32, l1: f64, l2: f64 },
    C { j: u32, k: u32, l1: f64 },
    Diagonal { k: u32, l1: f64 },
}

fn decay_scale(fam: &KernelFamily) -> f64 {
    match fam {
        KernelFamily::BetaScaled(b) => b.to_f64().unwrap().min(1.0),
        KernelFamily::Twisted(base, _) => decay_scale(base),
        _ => 1.0,
    }
}

/// Numerical value of a moment integral by adaptive Gauss-Kronrod.
pub fn quadrature_oracle(fam: &KernelFamily, target: OracleTarget) -> Result<f64, KernelError> {
    quadrature_oracle_with(fam, target, QuadOptions::default())
}

pub fn quadrature_oracle_with(fam: &KernelFamily, target: OracleTarget, opts: QuadOptions) -> Result<f64, KernelError> {
    let scale = decay_scale(fam);
    let mut twist_breaks = Vec::new();
    if let KernelFamily::Twisted(_, f) = fam {
        f.breakpoints(&mut twist_breaks);
    }
    match target {
        OracleTarget::B { k, l1, l2 } => {
            let upper = l1 + l2 + 160.0 / scale;
            let mut breaks = vec![(l1 - l2).abs(), l1 + l2];
            breaks.extend(&twist_breaks);
            let mut err = None;
            let v = integrate_pieces(
                |l| match fam.eval_b(l1, l2, l) {
                    Ok(b) => b * l.powi(2 * k as i32 + 1),
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                },
                0.0,
                upper,
                &breaks,
                opts,
            )?;
            err.map_or(Ok(v), Err)
        }
        OracleTarget::Diagonal { k, l1 } => {
            let upper = l1 + 160.0 / scale;
            let mut breaks = vec![l1 / 2.0];
            breaks.extend(&twist_breaks);
            let mut err = None;
            let v = integrate_pieces(
                |l| match fam.eval_c(l1, l, l) {
                    Ok(c) => c * l.powi(2 * k as i32 + 1),
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                },
                0.0,
                upper,
                &breaks,
                opts,
            )?;
            err.map_or(Ok(v), Err)
        }
        OracleTarget::C { j, k, l1 } => {
            let upper = l1 + 160.0 / scale;
            let mut err: Option<KernelError> = None;
            let mut outer_breaks = vec![l1];
            outer_breaks.extend(&twist_breaks);
            let v = integrate_pieces(
                |l| {
                    let mut breaks = vec![l1 - l];
                    breaks.extend(&twist_breaks);
                    // the outer weight multiplies the inner error
                    let weight = (1.0 + l).powi(2 * j as i32 + 1);
                    let inner_opts = QuadOptions { abs_tol: opts.abs_tol * 1e-2 / weight, ..opts };
                    let inner = integrate_pieces(
                        |lp| match fam.eval_c(l1, l, lp) {
                            Ok(c) => c * lp.powi(2 * k as i32 + 1),
                            Err(e) => {
                                err = Some(e);
                                0.0
                            }
                        },
                        0.0,
                        upper,
                        &breaks,
                        inner_opts,
                    );
                    match inner {
                        Ok(x) => x * l.powi(2 * j as i32 + 1),
                        Err(e) => {
                            err = Some(e.into());
                            f64::NAN
                        }
                    }
                },
                0.0,
                upper,
                &outer_breaks,
                opts,
            );
            if let Some(e) = err {
                return Err(e);
            }
            Ok(v?)
        }
    }
}
