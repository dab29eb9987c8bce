//! Classical and quantum cost formulas with exact exponent algebra.
//!
//! Every cost is a product of powers of the bases `M, d, L, d+L, ε, max(L,d),
//! n₀², Λ` whose exponents are rational polynomials in `d, L, b` and `1/r`.
//! Constants are set to 1 and polylogarithmic factors are dropped.
//! Crossovers and thresholds are exact ratios; numeric values are produced
//! from a prime factorisation of the bases so equalities can be checked exactly.

use crate::error::{Error, Result};
use crate::grid::Kind;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

// ---------------------------------------------------------------------------
// exponent expressions

/// Exponents of `d, L, b, r` in one monomial; `r` may be negative.
type Mono = [i32; 4];

const VARS: [&str; 4] = ["d", "L", "b", "r"];

/// Polynomial in `d, L, b, r^{±1}` with rational coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Expr {
    terms: BTreeMap<Mono, BigRational>,
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl Expr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut e = Self::zero();
        e.add_term([0; 4], c);
        e
    }

    pub fn int(n: i64) -> Self {
        Self::constant(rat(n))
    }

    fn var(i: usize) -> Self {
        let mut m = [0; 4];
        m[i] = 1;
        let mut e = Self::zero();
        e.add_term(m, BigRational::one());
        e
    }

    fn add_term(&mut self, m: Mono, c: BigRational) {
        let entry = self.terms.entry(m).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &o.terms {
            out.add_term(*m, c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        Self { terms: self.terms.iter().map(|(m, c)| (*m, -c.clone())).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = Self::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &o.terms {
                let m = [ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2], ma[3] + mb[3]];
                out.add_term(m, ca * cb);
            }
        }
        out
    }

    /// Division by a single monomial (a number, `r`, or a product of such).
    pub fn div(&self, o: &Self) -> Result<Self> {
        if o.terms.len() != 1 {
            return Err(Error::Config(format!("cannot divide by the polynomial `{o}`")));
        }
        let (m, c) = o.terms.iter().next().unwrap();
        if m[0] != 0 || m[1] != 0 || m[2] != 0 {
            return Err(Error::Config(format!("division by `{o}` would leave a rational function")));
        }
        let inv = Self { terms: [([0, 0, 0, -m[3]], c.recip())].into_iter().collect() };
        Ok(self.mul(&inv))
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        self.mul(&Self::constant(c.clone()))
    }

    pub fn parse(s: &str) -> Result<Self> {
        let toks = tokenize(s)?;
        let mut p = Parser { toks, pos: 0, src: s };
        let e = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(Error::Config(format!("trailing input in `{s}`")));
        }
        Ok(e)
    }

    /// Exact value at rational `d, L, b` and integer `r >= 1`.
    pub fn eval_exact(&self, at: &Point) -> BigRational {
        let mut s = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (i, v) in [&at.d, &at.l, &at.b, &at.r].iter().enumerate() {
                t *= pow_rat(v, m[i]);
            }
            s += t;
        }
        s
    }

    pub fn eval(&self, d: f64, l: f64, b: f64, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                c.to_f64().unwrap_or(f64::NAN)
                    * d.powi(m[0])
                    * l.powi(m[1])
                    * b.powi(m[2])
                    * r.powi(m[3])
            })
            .sum()
    }

    /// Canonical text: terms in descending monomial order.
    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

fn pow_rat(v: &BigRational, e: i32) -> BigRational {
    if e >= 0 {
        num_traits::pow(v.clone(), e as usize)
    } else {
        num_traits::pow(v.recip(), (-e) as usize)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            if k == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, "{}", if neg { " - " } else { " + " })?;
            }
            let mut num: Vec<String> = Vec::new();
            let mut den: Vec<String> = Vec::new();
            for (i, name) in VARS.iter().enumerate() {
                let p = m[i];
                let s = if p.abs() == 1 { name.to_string() } else { format!("{name}^{}", p.abs()) };
                if p > 0 {
                    num.push(s);
                } else if p < 0 {
                    den.push(s);
                }
            }
            let numer = a.numer().clone();
            let denom = a.denom().clone();
            if !denom.is_one() {
                den.insert(0, denom.to_string());
            }
            if !numer.is_one() || num.is_empty() {
                num.insert(0, numer.to_string());
            }
            write!(f, "{}", num.join("*"))?;
            if !den.is_empty() {
                write!(f, "/{}", den.join("/"))?;
            }
        }
        Ok(())
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.canonical())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigRational),
    Var(usize),
    Op(char),
}

fn tokenize(s: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let cs: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let st = i;
            while i < cs.len() && cs[i].is_ascii_digit() {
                i += 1;
            }
            let n: String = cs[st..i].iter().collect();
            out.push(Tok::Num(BigRational::from_integer(n.parse::<BigInt>().unwrap())));
        } else if "+-*/()^".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if let Some(k) = VARS.iter().position(|v| v.starts_with(c)) {
            out.push(Tok::Var(k));
            i += 1;
        } else {
            return Err(Error::Config(format!("unexpected `{c}` in exponent `{s}`")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn err(&self) -> Error {
        Error::Config(format!("cannot parse exponent `{}`", self.src))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let t = self.term()?;
            e = if c == '+' { e.add(&t) } else { e.sub(&t) };
        }
        Ok(e)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            match self.peek().cloned() {
                Some(Tok::Op('*')) => {
                    self.pos += 1;
                    e = e.mul(&self.unary()?);
                }
                Some(Tok::Op('/')) => {
                    self.pos += 1;
                    e = e.div(&self.unary()?)?;
                }
                // implicit product such as `2r` or `2(d+1)`
                Some(Tok::Var(_)) | Some(Tok::Op('(')) => e = e.mul(&self.power()?),
                _ => return Ok(e),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    /// `primary ^ integer`, binding tighter than `*` and `/`.
    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.peek() != Some(&Tok::Op('^')) {
            return Ok(base);
        }
        self.pos += 1;
        let n = match self.peek().cloned() {
            Some(Tok::Num(n)) if n.is_integer() => n.to_integer(),
            _ => return Err(self.err()),
        };
        self.pos += 1;
        let n: u32 = n.try_into().map_err(|_| self.err())?;
        let mut e = Expr::int(1);
        for _ in 0..n {
            e = e.mul(&base);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr> {
        let t = self.peek().cloned().ok_or_else(|| self.err())?;
        self.pos += 1;
        match t {
            Tok::Num(n) => Ok(Expr::constant(n)),
            Tok::Var(k) => Ok(Expr::var(k)),
            Tok::Op('(') => {
                let e = self.expr()?;
                match self.peek() {
                    Some(Tok::Op(')')) => {
                        self.pos += 1;
                        Ok(e)
                    }
                    _ => Err(self.err()),
                }
            }
            _ => Err(self.err()),
        }
    }
}

/// Values substituted into exponent expressions.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub d: BigRational,
    pub l: BigRational,
    pub b: BigRational,
    pub r: BigRational,
}

impl Point {
    pub fn new(d: u32, l: u32, b: f64, r: u32) -> Result<Self> {
        Ok(Self { d: rat(d as i64), l: rat(l as i64), b: decimal_rational(b)?, r: rat(r as i64) })
    }
}

/// Exact rational from the shortest decimal representation of `x`.
pub fn decimal_rational(x: f64) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(Error::Config(format!("{x} is not finite")));
    }
    let s = format!("{x}");
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s.as_str()),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    let digits: BigInt = format!("{int}{frac}").parse().map_err(|_| Error::Config(format!("bad number {s}")))?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    let q = BigRational::new(digits, den);
    Ok(if neg { -q } else { q })
}

// ---------------------------------------------------------------------------
// exact powers

/// `Π pᵢ^{eᵢ}` with rational exponents over factor bases (primes, or an
/// unfactored remainder when trial division gives up).
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ExactPow {
    factors: BTreeMap<BigUint, BigRational>,
}

const TRIAL_LIMIT: u64 = 2_000_000;

fn factorize(mut n: BigUint) -> Vec<(BigUint, u32)> {
    let mut out = Vec::new();
    let mut p: u64 = 2;
    while p <= TRIAL_LIMIT {
        let bp = BigUint::from(p);
        if &bp * &bp > n {
            break;
        }
        let mut k = 0;
        while (&n % &bp).is_zero() {
            n /= &bp;
            k += 1;
        }
        if k > 0 {
            out.push((bp, k));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > BigUint::one() {
        out.push((n, 1));
    }
    out
}

impl ExactPow {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn from_rational(q: &BigRational) -> Result<Self> {
        if !q.is_positive() {
            return Err(Error::Config(format!("cost base {q} must be positive")));
        }
        let mut out = Self::one();
        let (n, d) = (q.numer().to_biguint().unwrap(), q.denom().to_biguint().unwrap());
        for (p, k) in factorize(n) {
            out.mul_factor(p, rat(k as i64));
        }
        for (p, k) in factorize(d) {
            out.mul_factor(p, rat(-(k as i64)));
        }
        Ok(out)
    }

    fn mul_factor(&mut self, p: BigUint, e: BigRational) {
        let entry = self.factors.entry(p.clone()).or_insert_with(BigRational::zero);
        *entry += e;
        if entry.is_zero() {
            self.factors.remove(&p);
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (p, e) in &o.factors {
            out.mul_factor(p.clone(), e.clone());
        }
        out
    }

    pub fn pow(&self, e: &BigRational) -> Self {
        if e.is_zero() {
            return Self::one();
        }
        Self { factors: self.factors.iter().map(|(p, x)| (p.clone(), x * e)).collect() }
    }

    pub fn recip(&self) -> Self {
        self.pow(&rat(-1))
    }

    pub fn div(&self, o: &Self) -> Self {
        self.mul(&o.recip())
    }

    pub fn log10(&self) -> f64 {
        self.factors
            .iter()
            .map(|(p, e)| e.to_f64().unwrap_or(f64::NAN) * p.to_f64().unwrap_or(f64::INFINITY).log10())
            .sum()
    }

    /// Floating value; `inf` or `0` outside the `f64` range (use [`Self::log10`]).
    pub fn to_f64(&self) -> f64 {
        10f64.powf(self.log10())
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }
}

// ---------------------------------------------------------------------------
// power products over named bases

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Base {
    M,
    D,
    L,
    DPlusL,
    /// `ε` itself (costs carry negative exponents).
    Eps,
    MaxLD,
    N0Sq,
    Lambda,
}

impl Base {
    fn symbol(self) -> &'static str {
        match self {
            Base::M => "M",
            Base::D => "d",
            Base::L => "L",
            Base::DPlusL => "(d+L)",
            Base::Eps => "eps",
            Base::MaxLD => "max(L,d)",
            Base::N0Sq => "n0^2",
            Base::Lambda => "Lambda",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PowerProduct {
    pub factors: BTreeMap<Base, Expr>,
}

impl PowerProduct {
    pub fn one() -> Self {
        Self::default()
    }

    /// From `(base, exponent text)` pairs; panics on a malformed exponent.
    pub fn of(spec: &[(Base, &str)]) -> Self {
        let mut out = Self::one();
        for (b, e) in spec {
            out.mul_factor(*b, &Expr::parse(e).expect("built-in exponent"));
        }
        out
    }

    fn mul_factor(&mut self, b: Base, e: &Expr) {
        let cur = self.factors.remove(&b).unwrap_or_default().add(e);
        if !cur.is_zero() {
            self.factors.insert(b, cur);
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (b, e) in &o.factors {
            out.mul_factor(*b, e);
        }
        out
    }

    pub fn recip(&self) -> Self {
        Self { factors: self.factors.iter().map(|(b, e)| (*b, e.neg())).collect() }
    }

    pub fn div(&self, o: &Self) -> Self {
        self.mul(&o.recip())
    }

    pub fn exponent(&self, b: Base) -> Expr {
        self.factors.get(&b).cloned().unwrap_or_default()
    }

    /// Replace `base^e` by `replacement^{e}` (exponents multiply).
    pub fn substitute(&self, b: Base, replacement: &PowerProduct) -> Self {
        let mut out = self.clone();
        if let Some(e) = out.factors.remove(&b) {
            for (rb, re) in &replacement.factors {
                out.mul_factor(*rb, &re.mul(&e));
            }
        }
        out
    }

    pub fn exact(&self, bases: &BaseValues, at: &Point) -> Result<ExactPow> {
        let mut out = ExactPow::one();
        for (b, e) in &self.factors {
            let v = bases.get(*b)?;
            out = out.mul(&ExactPow::from_rational(&v)?.pow(&e.eval_exact(at)));
        }
        Ok(out)
    }
}

impl fmt::Display for PowerProduct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self.factors.iter().map(|(b, e)| format!("{}^({})", b.symbol(), e)).collect();
        write!(f, "{}", parts.join(" * "))
    }
}

/// Numeric values of the bases, as exact rationals.
#[derive(Clone, Debug, Default)]
pub struct BaseValues {
    values: BTreeMap<Base, BigRational>,
}

impl BaseValues {
    pub fn from_params(p: &CostParams) -> Result<Self> {
        let mut v = BTreeMap::new();
        v.insert(Base::M, rat(p.m as i64));
        v.insert(Base::D, rat(p.d as i64));
        v.insert(Base::L, rat(p.l as i64));
        v.insert(Base::DPlusL, rat((p.d + p.l) as i64));
        v.insert(Base::Eps, decimal_rational(p.epsilon)?);
        v.insert(Base::MaxLD, rat(p.d.max(p.l) as i64));
        v.insert(Base::N0Sq, decimal_rational(p.n0_sq)?);
        v.insert(Base::Lambda, decimal_rational(p.lambda)?);
        Ok(Self { values: v })
    }

    fn get(&self, b: Base) -> Result<BigRational> {
        self.values.get(&b).cloned().ok_or_else(|| Error::Config(format!("no value for {}", b.symbol())))
    }
}

// ---------------------------------------------------------------------------
// parameters and formulas

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub kind: Kind,
    pub m: u64,
    pub l: u32,
    pub d: u32,
    pub epsilon: f64,
    pub r: u32,
    /// `n₀²Λ = N^b`.
    #[serde(default)]
    pub b: f64,
    #[serde(default = "one_f64")]
    pub n0_sq: f64,
    #[serde(default = "one_f64")]
    pub lambda: f64,
    #[serde(default = "one_f64")]
    pub sigma0: f64,
    /// Quantum state error, kept apart from the discretisation error `ε`.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Measured overrides for the original-equation sparsity and condition number.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default = "one_f64")]
    pub hbar: f64,
}

fn one_f64() -> f64 {
    1.0
}

fn default_eta() -> f64 {
    0.01
}

impl CostParams {
    pub fn new(kind: Kind, m: u64, l: u32, d: u32, epsilon: f64, r: u32) -> Self {
        Self {
            kind,
            m,
            l,
            d,
            epsilon,
            r,
            b: 0.0,
            n0_sq: 1.0,
            lambda: 1.0,
            sigma0: 1.0,
            eta: default_eta(),
            kappa: None,
            s: None,
            hbar: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.l == 0 || self.d == 0 || self.r == 0 {
            return Err(Error::Config("M, L, d and r must be positive".into()));
        }
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("n0_sq", self.n0_sq),
            ("lambda", self.lambda),
            ("sigma0", self.sigma0),
            ("eta", self.eta),
            ("hbar", self.hbar),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return Err(Error::Config(format!("b must be non-negative, got {}", self.b)));
        }
        for (name, v) in [("kappa", self.kappa), ("s", self.s)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} override must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn point(&self) -> Result<Point> {
        Point::new(self.d, self.l, self.b, self.r)
    }
}

/// The symbolic cost formulas of one kind.
#[derive(Clone, Debug, PartialEq)]
pub struct Formulas {
    pub c_can: PowerProduct,
    pub c_mod: PowerProduct,
    pub q: PowerProduct,
    /// Sparsity and condition number of the original-equation system.
    pub s_orig: PowerProduct,
    pub kappa_orig: PowerProduct,
    /// Power of `κ` in the original-equation quantum cost.
    pub kappa_power: u32,
}

pub fn formulas(kind: Kind) -> Formulas {
    use Base::*;
    match kind {
        Kind::Heat => Formulas {
            c_can: PowerProduct::of(&[(M, "1"), (D, "2+(d+2)/r"), (Eps, "-(d+2)/r")]),
            c_mod: PowerProduct::of(&[(L, "2+(d+L+3)/r"), (D, "2+(d+L+3)/r"), (Eps, "-(d+L+3)/r")]),
            q: PowerProduct::of(&[(N0Sq, "1"), (Lambda, "1"), (L, "4+9/r"), (D, "4+9/r"), (Eps, "-1-9/r")]),
            s_orig: PowerProduct::of(&[(D, "1")]),
            kappa_orig: PowerProduct::of(&[(D, "2/r"), (Eps, "-2/r")]),
            kappa_power: 3,
        },
        Kind::Boltzmann => Formulas {
            c_can: PowerProduct::of(&[(M, "1"), (D, "1+(2d+1)/r"), (Eps, "-(2d+1)/r")]),
            c_mod: PowerProduct::of(&[
                (L, "(2d+L+1)/r"),
                (D, "(2d+L+1)/r"),
                (Eps, "-(2d+L+1)/r"),
                (MaxLD, "1"),
            ]),
            q: PowerProduct::of(&[
                (N0Sq, "1"),
                (Lambda, "1"),
                (L, "1+(3+d)/r"),
                (D, "(3+d)/r"),
                (DPlusL, "3"),
                (Eps, "-1-(3+d)/r"),
            ]),
            s_orig: PowerProduct::of(&[(D, "d/r"), (Eps, "-d/r")]),
            kappa_orig: PowerProduct::of(&[(D, "1+1/r"), (Eps, "-1/r")]),
            kappa_power: 3,
        },
        Kind::Advection => Formulas {
            c_can: PowerProduct::of(&[(M, "1"), (D, "2+(d+1)/r"), (Eps, "-(d+1)/r")]),
            c_mod: PowerProduct::of(&[(L, "2+(d+2L+3)/r"), (D, "2+(d+2L+3)/r"), (Eps, "-(d+2L+3)/r")]),
            q: PowerProduct::of(&[(N0Sq, "1"), (Lambda, "1"), (L, "4+9/r"), (D, "4+9/r"), (Eps, "-1-9/r")]),
            s_orig: PowerProduct::of(&[(D, "1")]),
            kappa_orig: PowerProduct::of(&[(D, "1+1/r"), (Eps, "-1/r")]),
            kappa_power: 3,
        },
        Kind::Schrodinger => Formulas {
            c_can: PowerProduct::of(&[(M, "1"), (D, "2+(d+2)/r"), (Eps, "-(d+2)/r")]),
            c_mod: PowerProduct::of(&[(DPlusL, "2+(d+2L+2)/r"), (Eps, "-(d+2L+2)/r")]),
            q: PowerProduct::of(&[(N0Sq, "1"), (Lambda, "1"), (DPlusL, "4+6/r"), (Eps, "-1-6/r")]),
            s_orig: PowerProduct::of(&[(D, "1")]),
            kappa_orig: PowerProduct::of(&[(D, "2/r"), (Eps, "-2/r")]),
            // the unitary case is solved by the adiabatic route, linear in κ
            kappa_power: 1,
        },
    }
}

impl Formulas {
    /// `M · s · κ^k · n₀²Λ / ε`.
    pub fn q_orig(&self) -> PowerProduct {
        let mut k = PowerProduct::one();
        for _ in 0..self.kappa_power {
            k = k.mul(&self.kappa_orig);
        }
        PowerProduct::of(&[(Base::M, "1"), (Base::N0Sq, "1"), (Base::Lambda, "1"), (Base::Eps, "-1")])
            .mul(&self.s_orig)
            .mul(&k)
    }

    /// `C_mod / (C_can / M)`.
    pub fn crossover(&self) -> PowerProduct {
        let per_sample = self.c_can.div(&PowerProduct::of(&[(Base::M, "1")]));
        self.c_mod.div(&per_sample)
    }

    /// The `M` at which `Q = Q_orig`.
    pub fn threshold(&self) -> PowerProduct {
        let per_sample = self.q_orig().div(&PowerProduct::of(&[(Base::M, "1")]));
        self.q.div(&per_sample)
    }
}

/// Crossover sample counts as printed alongside the advantage table.
pub fn printed_crossover(kind: Kind) -> PowerProduct {
    use Base::*;
    match kind {
        Kind::Heat => PowerProduct::of(&[(L, "2+(d+L+3)/r"), (D, "(L+1)/3"), (Eps, "-(L+1)/3")]),
        Kind::Boltzmann => PowerProduct::of(&[(L, "(2d+L+1)/r"), (MaxLD, "1"), (D, "L/r-1"), (Eps, "-L/r")]),
        Kind::Advection => PowerProduct::of(&[(L, "(d+2L+3)/r+2"), (D, "(2L+2)/r"), (Eps, "-(2L+2)/r")]),
        Kind::Schrodinger => PowerProduct::of(&[(DPlusL, "(d+2L+2)/r+2"), (D, "-(d+2)/r-2"), (Eps, "-2L/r")]),
    }
}

/// Thresholds for `Q < Q_orig` as printed, rewritten over the bases.
pub fn printed_threshold(kind: Kind) -> PowerProduct {
    use Base::*;
    match kind {
        Kind::Heat => PowerProduct::of(&[(L, "4+9/r"), (D, "3+3/r"), (Eps, "-3/r")]),
        Kind::Boltzmann => PowerProduct::of(&[(L, "1+(3+d)/r"), (D, "2/r-1"), (Eps, "-2/r-1")]),
        Kind::Advection => PowerProduct::of(&[(L, "4+9/r"), (D, "2+8/r"), (Eps, "-8/r")]),
        Kind::Schrodinger => PowerProduct::of(&[(DPlusL, "4+6/r"), (D, "-1-2/r"), (Eps, "-4/r")]),
    }
}

// ---------------------------------------------------------------------------
// reports

/// A cost as a float and its base-10 logarithm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostValue {
    pub value: f64,
    pub log10: f64,
}

impl CostValue {
    fn from_exact(e: &ExactPow) -> Self {
        Self { value: e.to_f64(), log10: e.log10() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalCosts {
    pub c_can: ExactPow,
    pub c_mod: ExactPow,
    pub m_star: ExactPow,
    pub c_min: ExactPow,
    pub canonical_wins: bool,
}

pub fn classical_costs(p: &CostParams) -> Result<ClassicalCosts> {
    p.validate()?;
    let f = formulas(p.kind);
    let bv = BaseValues::from_params(p)?;
    let at = p.point()?;
    let c_can = f.c_can.exact(&bv, &at)?;
    let c_mod = f.c_mod.exact(&bv, &at)?;
    let m_star = f.crossover().exact(&bv, &at)?;
    let canonical_wins = c_can.log10() <= c_mod.log10();
    let c_min = if canonical_wins { c_can.clone() } else { c_mod.clone() };
    Ok(ClassicalCosts { c_can, c_mod, m_star, c_min, canonical_wins })
}

pub fn quantum_cost_phase(p: &CostParams) -> Result<ExactPow> {
    p.validate()?;
    formulas(p.kind).q.exact(&BaseValues::from_params(p)?, &p.point()?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OriginalCost {
    pub q_orig: ExactPow,
    /// `M` above which the phase-space cost is lower.
    pub threshold: ExactPow,
}

pub fn quantum_cost_original(p: &CostParams) -> Result<OriginalCost> {
    p.validate()?;
    let f = formulas(p.kind);
    let bv = BaseValues::from_params(p)?;
    let at = p.point()?;
    let mut s = f.s_orig.exact(&bv, &at)?;
    let mut kappa = f.kappa_orig.exact(&bv, &at)?;
    if let Some(v) = p.s {
        s = ExactPow::from_rational(&decimal_rational(v)?)?;
    }
    if let Some(v) = p.kappa {
        kappa = ExactPow::from_rational(&decimal_rational(v)?)?;
    }
    let rest = PowerProduct::of(&[(Base::M, "1"), (Base::N0Sq, "1"), (Base::Lambda, "1"), (Base::Eps, "-1")])
        .exact(&bv, &at)?;
    let q_orig = rest.mul(&s).mul(&kappa.pow(&rat(f.kappa_power as i64)));
    let q = f.q.exact(&bv, &at)?;
    let m = ExactPow::from_rational(&rat(p.m as i64))?;
    let threshold = q.div(&q_orig.div(&m));
    Ok(OriginalCost { q_orig, threshold })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    BelowCrossover,
    AboveCrossover,
    /// Boltzmann above the crossover with `L > d`.
    AboveCrossoverLGreaterD,
    /// Boltzmann above the crossover with `L < d`.
    AboveCrossoverLLessD,
}

/// `C/Q = M^{γ₁} d^{γ₂} L^{γ₃} (d+L)^{γ₄} (1/ε)^{γ₅}` and the admissible `b` range.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentRow {
    pub kind: Kind,
    pub regime: Regime,
    pub gamma: [Expr; 5],
    pub b_range: (Expr, Expr),
    pub advantage_in: &'static str,
}

impl ExponentRow {
    pub fn eval(&self, d: f64, l: f64, b: f64, r: f64) -> [f64; 5] {
        std::array::from_fn(|i| self.gamma[i].eval(d, l, b, r))
    }
}

fn row(kind: Kind, regime: Regime, g: [&str; 5], b_hi: &str, adv: &'static str) -> Result<ExponentRow> {
    let mut gamma: [Expr; 5] = Default::default();
    for (i, s) in g.iter().enumerate() {
        gamma[i] = Expr::parse(s)?;
    }
    Ok(ExponentRow { kind, regime, gamma, b_range: (Expr::zero(), Expr::parse(b_hi)?), advantage_in: adv })
}

/// The published advantage exponents for a kind and regime.
pub fn advantage_exponents(kind: Kind, regime: Regime) -> Result<ExponentRow> {
    use Regime::*;
    const ME: &str = "M, d, eps";
    const LE: &str = "L, d, eps";
    match (kind, regime) {
        (Kind::Heat, BelowCrossover) => {
            row(kind, regime, ["1", "(d-7-b)/r-1", "-4-(9+b)/r", "0", "(d-7-b)/r"], "d-7-r", ME)
        }
        (Kind::Heat, AboveCrossover) => row(
            kind,
            regime,
            ["0", "(d+L-6-b)/r-2", "(d+L-6-b)/3", "0", "(d+L-6-b)/r-1"],
            "d+L-6-2r",
            LE,
        ),
        (Kind::Boltzmann, BelowCrossover) => row(
            kind,
            regime,
            ["1", "(d-2-b)/r+1", "-1-(3+d+b)/r", "-3", "(d-2-b)/r-1"],
            "d-2-2r",
            ME,
        ),
        (Kind::Boltzmann, AboveCrossoverLGreaterD) => row(
            kind,
            regime,
            ["0", "(d+L-2-b)/r", "(d+L-2-b)/r", "-3", "(d+L-2-b)/r-1"],
            "d+L-2-2r",
            LE,
        ),
        (Kind::Boltzmann, AboveCrossoverLLessD) => row(
            kind,
            regime,
            ["0", "(d+L-2-b)/r+1", "(d+L-2-b)/r-1", "-3", "(d+L-2-b)/r-1"],
            "d+L-2-2r",
            LE,
        ),
        (Kind::Advection, BelowCrossover) => {
            row(kind, regime, ["1", "(d-8-b)/r-2", "-4-9/r", "0", "(d-8-b)/r-1"], "d-8-2r", ME)
        }
        (Kind::Advection, AboveCrossover) => row(
            kind,
            regime,
            ["0", "(d+2L-6-b)/r-2", "(d+2L-6-b)/r-2", "0", "(d+2L-6-b)/r-1"],
            "d+2L-6-2r",
            LE,
        ),
        (Kind::Schrodinger, BelowCrossover) => {
            row(kind, regime, ["1", "(d+2)/r+2", "0", "-4-(6+b)/r", "(d-4-b)/r-1"], "d-4-r", ME)
        }
        (Kind::Schrodinger, AboveCrossover) => {
            row(kind, regime, ["0", "0", "0", "(d+2L-4-b)/r-2", "(d+2L-4-b)/r-1"], "d+2L-4-2r", LE)
        }
        _ => Err(Error::Config(format!("no advantage row for {kind} in regime {regime:?}"))),
    }
}

/// Exponents of `C/Q` derived directly from the formulas with `n₀²Λ = N^b`,
/// `N = (K/ε)^{1/r}` (`K = Ld`, or `d+L` for Schrödinger).
pub fn derived_exponents(kind: Kind, regime: Regime) -> Result<[Expr; 5]> {
    use Regime::*;
    let f = formulas(kind);
    let (c, max_sub) = match (kind, regime) {
        (_, BelowCrossover) => (f.c_can.clone(), None),
        (Kind::Boltzmann, AboveCrossoverLGreaterD) => (f.c_mod.clone(), Some(Base::L)),
        (Kind::Boltzmann, AboveCrossoverLLessD) => (f.c_mod.clone(), Some(Base::D)),
        (Kind::Boltzmann, AboveCrossover) | (_, AboveCrossoverLGreaterD | AboveCrossoverLLessD) => {
            return Err(Error::Config(format!("no advantage row for {kind} in regime {regime:?}")))
        }
        (_, AboveCrossover) => (f.c_mod.clone(), None),
    };
    let mut ratio = c.div(&f.q);
    if let Some(b) = max_sub {
        ratio = ratio.substitute(Base::MaxLD, &PowerProduct::of(&[(b, "1")]));
    }
    let grid = match kind {
        Kind::Schrodinger => PowerProduct::of(&[(Base::DPlusL, "b/r"), (Base::Eps, "-b/r")]),
        _ => PowerProduct::of(&[(Base::L, "b/r"), (Base::D, "b/r"), (Base::Eps, "-b/r")]),
    };
    // n₀²Λ = N^b
    ratio = ratio.substitute(Base::N0Sq, &grid).substitute(Base::Lambda, &PowerProduct::one());
    for b in [Base::N0Sq, Base::Lambda, Base::MaxLD] {
        if ratio.factors.contains_key(&b) {
            return Err(Error::Contract(format!("unexpected residual {} in C/Q", b.symbol())));
        }
    }
    Ok([
        ratio.exponent(Base::M),
        ratio.exponent(Base::D),
        ratio.exponent(Base::L),
        ratio.exponent(Base::DPlusL),
        ratio.exponent(Base::Eps).neg(),
    ])
}

/// Regime of `p` relative to the exact crossover.
pub fn regime_of(p: &CostParams, m_star: &ExactPow) -> Regime {
    let below = (p.m as f64).log10() < m_star.log10();
    match (below, p.kind) {
        (true, _) => Regime::BelowCrossover,
        (false, Kind::Boltzmann) if p.l >= p.d => Regime::AboveCrossoverLGreaterD,
        (false, Kind::Boltzmann) => Regime::AboveCrossoverLLessD,
        (false, _) => Regime::AboveCrossover,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub params: CostParams,
    pub c_can: CostValue,
    pub c_mod: CostValue,
    pub c_min: CostValue,
    pub m_star: CostValue,
    pub q: CostValue,
    pub q_orig: CostValue,
    pub q_vs_qorig_threshold: CostValue,
    pub regime: Regime,
    /// Published exponents evaluated at the parameters.
    pub ratio_exponents: [f64; 5],
    /// Exponents derived from the formulas at the same point.
    pub derived_ratio_exponents: [f64; 5],
    /// `Γ = σ₀ n₀² Λ`.
    pub iof: f64,
    pub constants_unit: bool,
    pub polylog_dropped: bool,
}

pub fn cost_report(p: &CostParams) -> Result<CostReport> {
    let cc = classical_costs(p)?;
    let q = quantum_cost_phase(p)?;
    let orig = quantum_cost_original(p)?;
    let regime = regime_of(p, &cc.m_star);
    let (d, l, b, r) = (p.d as f64, p.l as f64, p.b, p.r as f64);
    let printed = advantage_exponents(p.kind, regime)?.eval(d, l, b, r);
    let derived = derived_exponents(p.kind, regime)?;
    Ok(CostReport {
        params: p.clone(),
        c_can: CostValue::from_exact(&cc.c_can),
        c_mod: CostValue::from_exact(&cc.c_mod),
        c_min: CostValue::from_exact(&cc.c_min),
        m_star: CostValue::from_exact(&cc.m_star),
        q: CostValue::from_exact(&q),
        q_orig: CostValue::from_exact(&orig.q_orig),
        q_vs_qorig_threshold: CostValue::from_exact(&orig.threshold),
        regime,
        ratio_exponents: printed,
        derived_ratio_exponents: std::array::from_fn(|i| derived[i].eval(d, l, b, r)),
        iof: p.sigma0 * p.n0_sq * p.lambda,
        constants_unit: true,
        polylog_dropped: true,
    })
}

/// Reference complexities of the linear-system subroutines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QlspBreakdown {
    /// `s κ³ 𝒩_y² / ε`.
    pub sparse_route: f64,
    /// `𝒩_x² κ / (‖M‖ ε)` with `𝒩_x ≤ κ 𝒩_y / ‖M‖`.
    pub adiabatic_route: f64,
    /// `m σ`, `m = ⌈log₂ size⌉`.
    pub state_prep_gates: u64,
    pub formula_evaluation: bool,
}

pub fn qlsp_reference_costs(
    s: f64,
    kappa: f64,
    ny_sq: f64,
    epsilon: f64,
    matrix_norm: f64,
    sigma: u64,
    state_size: u64,
) -> Result<QlspBreakdown> {
    for (name, v) in [("s", s), ("kappa", kappa), ("N_y^2", ny_sq), ("epsilon", epsilon), ("norm", matrix_norm)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    if state_size == 0 {
        return Err(Error::Config("state size must be positive".into()));
    }
    let m = 64 - (state_size - 1).leading_zeros() as u64;
    let nx_sq = (kappa * kappa * ny_sq) / (matrix_norm * matrix_norm);
    Ok(QlspBreakdown {
        sparse_route: s * kappa.powi(3) * ny_sq / epsilon,
        adiabatic_route: nx_sq * kappa / (matrix_norm * epsilon),
        state_prep_gates: m * sigma,
        formula_evaluation: true,
    })
}

// ---------------------------------------------------------------------------
// scans

pub const SCAN_CAPACITY: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRanges {
    pub m: Vec<u64>,
    pub l: Vec<u32>,
    pub d: Vec<u32>,
    pub epsilon: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub m: u64,
    pub l: u32,
    pub d: u32,
    pub epsilon: f64,
    pub c_min: f64,
    pub q: f64,
    pub q_orig: f64,
    pub winner: &'static str,
}

/// Cartesian scan in `(M, L, d, ε)` order with the other parameters from `base`.
pub fn regime_scan(base: &CostParams, ranges: &ScanRanges) -> Result<Vec<ScanRow>> {
    let sizes = [ranges.m.len(), ranges.l.len(), ranges.d.len(), ranges.epsilon.len()];
    let total = sizes.iter().try_fold(1usize, |acc, s| acc.checked_mul(*s));
    let total = match total {
        Some(t) if t <= SCAN_CAPACITY => t,
        _ => return Err(Error::Capacity(format!("scan of {sizes:?} exceeds {SCAN_CAPACITY} rows"))),
    };
    (0..total)
        .into_par_iter()
        .map(|idx| {
            let ie = idx % sizes[3];
            let id = (idx / sizes[3]) % sizes[2];
            let il = (idx / (sizes[3] * sizes[2])) % sizes[1];
            let im = idx / (sizes[3] * sizes[2] * sizes[1]);
            let mut p = base.clone();
            p.m = ranges.m[im];
            p.l = ranges.l[il];
            p.d = ranges.d[id];
            p.epsilon = ranges.epsilon[ie];
            let cc = classical_costs(&p)?;
            let q = quantum_cost_phase(&p)?;
            let orig = quantum_cost_original(&p)?;
            let (lc, lq, lo) = (cc.c_min.log10(), q.log10(), orig.q_orig.log10());
            let winner = if lc <= lq && lc <= lo {
                "classical"
            } else if lq <= lo {
                "phase_space"
            } else {
                "original"
            };
            Ok(ScanRow {
                m: p.m,
                l: p.l,
                d: p.d,
                epsilon: p.epsilon,
                c_min: cc.c_min.to_f64(),
                q: q.to_f64(),
                q_orig: orig.q_orig.to_f64(),
                winner,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    #[test]
    fn parse_and_print() {
        let e = Expr::parse("(d-7-b)/r-1").unwrap();
        assert_eq!(e, Expr::parse("d/r - 7/r - b/r - 1").unwrap());
        assert_eq!(Expr::parse("d+L-6-2r").unwrap(), Expr::parse("-2*r + L + d - 6").unwrap());
        assert!(Expr::parse("1/(d+1)").is_err());
        assert!(Expr::parse("d+").is_err());
        let back = Expr::parse(&e.canonical()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn decimal_conversion() {
        assert_eq!(decimal_rational(0.1).unwrap(), BigRational::new(1.into(), 10.into()));
        assert_eq!(decimal_rational(-2.5).unwrap(), BigRational::new((-5).into(), 2.into()));
        assert_eq!(decimal_rational(1e-5).unwrap(), BigRational::new(1.into(), 100000.into()));
    }

    #[test]
    fn heat_classical_example() {
        let p = CostParams::new(Kind::Heat, 10, 1, 1, 0.1, 1);
        let c = classical_costs(&p).unwrap();
        assert!(close(c.c_can.to_f64(), 1e4));
        assert!(close(c.c_mod.to_f64(), 1e5));
        assert!(close(c.m_star.to_f64(), 100.0));
        assert!(close(c.c_min.to_f64(), 1e4));
    }

    #[test]
    fn crossover_is_exact() {
        let mut p = CostParams::new(Kind::Heat, 100, 1, 1, 0.1, 1);
        let c = classical_costs(&p).unwrap();
        assert_eq!(c.c_can, c.c_mod);
        p.m = 7;
        p.l = 3;
        p.d = 2;
        p.r = 2;
        let c = classical_costs(&p).unwrap();
        let m = ExactPow::from_rational(&rat(7)).unwrap();
        assert_eq!(c.c_can.div(&m).mul(&c.m_star), c.c_mod);
    }

    #[test]
    fn boltzmann_can_example() {
        let p = CostParams::new(Kind::Boltzmann, 1, 1, 1, 0.1, 1);
        assert!(close(classical_costs(&p).unwrap().c_can.to_f64(), 1e3));
    }

    #[test]
    fn quantum_examples() {
        let p = CostParams::new(Kind::Heat, 1, 1, 1, 0.1, 1);
        assert!(close(quantum_cost_phase(&p).unwrap().to_f64(), 1e10));
        let p = CostParams::new(Kind::Schrodinger, 1, 1, 1, 0.1, 1);
        assert!(close(quantum_cost_phase(&p).unwrap().to_f64(), 8.0 * 20f64.powi(7)));
    }

    #[test]
    fn heat_threshold_example() {
        let p = CostParams::new(Kind::Heat, 1, 1, 1, 0.1, 1);
        assert!(close(quantum_cost_original(&p).unwrap().threshold.to_f64(), 1e3));
    }

    #[test]
    fn table_rows() {
        let r = advantage_exponents(Kind::Heat, Regime::BelowCrossover).unwrap();
        assert_eq!(r.eval(9.0, 1.0, 0.0, 1.0), [1.0, 1.0, -13.0, 0.0, 2.0]);
        let r = advantage_exponents(Kind::Advection, Regime::AboveCrossover).unwrap();
        assert!(r.gamma[0].is_zero());
        let r = advantage_exponents(Kind::Schrodinger, Regime::BelowCrossover).unwrap();
        assert!(r.gamma[2].is_zero());
        assert!(advantage_exponents(Kind::Heat, Regime::AboveCrossoverLLessD).is_err());
    }

    #[test]
    fn qlsp_examples() {
        let q = qlsp_reference_costs(1.0, 1.0, 1.0, 1.0, 1.0, 16, 1 << 10).unwrap();
        assert_eq!(q.sparse_route, 1.0);
        assert_eq!(q.state_prep_gates, 160);
        let q2 = qlsp_reference_costs(1.0, 2.0, 1.0, 1.0, 1.0, 16, 1 << 10).unwrap();
        assert_eq!(q2.sparse_route, 8.0);
    }

    #[test]
    fn scan_capacity_guard() {
        let base = CostParams::new(Kind::Heat, 1, 1, 1, 0.1, 1);
        let ranges = ScanRanges {
            m: (1..=1000).collect(),
            l: (1..=100).collect(),
            d: (1..=100).collect(),
            epsilon: vec![0.1],
        };
        assert!(matches!(regime_scan(&base, &ranges), Err(Error::Capacity(_))));
    }
}
