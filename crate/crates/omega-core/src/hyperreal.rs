//! Truncated generalized Laurent series in a distinguished infinitesimal.
//!
//! A [`Hyperreal`] is a finite sum of terms `c * w^q` with rational exponents
//! `q`, trusted modulo terms of order `>= valid_order`. The infinitesimal `w`
//! and its unlimited reciprocal `W = w^-1` (written `Hyperreal::big_omega`)
//! are the computable stand-ins for the hyperreals used by the omega-sum
//! machinery. Coefficients are exact rationals unless any float enters, in
//! which case the whole value is float-mode and equality checks downstream
//! become tolerance checks.
//!
//! Truncation is never allowed to forge claims: the validity order is
//! propagated pessimistically through every operation, and questions the
//! truncated data cannot answer (comparisons, classification, standard
//! parts) surface as explicit `Indeterminate`/error outcomes.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_rational::Ratio;
use num_traits::{Float, One};

use crate::real::Real;

/// Exponents and validity orders are exact rationals.
pub type Order = Ratio<i64>;

/// Shorthand for an integer [`Order`].
pub fn ord(n: i64) -> Order {
    Ratio::from_integer(n)
}

/// Maximum number of stored terms; beyond this the series is truncated and
/// the validity order lowered accordingly.
pub const MAX_TERMS: usize = 64;

/// Default validity depth used by constructors throughout the crate.
pub const DEFAULT_VALIDITY: i64 = 8;

/// Per-coefficient tolerance once a value is float-mode.
pub const FLOAT_COEFF_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoeffMode {
    Exact,
    Float,
}

/// Order-of-magnitude classification relative to the reals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HClass {
    /// Exactly zero (within validity). By convention zero is not an
    /// infinitesimal.
    Zero,
    /// Nonzero with positive leading exponent.
    Infinitesimal,
    /// Leading exponent zero: finite and not infinitely small.
    Appreciable,
    /// Negative leading exponent: larger than every real.
    Unlimited,
    /// The stored terms cannot answer: everything below the validity order
    /// vanished and the validity order is too shallow to certify zero.
    Indeterminate,
}

impl fmt::Display for HClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HClass::Zero => "zero",
            HClass::Infinitesimal => "infinitesimal",
            HClass::Appreciable => "appreciable",
            HClass::Unlimited => "unlimited",
            HClass::Indeterminate => "indeterminate",
        };
        f.write_str(s)
    }
}

/// Three-valued comparison; truncation may make the answer unknowable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    Less,
    Greater,
    /// The difference has no surviving term and the joint validity is deep
    /// enough to certify at least "infinitely close".
    EqualWithinValidity,
    /// The difference vanished but the joint validity order is nonpositive,
    /// so nothing is certified.
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HyperrealError {
    /// Constructor rejected a NaN or infinite coefficient.
    NonFiniteCoefficient,
    /// Constructor saw the same exponent twice.
    DuplicateExponent(Order),
    /// `invert` on a value indistinguishable from zero at its validity.
    NotInvertible,
    /// `standard_part` of an unlimited value.
    NoStandardPart,
    /// `standard_part` of an indeterminate value.
    InsufficientValidity,
}

impl fmt::Display for HyperrealError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperrealError::NonFiniteCoefficient => write!(f, "non-finite float coefficient"),
            HyperrealError::DuplicateExponent(q) => write!(f, "duplicate exponent {}", q),
            HyperrealError::NotInvertible => {
                write!(f, "not invertible: indistinguishable from zero at its validity")
            }
            HyperrealError::NoStandardPart => write!(f, "no standard part: value is unlimited"),
            HyperrealError::InsufficientValidity => {
                write!(f, "insufficient validity to determine a standard part")
            }
        }
    }
}

impl core::error::Error for HyperrealError {}

/// A truncated generalized Laurent series in `w`.
///
/// Invariants (maintained by every constructor and operation):
/// - all stored exponents are strictly below `valid_order`;
/// - no stored coefficient is zero;
/// - at most [`MAX_TERMS`] terms;
/// - all coefficients share the value's [`CoeffMode`].
#[derive(Clone, Debug)]
pub struct Hyperreal {
    terms: BTreeMap<Order, Real>,
    valid_order: Order,
    mode: CoeffMode,
}

impl Hyperreal {
    /// Builds a value from `(exponent, coefficient)` pairs.
    ///
    /// Zero coefficients and terms at or beyond `valid_order` are dropped.
    pub fn make(
        terms: impl IntoIterator<Item = (Order, Real)>,
        valid_order: Order,
    ) -> Result<Self, HyperrealError> {
        let mut map = BTreeMap::new();
        for (exp, coeff) in terms {
            if !coeff.is_finite() {
                return Err(HyperrealError::NonFiniteCoefficient);
            }
            if map.insert(exp, coeff).is_some() {
                return Err(HyperrealError::DuplicateExponent(exp));
            }
        }
        Ok(Self::canonical(map, valid_order))
    }

    fn canonical(terms: BTreeMap<Order, Real>, valid_order: Order) -> Self {
        Self::canonical_mode(terms, valid_order, false)
    }

    /// Canonical form: shared coefficient mode, zeros and out-of-validity
    /// terms dropped, term count capped (capping lowers the validity).
    /// `force_float` carries contamination from operands whose own float
    /// coefficients did not reach the result (e.g. a float-mode zero).
    fn canonical_mode(
        mut terms: BTreeMap<Order, Real>,
        mut valid_order: Order,
        force_float: bool,
    ) -> Self {
        let float = force_float || terms.values().any(|c| !c.is_exact());
        if float {
            for c in terms.values_mut() {
                *c = c.to_float();
            }
        }
        terms.retain(|exp, coeff| *exp < valid_order && !coeff.is_zero());
        while terms.len() > MAX_TERMS {
            let last = *terms.keys().next_back().expect("nonempty");
            terms.remove(&last);
            valid_order = last;
            terms.retain(|exp, _| *exp < valid_order);
        }
        Hyperreal {
            terms,
            valid_order,
            mode: if float { CoeffMode::Float } else { CoeffMode::Exact },
        }
    }

    pub fn zero(valid_order: Order) -> Self {
        Hyperreal {
            terms: BTreeMap::new(),
            valid_order,
            mode: CoeffMode::Exact,
        }
    }

    pub fn one(valid_order: Order) -> Self {
        Self::from_real(Real::one(), valid_order)
    }

    /// Lifts a real scalar: a single term at exponent 0.
    pub fn from_real(value: Real, valid_order: Order) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(ord(0), value);
        Self::canonical(terms, valid_order)
    }

    /// `c * w^exp`.
    pub fn monomial(exp: Order, coeff: Real, valid_order: Order) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(exp, coeff);
        Self::canonical(terms, valid_order)
    }

    /// The distinguished infinitesimal `w`.
    pub fn omega(valid_order: Order) -> Self {
        Self::monomial(ord(1), Real::one(), valid_order)
    }

    /// The unlimited reciprocal `W = 1/w`.
    pub fn big_omega(valid_order: Order) -> Self {
        Self::monomial(ord(-1), Real::one(), valid_order)
    }

    pub fn valid_order(&self) -> Order {
        self.valid_order
    }

    pub fn mode(&self) -> CoeffMode {
        self.mode
    }

    pub fn is_exact(&self) -> bool {
        self.mode == CoeffMode::Exact
    }

    /// True when no term survived (zero within validity).
    pub fn is_zero_value(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (Order, &Real)> {
        self.terms.iter().map(|(&e, c)| (e, c))
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Leading (minimum-exponent) term.
    pub fn leading(&self) -> Option<(Order, &Real)> {
        self.terms.iter().next().map(|(&e, c)| (e, c))
    }

    /// Leading exponent, or the validity order for a value with no terms
    /// (a zero is "of order at least its validity").
    pub fn order_of_magnitude(&self) -> Order {
        self.leading().map(|(e, _)| e).unwrap_or(self.valid_order)
    }

    pub fn coeff(&self, exp: Order) -> Real {
        self.terms.get(&exp).cloned().unwrap_or_else(|| match self.mode {
            CoeffMode::Exact => Real::zero(),
            CoeffMode::Float => Real::Float(0.0),
        })
    }

    /// Forces the value into float mode (coefficients converted).
    pub fn to_float(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(&e, c)| (e, c.to_float()))
            .collect();
        Self::canonical(terms, self.valid_order)
    }

    /// Restricts the validity order (never extends it), dropping terms that
    /// fall out of trust.
    pub fn truncate(&self, valid_order: Order) -> Self {
        let v = self.valid_order.min(valid_order);
        let mut out = self.clone();
        out.valid_order = v;
        out.terms.retain(|exp, _| *exp < v);
        out
    }

    pub fn neg(&self) -> Self {
        let terms = self.terms.iter().map(|(&e, c)| (e, -c.clone())).collect();
        Hyperreal {
            terms,
            valid_order: self.valid_order,
            mode: self.mode,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let valid = self.valid_order.min(other.valid_order);
        let mut terms = self.terms.clone();
        for (&e, c) in &other.terms {
            match terms.remove(&e) {
                Some(prev) => {
                    let s = prev + c.clone();
                    terms.insert(e, s);
                }
                None => {
                    terms.insert(e, c.clone());
                }
            }
        }
        let float = self.mode == CoeffMode::Float || other.mode == CoeffMode::Float;
        Self::canonical_mode(terms, valid, float)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Adds a real scalar. Scalars carry no truncation, so the validity
    /// order is unchanged.
    pub fn add_real(&self, value: &Real) -> Self {
        let mut terms = self.terms.clone();
        let e0 = ord(0);
        let prev = terms.remove(&e0);
        let s = match prev {
            Some(p) => p + value.clone(),
            None => value.clone(),
        };
        terms.insert(e0, s);
        let float = self.mode == CoeffMode::Float || !value.is_exact();
        Self::canonical_mode(terms, self.valid_order, float)
    }

    /// Multiplies by a real scalar; validity unchanged.
    pub fn scale(&self, value: &Real) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(&e, c)| (e, c * value))
            .collect();
        let float = self.mode == CoeffMode::Float || !value.is_exact();
        Self::canonical_mode(terms, self.valid_order, float)
    }

    /// Multiplies by the exact monomial `w^delta`: shifts every exponent and
    /// the validity order by `delta`.
    pub fn shift(&self, delta: Order) -> Self {
        let terms = self.terms.iter().map(|(&e, c)| (e + delta, c.clone())).collect();
        Hyperreal {
            terms,
            valid_order: self.valid_order + delta,
            mode: self.mode,
        }
    }

    /// Cauchy product. The result is trusted to
    /// `min(Vx + ord(y), Vy + ord(x))`: an unlimited factor reduces the
    /// trusted depth, an infinitesimal one deepens it.
    pub fn mul(&self, other: &Self) -> Self {
        let valid = (self.valid_order + other.order_of_magnitude())
            .min(other.valid_order + self.order_of_magnitude());
        let mut terms: BTreeMap<Order, Real> = BTreeMap::new();
        for (&ex, cx) in &self.terms {
            for (&ey, cy) in &other.terms {
                let e = ex + ey;
                if e >= valid {
                    continue;
                }
                let p = cx * cy;
                match terms.remove(&e) {
                    Some(prev) => {
                        terms.insert(e, prev + p);
                    }
                    None => {
                        terms.insert(e, p);
                    }
                }
            }
        }
        let float = self.mode == CoeffMode::Float || other.mode == CoeffMode::Float;
        Self::canonical_mode(terms, valid, float)
    }

    pub fn pow(&self, n: u32) -> Self {
        if n == 0 {
            return Hyperreal::one(self.valid_order);
        }
        let mut acc = self.clone();
        for _ in 1..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// Reciprocal via factoring the leading monomial and expanding the
    /// geometric series to the trusted depth.
    ///
    /// For `x` trusted mod `w^V` with leading exponent `e`, the result is
    /// trusted mod `w^(V - 2e)`.
    pub fn invert(&self) -> Result<Self, HyperrealError> {
        let (e, c) = match self.leading() {
            Some((e, c)) => (e, c.clone()),
            None => return Err(HyperrealError::NotInvertible),
        };
        let c_inv = Real::one() / c;
        // rel = x / (c w^e) = 1 + u with u of positive order.
        let rel = self.shift(-e).scale(&c_inv);
        let u = rel.add_real(&-Real::one());
        let rel_valid = rel.valid_order;
        let mut acc = Hyperreal::one(rel_valid);
        if !u.is_zero_value() {
            let neg_u = u.neg();
            let mut pw = Hyperreal::one(rel_valid);
            for _ in 0..4 * MAX_TERMS {
                pw = pw.mul(&neg_u).truncate(rel_valid);
                if pw.is_zero_value() {
                    break;
                }
                acc = acc.add(&pw);
            }
        }
        Ok(acc.scale(&c_inv).shift(-e))
    }

    /// Order-of-magnitude trichotomy. Zero is not an infinitesimal; a value
    /// whose terms all vanished below a nonpositive validity order is
    /// indeterminate.
    pub fn classify(&self) -> HClass {
        match self.leading() {
            Some((e, _)) => {
                if e > ord(0) {
                    HClass::Infinitesimal
                } else if e == ord(0) {
                    HClass::Appreciable
                } else {
                    HClass::Unlimited
                }
            }
            None => {
                if self.valid_order > ord(0) {
                    HClass::Zero
                } else {
                    HClass::Indeterminate
                }
            }
        }
    }

    /// The unique real infinitely close to a limited value: the exponent-0
    /// coefficient.
    pub fn standard_part(&self) -> Result<Real, HyperrealError> {
        match self.classify() {
            HClass::Zero | HClass::Infinitesimal | HClass::Appreciable => Ok(self.coeff(ord(0))),
            HClass::Unlimited => Err(HyperrealError::NoStandardPart),
            HClass::Indeterminate => Err(HyperrealError::InsufficientValidity),
        }
    }

    /// Sign comparison through the leading term of the difference, with the
    /// float-mode per-coefficient tolerance. Never guesses: a difference
    /// that vanishes below a nonpositive joint validity is reported
    /// indeterminate.
    pub fn compare(&self, other: &Self) -> Comparison {
        self.compare_with_tol(other, FLOAT_COEFF_TOL)
    }

    pub fn compare_with_tol(&self, other: &Self, tol: f64) -> Comparison {
        let diff = self.sub(other);
        let exact = diff.mode == CoeffMode::Exact;
        for (_, c) in diff.terms() {
            let decisive = if exact {
                !c.is_zero()
            } else {
                Float::abs(c.to_f64()) > tol
            };
            if decisive {
                return if c.is_negative() {
                    Comparison::Less
                } else {
                    Comparison::Greater
                };
            }
        }
        if diff.valid_order > ord(0) {
            Comparison::EqualWithinValidity
        } else {
            Comparison::Indeterminate
        }
    }

    /// Term-by-term agreement up to the joint validity: exact equality in
    /// exact mode, per-coefficient tolerance otherwise.
    pub fn agrees_within(&self, other: &Self, tol: f64) -> bool {
        let v = self.valid_order.min(other.valid_order);
        let exact = self.mode == CoeffMode::Exact && other.mode == CoeffMode::Exact;
        let mut exps: Vec<Order> = self
            .terms
            .keys()
            .chain(other.terms.keys())
            .copied()
            .filter(|e| *e < v)
            .collect();
        exps.sort();
        exps.dedup();
        for e in exps {
            let a = self.coeff(e);
            let b = other.coeff(e);
            let ok = if exact {
                a == b
            } else {
                Float::abs(a.to_f64() - b.to_f64()) <= tol
            };
            if !ok {
                return false;
            }
        }
        true
    }

    /// Substitutes a concrete real value for `w` (the finite-`N` check
    /// `w := 1/N`). `None` if some rational-exponent power has no value.
    pub fn eval_at(&self, omega_value: &Real) -> Option<Real> {
        let mut acc = match self.mode {
            CoeffMode::Exact => Real::zero(),
            CoeffMode::Float => Real::Float(0.0),
        };
        for (e, c) in self.terms() {
            let p = if e.is_integer() {
                omega_value.pow_int(*e.numer())?
            } else {
                let exp = num_rational::BigRational::new((*e.numer()).into(), (*e.denom()).into());
                omega_value.pow_rational(&exp)?
            };
            acc = acc + c * &p;
        }
        Some(acc)
    }
}

/// Structural equality: same terms, validity, and mode. Use
/// [`Hyperreal::compare`] or [`Hyperreal::agrees_within`] for the
/// validity-aware notions.
impl PartialEq for Hyperreal {
    fn eq(&self, other: &Self) -> bool {
        self.valid_order == other.valid_order
            && self.mode == other.mode
            && self.terms == other.terms
    }
}

/// Guaranteed order of `sum_{k=1}^{W^d} g_k * M * w^s` where every `g_k` has
/// order at least `q`: the aggregate has order at least `q - d + s`. A
/// positive result certifies the aggregate infinitesimal; `d = s = 1`
/// recovers the bound that an unlimited average of order-`q` infinitesimals
/// keeps order `q`.
pub fn order_sum_bound(term_order: Order, count_degree: i64, scale_degree: i64) -> Order {
    assert!(term_order > ord(0), "term order must be positive");
    assert!(count_degree >= 1, "count degree must be at least 1");
    term_order - ord(count_degree) + ord(scale_degree)
}

fn fmt_exponent(f: &mut fmt::Formatter<'_>, symbol: char, exp: Order) -> fmt::Result {
    if exp == ord(1) {
        write!(f, "{}", symbol)
    } else if exp.is_integer() {
        write!(f, "{}^{}", symbol, exp.numer())
    } else {
        write!(f, "{}^({})", symbol, exp)
    }
}

fn fmt_monomial(f: &mut fmt::Formatter<'_>, exp: Order) -> fmt::Result {
    if exp >= ord(0) {
        fmt_exponent(f, 'w', exp)
    } else {
        fmt_exponent(f, 'W', -exp)
    }
}

impl fmt::Display for Hyperreal {
    /// Literal syntax: ascending exponents, `w` for the infinitesimal, `W`
    /// for its reciprocal, and the validity as a `(mod w^V)` tail, e.g.
    /// `1/3 + 1/2*w + 1/6*w^2 (mod w^8)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            write!(f, "0")?;
        } else {
            for (i, (e, c)) in self.terms().enumerate() {
                let neg = c.is_negative();
                if i == 0 {
                    if neg {
                        write!(f, "-")?;
                    }
                } else if neg {
                    write!(f, " - ")?;
                } else {
                    write!(f, " + ")?;
                }
                let mag = c.abs();
                if e == ord(0) {
                    write!(f, "{}", mag)?;
                } else {
                    let is_unit = matches!(&mag, Real::Exact(r) if r.is_one());
                    if !is_unit {
                        write!(f, "{}*", mag)?;
                    }
                    fmt_monomial(f, e)?;
                }
            }
        }
        write!(f, " (mod ")?;
        fmt_exponent(f, 'w', self.valid_order)?;
        write!(f, ")")
    }
}

// ---------------------------------------------------------------------------
// Literal parsing
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiteralError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for LiteralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "hyperreal literal error at offset {}: {}", self.offset, self.message)
    }
}

impl core::error::Error for LiteralError {}

struct LitParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> LitParser<'a> {
    fn err<T>(&self, message: &str) -> Result<T, LiteralError> {
        Err(LiteralError {
            offset: self.pos,
            message: String::from(message),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> Result<Real, LiteralError> {
        self.skip_ws();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_digit() || *b == b'.')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected a number");
        }
        let text = core::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii");
        let num = parse_decimal(text)
            .ok_or_else(|| LiteralError {
                offset: start,
                message: String::from("malformed number"),
            })?;
        if self.eat(b'/') {
            let denom = self.number()?;
            if denom.is_zero() {
                return self.err("zero denominator");
            }
            return Ok(num / denom);
        }
        Ok(num)
    }

    fn signed_ratio(&mut self) -> Result<Order, LiteralError> {
        let neg = self.eat(b'-');
        let parenthesized = self.eat(b'(');
        let neg = neg || self.eat(b'-');
        let v = self.number()?;
        if parenthesized && !self.eat(b')') {
            return self.err("expected ')'");
        }
        let r = match v.as_exact() {
            Some(r) => r,
            None => return self.err("exponent must be rational"),
        };
        let n = num_traits::ToPrimitive::to_i64(r.numer());
        let d = num_traits::ToPrimitive::to_i64(r.denom());
        match (n, d) {
            (Some(n), Some(d)) => Ok(Order::new(if neg { -n } else { n }, d)),
            _ => self.err("exponent out of range"),
        }
    }

    /// `w`, `W`, `w^3`, `W^2`, `w^(1/2)` -> exponent of the monomial.
    fn monomial(&mut self) -> Result<Order, LiteralError> {
        let sym = self.peek();
        let base = match sym {
            Some(b'w') => ord(1),
            Some(b'W') => ord(-1),
            _ => return self.err("expected 'w' or 'W'"),
        };
        self.pos += 1;
        if self.eat(b'^') {
            let e = self.signed_ratio()?;
            Ok(base * e)
        } else {
            Ok(base)
        }
    }

    fn term(&mut self) -> Result<(Order, Real), LiteralError> {
        match self.peek() {
            Some(b'w') | Some(b'W') => {
                let e = self.monomial()?;
                Ok((e, Real::one()))
            }
            _ => {
                let coeff = self.number()?;
                if self.eat(b'*') {
                    let e = self.monomial()?;
                    Ok((e, coeff))
                } else {
                    Ok((ord(0), coeff))
                }
            }
        }
    }
}

/// Parses the literal syntax emitted by [`Hyperreal`]'s `Display`
/// (`1/3 + 1/2*w - W^2`, optional `(mod w^V)` tail). Terms at the same
/// exponent accumulate. `default_validity` applies when no tail is given.
pub fn parse_literal(text: &str, default_validity: Order) -> Result<Hyperreal, LiteralError> {
    let mut p = LitParser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let mut terms: BTreeMap<Order, Real> = BTreeMap::new();
    let mut validity = default_validity;
    let mut negate = p.eat(b'-');
    loop {
        let (e, c) = p.term()?;
        let c = if negate { -c } else { c };
        let entry = terms.remove(&e);
        terms.insert(
            e,
            match entry {
                Some(prev) => prev + c,
                None => c,
            },
        );
        match p.peek() {
            Some(b'+') => {
                p.pos += 1;
                negate = false;
            }
            Some(b'-') => {
                p.pos += 1;
                negate = true;
            }
            Some(b'(') => {
                // "(mod w^V)" tail
                p.pos += 1;
                p.skip_ws();
                if !p.bytes[p.pos..].starts_with(b"mod") {
                    return p.err("expected 'mod'");
                }
                p.pos += 3;
                match p.peek() {
                    Some(b'w') => {
                        p.pos += 1;
                        validity = if p.eat(b'^') { p.signed_ratio()? } else { ord(1) };
                    }
                    Some(b'W') => {
                        p.pos += 1;
                        validity = if p.eat(b'^') { -p.signed_ratio()? } else { ord(-1) };
                    }
                    _ => return p.err("expected 'w' or 'W'"),
                }
                if !p.eat(b')') {
                    return p.err("expected ')'");
                }
                p.skip_ws();
                if p.pos != p.bytes.len() {
                    return p.err("trailing input after (mod ...)");
                }
                break;
            }
            None => break,
            _ => return p.err("expected '+', '-', or end of literal"),
        }
    }
    for c in terms.values() {
        if !c.is_finite() {
            return Err(LiteralError {
                offset: 0,
                message: String::from("non-finite coefficient"),
            });
        }
    }
    Ok(Hyperreal::canonical(terms, validity))
}

/// Parses an integer or decimal string into an exact rational (decimals are
/// exact: `0.5` is `1/2`).
pub(crate) fn parse_decimal(text: &str) -> Option<Real> {
    use num_bigint::BigInt;
    use num_rational::BigRational;
    if text.is_empty() || text.bytes().filter(|b| *b == b'.').count() > 1 {
        return None;
    }
    match text.split_once('.') {
        None => {
            let n: BigInt = text.parse().ok()?;
            Some(Real::Exact(BigRational::from_integer(n)))
        }
        Some((int, frac)) => {
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            let int: BigInt = if int.is_empty() { BigInt::from(0) } else { int.parse().ok()? };
            let frac_n: BigInt = frac.parse().ok()?;
            let den = num_traits::pow::pow(BigInt::from(10), frac.len());
            Some(Real::Exact(
                BigRational::from_integer(int) + BigRational::new(frac_n, den),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn h(terms: &[(i64, i64)], v: i64) -> Hyperreal {
        Hyperreal::make(
            terms.iter().map(|&(e, c)| (ord(e), Real::from_int(c))),
            ord(v),
        )
        .unwrap()
    }

    #[test]
    fn make_canonicalizes() {
        let x = h(&[(0, 3), (1, 5)], 8);
        assert_eq!(x.to_string(), "3 + 5*w (mod w^8)");
        let z = h(&[(0, 0)], 8);
        assert!(z.is_zero_value());
        let o = h(&[(-1, 1), (2, 0)], 8);
        assert_eq!(o.to_string(), "W (mod w^8)");
        assert_eq!(o.term_count(), 1);
    }

    #[test]
    fn make_rejects_bad_input() {
        let dup = Hyperreal::make(
            [(ord(1), Real::from_int(1)), (ord(1), Real::from_int(2))],
            ord(8),
        );
        assert_eq!(dup.unwrap_err(), HyperrealError::DuplicateExponent(ord(1)));
        let nan = Hyperreal::make([(ord(0), Real::Float(f64::NAN))], ord(8));
        assert_eq!(nan.unwrap_err(), HyperrealError::NonFiniteCoefficient);
    }

    #[test]
    fn add_cancels_and_truncates() {
        let a = h(&[(0, 1), (1, 1)], 8);
        let b = h(&[(0, 1), (1, -1)], 8);
        assert_eq!(a.add(&b).to_string(), "2 (mod w^8)");

        let big = Hyperreal::big_omega(ord(8)).add(&Hyperreal::one(ord(8)));
        assert_eq!(big.to_string(), "W + 1 (mod w^8)");

        // Terms beyond the joint validity are dropped.
        let narrow = h(&[(0, 3)], 2);
        let tail = h(&[(3, 1)], 8);
        assert_eq!(narrow.add(&tail).to_string(), "3 (mod w^2)");
    }

    #[test]
    fn mul_tracks_validity() {
        let v = ord(8);
        let prod = Hyperreal::big_omega(v).mul(&Hyperreal::omega(v));
        assert_eq!(prod.to_string(), "1 (mod w^7)");

        let one_plus = h(&[(0, 1), (1, 1)], 8);
        assert_eq!(
            one_plus.mul(&one_plus).to_string(),
            "1 + 2*w + w^2 (mod w^8)"
        );

        // (2 + w mod w^3) * W = 2W + 1 mod w^2
        let x = h(&[(0, 2), (1, 1)], 3);
        let p = x.mul(&Hyperreal::big_omega(ord(8)));
        assert_eq!(p.to_string(), "2*W + 1 (mod w^2)");
    }

    #[test]
    fn invert_basics() {
        let v = ord(8);
        assert_eq!(Hyperreal::big_omega(v).invert().unwrap().to_string(), "w (mod w^10)");

        let one_plus = h(&[(0, 1), (1, 1)], 8);
        let inv = one_plus.invert().unwrap();
        assert_eq!(
            inv.to_string(),
            "1 - w + w^2 - w^3 + w^4 - w^5 + w^6 - w^7 (mod w^8)"
        );
        // x * x^-1 = 1 within validity
        let prod = one_plus.mul(&inv);
        assert!(prod.agrees_within(&Hyperreal::one(ord(8)), 0.0));

        let omega_plus_one = Hyperreal::big_omega(v).add(&Hyperreal::one(v));
        let inv = omega_plus_one.invert().unwrap();
        assert_eq!(
            inv.to_string(),
            "w - w^2 + w^3 - w^4 + w^5 - w^6 + w^7 - w^8 + w^9 (mod w^10)"
        );

        assert_eq!(
            Hyperreal::zero(ord(8)).invert().unwrap_err(),
            HyperrealError::NotInvertible
        );
    }

    #[test]
    fn classify_and_standard_part() {
        assert_eq!(h(&[(1, 1), (2, -1)], 8).classify(), HClass::Infinitesimal);
        assert_eq!(h(&[(0, 2), (1, 1)], 8).classify(), HClass::Appreciable);
        assert_eq!(h(&[(-1, 1), (0, 3)], 8).classify(), HClass::Unlimited);
        assert_eq!(Hyperreal::zero(ord(8)).classify(), HClass::Zero);
        assert_eq!(Hyperreal::zero(ord(0)).classify(), HClass::Indeterminate);

        let x = h(&[(0, 3), (1, 5), (2, -1)], 8);
        assert_eq!(x.standard_part().unwrap(), Real::from_int(3));
        assert_eq!(Hyperreal::omega(ord(8)).standard_part().unwrap(), Real::zero());
        assert_eq!(
            Hyperreal::big_omega(ord(8)).standard_part().unwrap_err(),
            HyperrealError::NoStandardPart
        );
        assert_eq!(
            Hyperreal::zero(ord(0)).standard_part().unwrap_err(),
            HyperrealError::InsufficientValidity
        );
    }

    #[test]
    fn comparisons() {
        let w = Hyperreal::omega(ord(8));
        let w2 = w.mul(&w);
        assert_eq!(w.compare(&w2), Comparison::Greater);

        let one_plus = h(&[(0, 1), (1, 1)], 8);
        assert_eq!(one_plus.compare(&Hyperreal::one(ord(8))), Comparison::Greater);

        let a = h(&[(0, 1)], 2);
        assert_eq!(a.compare(&a), Comparison::EqualWithinValidity);

        let shallow = Hyperreal::zero(ord(0));
        assert_eq!(shallow.compare(&shallow), Comparison::Indeterminate);
    }

    #[test]
    fn order_bound_examples() {
        assert_eq!(order_sum_bound(ord(1), 1, 1), ord(1));
        assert_eq!(order_sum_bound(ord(2), 1, 1), ord(2));
        // W^2 terms of size w, rescaled by w, can be appreciable.
        assert_eq!(order_sum_bound(ord(1), 2, 1), ord(0));
    }

    #[test]
    fn eval_at_substitutes() {
        let x = h(&[(0, 1), (1, 2), (2, 3)], 8);
        let v = x.eval_at(&Real::from_ratio(1, 10)).unwrap();
        assert_eq!(v, Real::from_ratio(123, 100));
    }

    #[test]
    fn literal_round_trip() {
        for text in [
            "1/3 + 1/2*w + 1/6*w^2 (mod w^8)",
            "W + 1 (mod w^8)",
            "-w (mod w^8)",
            "2*W^2 - 1/2*w^3 (mod w^8)",
            "0 (mod w^8)",
        ] {
            let parsed = parse_literal(text, ord(8)).unwrap();
            assert_eq!(parsed.to_string(), text);
        }
        let defaulted = parse_literal("3 + w^2", ord(5)).unwrap();
        assert_eq!(defaulted.valid_order(), ord(5));
        assert!(parse_literal("3 + + w", ord(8)).is_err());
        assert!(parse_literal("q", ord(8)).is_err());
    }

    #[test]
    fn float_contamination_and_tolerant_compare() {
        let mixed = Hyperreal::make(
            [(ord(0), Real::from_int(1)), (ord(1), Real::Float(0.5))],
            ord(8),
        )
        .unwrap();
        assert_eq!(mixed.mode(), CoeffMode::Float);
        let nearly = Hyperreal::make(
            [(ord(0), Real::Float(1.0 + 1e-13)), (ord(1), Real::Float(0.5))],
            ord(8),
        )
        .unwrap();
        assert_eq!(mixed.compare(&nearly), Comparison::EqualWithinValidity);
    }

    #[test]
    fn term_cap_lowers_validity() {
        let terms: Vec<(Order, Real)> = (0..80).map(|k| (ord(k), Real::from_int(1))).collect();
        let x = Hyperreal::make(terms, ord(100)).unwrap();
        assert_eq!(x.term_count(), MAX_TERMS);
        assert_eq!(x.valid_order(), ord(MAX_TERMS as i64));
    }
}
