//! Omega sums: right-hand Riemann sums with a symbolic unlimited partition
//! count, evaluated to truncated series in `w`.
//!
//! A sum `Σ_{k=1}^{n} f(a + kΔx)Δx` with `Δx = (b-a)/n` and `n` a
//! polynomial in `W` is closed in three ways:
//!
//! - rational-coefficient polynomials sum exactly through Faulhaber's
//!   formulas, giving an exact Laurent expansion;
//! - smooth functions go through the right-sum Euler-Maclaurin expansion,
//!   whose `w^0` coefficient comes from quadrature and whose higher
//!   coefficients come from exact Bernoulli numbers and symbolic endpoint
//!   derivatives;
//! - piecewise-smooth functions split at their breakpoints; the full
//!   expansion survives only when every breakpoint lands on a partition
//!   point for the given `n`, otherwise only the standard part is
//!   certified.
//!
//! A brute-force finite-`N` oracle provides the independent check: it sums
//! term by term and shares no code with the closed forms above.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use core::cmp::Ordering;
use core::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Float, One, Signed, ToPrimitive, Zero};

use crate::expr::{
    abs_arguments, as_polynomial, breakpoints, contains_abs, eval_real, eval_with_fix,
    nth_derivative, resolve_at, EvalError, Expr, PointFix,
};
use crate::hyperreal::{ord, Hyperreal, Order, DEFAULT_VALIDITY};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub enum OmegaSumError {
    /// NSpec rejected: degree 0 does not represent an unlimited count.
    NotUnlimited(String),
    /// NSpec rejected: leading coefficient must be positive.
    NotPositive(String),
    /// Malformed NSpec text.
    BadNSpec(String),
    /// Interval must satisfy a < b.
    BadInterval,
    BernoulliRange(i64),
    /// Romberg failed to settle; carries the last diagonal estimate and the
    /// spread between the final two levels.
    QuadratureDivergence { estimate: f64, spread: f64 },
    /// Evaluation failed somewhere the engine needed a value.
    Domain(String),
    /// The function falls outside what the sum engine handles; the caller
    /// decides whether to probe for divergence instead.
    Unsupported(String),
}

impl fmt::Display for OmegaSumError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OmegaSumError::NotUnlimited(t) => write!(f, "`{}` is not unlimited (degree 0)", t),
            OmegaSumError::NotPositive(t) => write!(f, "`{}` is not positive", t),
            OmegaSumError::BadNSpec(m) => write!(f, "bad partition count: {}", m),
            OmegaSumError::BadInterval => write!(f, "interval requires a < b"),
            OmegaSumError::BernoulliRange(n) => write!(f, "Bernoulli index {} out of range 0..=40", n),
            OmegaSumError::QuadratureDivergence { estimate, spread } => write!(
                f,
                "quadrature did not converge: last estimate {} with spread {}",
                estimate, spread
            ),
            OmegaSumError::Domain(m) => write!(f, "domain error: {}", m),
            OmegaSumError::Unsupported(m) => write!(f, "unsupported: {}", m),
        }
    }
}

impl core::error::Error for OmegaSumError {}

impl From<EvalError> for OmegaSumError {
    fn from(e: EvalError) -> Self {
        OmegaSumError::Domain(e.message)
    }
}

impl From<crate::hyperreal::HyperrealError> for OmegaSumError {
    fn from(e: crate::hyperreal::HyperrealError) -> Self {
        OmegaSumError::Domain(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// NSpec: symbolic partition counts
// ---------------------------------------------------------------------------

/// An integer-coefficient polynomial in `W` standing for a positive
/// unlimited hyperinteger: degree at least 1, positive leading coefficient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NSpec {
    /// Ascending by power of `W`; the last entry (the leading coefficient)
    /// is nonzero.
    coeffs: Vec<BigInt>,
}

impl NSpec {
    pub fn from_coeffs(mut coeffs: Vec<BigInt>) -> Result<Self, OmegaSumError> {
        while coeffs.len() > 1 && coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        let text = || {
            NSpec {
                coeffs: coeffs.clone(),
            }
            .to_string()
        };
        if coeffs.len() < 2 {
            return Err(OmegaSumError::NotUnlimited(
                coeffs.first().map(|c| c.to_string()).unwrap_or_default(),
            ));
        }
        if !coeffs.last().is_some_and(|c| c.is_positive()) {
            return Err(OmegaSumError::NotPositive(text()));
        }
        Ok(NSpec { coeffs })
    }

    /// `W` itself.
    pub fn big_omega() -> Self {
        NSpec {
            coeffs: alloc::vec![BigInt::zero(), BigInt::one()],
        }
    }

    pub fn degree(&self) -> i64 {
        self.coeffs.len() as i64 - 1
    }

    pub fn leading(&self) -> &BigInt {
        self.coeffs.last().expect("nonempty")
    }

    /// The count as a Laurent value: `Σ c_i W^i`.
    pub fn to_hyperreal(&self, valid_order: Order) -> Hyperreal {
        Hyperreal::make(
            self.coeffs.iter().enumerate().map(|(i, c)| {
                (
                    ord(-(i as i64)),
                    Real::Exact(BigRational::from_integer(c.clone())),
                )
            }),
            valid_order,
        )
        .expect("distinct exponents")
    }

    /// Substitutes a concrete integer for `W`.
    pub fn eval_at(&self, n: u64) -> BigInt {
        let nb = BigInt::from(n);
        let mut acc = BigInt::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * &nb + c;
        }
        acc
    }

    /// `self * r` when every scaled coefficient stays an integer (the
    /// symbolic divisibility test behind breakpoint alignment).
    pub fn scaled_by_rational(&self, r: &BigRational) -> Option<Vec<BigInt>> {
        let mut out = Vec::with_capacity(self.coeffs.len());
        for c in &self.coeffs {
            let s = BigRational::from_integer(c.clone()) * r;
            if !s.is_integer() {
                return None;
            }
            out.push(s.to_integer());
        }
        Some(out)
    }
}

impl fmt::Display for NSpec {
    /// Descending powers: `W^2 + 2*W + 1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let mag = c.abs();
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
                first = false;
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            match i {
                0 => write!(f, "{}", mag)?,
                _ => {
                    if !mag.is_one() {
                        write!(f, "{}*", mag)?;
                    }
                    if i == 1 {
                        write!(f, "W")?;
                    } else {
                        write!(f, "W^{}", i)?;
                    }
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Parses integer-coefficient polynomials in `W`: `W`, `2*W + 1`, `W^2`.
pub fn nspec_parse(text: &str) -> Result<NSpec, OmegaSumError> {
    let bytes = text.as_bytes();
    let mut pos = 0usize;
    let mut coeffs: Vec<BigInt> = Vec::new();
    let bad = |pos: usize, m: &str| {
        Err(OmegaSumError::BadNSpec(format!("{} at offset {}", m, pos)))
    };

    fn skip_ws(bytes: &[u8], pos: &mut usize) {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
    }
    fn integer(bytes: &[u8], pos: &mut usize) -> Option<BigInt> {
        skip_ws(bytes, pos);
        let start = *pos;
        while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
            *pos += 1;
        }
        if start == *pos {
            return None;
        }
        core::str::from_utf8(&bytes[start..*pos]).ok()?.parse().ok()
    }

    let mut sign = BigInt::one();
    skip_ws(bytes, &mut pos);
    if bytes.get(pos) == Some(&b'-') {
        sign = -sign;
        pos += 1;
    }
    loop {
        skip_ws(bytes, &mut pos);
        // term: [int ['*']] ['W' ['^' int]]
        let coeff = integer(bytes, &mut pos);
        skip_ws(bytes, &mut pos);
        let star = bytes.get(pos) == Some(&b'*');
        if star {
            pos += 1;
            skip_ws(bytes, &mut pos);
        }
        let (c, power) = if bytes.get(pos) == Some(&b'W') {
            pos += 1;
            let power = if bytes.get(pos) == Some(&b'^') {
                pos += 1;
                match integer(bytes, &mut pos) {
                    Some(p) => match p.to_usize() {
                        Some(p) if p >= 1 && p <= 16 => p,
                        _ => return bad(pos, "exponent out of range"),
                    },
                    None => return bad(pos, "expected an exponent"),
                }
            } else {
                1
            };
            (coeff.unwrap_or_else(BigInt::one), power)
        } else {
            if star {
                return bad(pos, "expected W");
            }
            match coeff {
                Some(c) => (c, 0usize),
                None => return bad(pos, "expected a term"),
            }
        };
        if coeffs.len() <= power {
            coeffs.resize(power + 1, BigInt::zero());
        }
        coeffs[power] += sign.clone() * c;

        skip_ws(bytes, &mut pos);
        match bytes.get(pos) {
            None => break,
            Some(b'+') => {
                sign = BigInt::one();
                pos += 1;
            }
            Some(b'-') => {
                sign = -BigInt::one();
                pos += 1;
            }
            Some(_) => return bad(pos, "expected '+', '-', or end"),
        }
    }
    NSpec::from_coeffs(coeffs)
}

// ---------------------------------------------------------------------------
// Partitions
// ---------------------------------------------------------------------------

/// `Δx = (b-a)/n`, a positive infinitesimal of order `degree(n)`.
pub fn delta_x(n: &NSpec, a: &Real, b: &Real, valid_order: Order) -> Hyperreal {
    let width = b.clone() - a.clone();
    let inv = n
        .to_hyperreal(valid_order)
        .invert()
        .expect("NSpec has a nonzero leading coefficient");
    inv.scale(&width)
}

/// The partition `x_k = a + kΔx`, `k = 1..n`.
#[derive(Clone, Debug)]
pub struct PartitionSpec {
    pub a: Real,
    pub b: Real,
    pub n: NSpec,
    pub delta_x: Hyperreal,
}

impl PartitionSpec {
    pub fn new(a: Real, b: Real, n: NSpec, valid_order: Order) -> Result<Self, OmegaSumError> {
        if a.cmp_real(&b) != Ordering::Less {
            return Err(OmegaSumError::BadInterval);
        }
        let delta_x = delta_x(&n, &a, &b, valid_order);
        Ok(PartitionSpec { a, b, n, delta_x })
    }
}

// ---------------------------------------------------------------------------
// Bernoulli numbers
// ---------------------------------------------------------------------------

/// `B_0..=B_n` by the defining recurrence
/// `B_n = -1/(n+1) Σ_{k<n} C(n+1,k) B_k`. Cheap enough (n ≤ 40) to compute
/// per call, which keeps the crate free of global state.
fn bernoulli_table(n: usize) -> Vec<BigRational> {
    let mut table: Vec<BigRational> = Vec::with_capacity(n + 1);
    for m in 0..=n {
        if m == 0 {
            table.push(BigRational::one());
            continue;
        }
        let mut acc = BigRational::zero();
        for (k, bk) in table.iter().enumerate() {
            let c = num_integer::binomial(BigInt::from(m + 1), BigInt::from(k));
            acc += BigRational::from_integer(c) * bk;
        }
        table.push(-acc / BigRational::from_integer(BigInt::from(m + 1)));
    }
    table
}

/// Exact Bernoulli number, `0 ≤ n ≤ 40` (standard convention, `B_1 = -1/2`).
pub fn bernoulli(n: i64) -> Result<BigRational, OmegaSumError> {
    if !(0..=40).contains(&n) {
        return Err(OmegaSumError::BernoulliRange(n));
    }
    Ok(bernoulli_table(n as usize).pop().expect("nonempty"))
}

fn factorial(n: u64) -> BigRational {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= BigInt::from(k);
    }
    BigRational::from_integer(acc)
}

fn binom(n: u64, k: u64) -> BigRational {
    BigRational::from_integer(num_integer::binomial(BigInt::from(n), BigInt::from(k)))
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
const ROMBERG_MAX_LEVELS: usize = 20;

#[derive(Clone, Debug)]
pub struct QuadResult {
    pub value: Real,
    /// True when the polynomial antiderivative shortcut produced an exact
    /// rational; false means Romberg floats at the requested tolerance.
    pub exact: bool,
}

fn romberg(
    f: &Expr,
    a: f64,
    b: f64,
    tol: f64,
    fix: Option<&PointFix>,
) -> Result<f64, OmegaSumError> {
    let eval = |x: f64| -> Result<f64, OmegaSumError> {
        let v = eval_with_fix(f, fix, &Real::Float(x))?;
        let v = v.to_f64();
        if !v.is_finite() {
            return Err(OmegaSumError::Domain(format!(
                "non-finite value at x = {}",
                x
            )));
        }
        Ok(v)
    };
    let mut prev: Vec<f64> = alloc::vec![(b - a) * (eval(a)? + eval(b)?) / 2.0];
    let mut panels = 1u64;
    for level in 1..=ROMBERG_MAX_LEVELS {
        panels *= 2;
        let h = (b - a) / panels as f64;
        let mut mid = 0.0;
        let mut k = 1;
        while k < panels {
            mid += eval(a + k as f64 * h)?;
            k += 2;
        }
        let mut row = Vec::with_capacity(level + 1);
        row.push(prev[0] / 2.0 + h * mid);
        for j in 1..=level {
            let pow4 = 4f64.powi(j as i32);
            let better = (pow4 * row[j - 1] - prev[j - 1]) / (pow4 - 1.0);
            row.push(better);
        }
        let diag = row[level];
        let prev_diag = prev[level - 1];
        if !diag.is_finite() {
            return Err(OmegaSumError::Domain(String::from(
                "quadrature produced a non-finite estimate",
            )));
        }
        if level >= 3 && Float::abs(diag - prev_diag) <= tol {
            return Ok(diag);
        }
        prev = row;
    }
    let estimate = prev[prev.len() - 1];
    let spread = Float::abs(estimate - prev[prev.len() - 2]);
    Err(OmegaSumError::QuadratureDivergence { estimate, spread })
}

/// `∫_a^b` of a smooth resolved tree: exact polynomial antiderivative when
/// possible, Romberg otherwise.
fn quad_segment(
    f: &Expr,
    a: &Real,
    b: &Real,
    tol: f64,
    fix: Option<&PointFix>,
) -> Result<QuadResult, OmegaSumError> {
    if let Some(coeffs) = as_polynomial(f) {
        // Σ c_m (b^{m+1} - a^{m+1})/(m+1)
        let mut acc = if a.is_exact() && b.is_exact() {
            Real::zero()
        } else {
            Real::Float(0.0)
        };
        for (m, c) in coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let p = (m + 1) as i64;
            let bp = b.pow_int(p).expect("positive power");
            let ap = a.pow_int(p).expect("positive power");
            let term = Real::Exact(c / BigRational::from_integer(BigInt::from(p)))
                * (bp - ap);
            acc = acc + term;
        }
        let exact = acc.is_exact();
        return Ok(QuadResult { value: acc, exact });
    }
    let v = romberg(f, a.to_f64(), b.to_f64(), tol, fix)?;
    Ok(QuadResult {
        value: Real::Float(v),
        exact: false,
    })
}

/// Integral over `[a,b]`, splitting at conditional breakpoints and resolving
/// each piece on its own segment. Default tolerance [`DEFAULT_QUAD_TOL`].
pub fn quadrature_integral(
    f: &Expr,
    a: &Real,
    b: &Real,
    tol: f64,
    fix: Option<&PointFix>,
) -> Result<QuadResult, OmegaSumError> {
    if a.cmp_real(b) != Ordering::Less {
        return Err(OmegaSumError::BadInterval);
    }
    let cuts: Vec<Real> = breakpoints(f)
        .into_iter()
        .filter(|c| a.cmp_real(c) == Ordering::Less && c.cmp_real(b) == Ordering::Less)
        .collect();
    let mut bounds = alloc::vec![a.clone()];
    bounds.extend(cuts);
    bounds.push(b.clone());

    let mut acc: Option<Real> = None;
    let mut exact = true;
    for win in bounds.windows(2) {
        let (u, v) = (&win[0], &win[1]);
        let mid = (u.clone() + v.clone()) * Real::from_ratio(1, 2);
        let piece = resolve_at(f, &mid)?;
        let q = quad_segment(&piece, u, v, tol, fix)?;
        exact &= q.exact;
        acc = Some(match acc {
            None => q.value,
            Some(prev) => prev + q.value,
        });
    }
    Ok(QuadResult {
        value: acc.expect("at least one segment"),
        exact,
    })
}

// ---------------------------------------------------------------------------
// Finite oracle
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMode {
    Exact,
    Float,
}

/// Brute-force right sum `Σ_{k=1}^{N} f(a + k(b-a)/N)(b-a)/N`, summed term
/// by term. This is the independent check on the closed forms: it shares no
/// code with the Faulhaber or Euler-Maclaurin paths.
pub fn finite_sum_oracle(
    f: &Expr,
    a: &Real,
    b: &Real,
    n: u64,
    mode: OracleMode,
    fix: Option<&PointFix>,
) -> Result<Real, OmegaSumError> {
    if n < 1 {
        return Err(OmegaSumError::Domain(String::from("N must be at least 1")));
    }
    if a.cmp_real(b) != Ordering::Less {
        return Err(OmegaSumError::BadInterval);
    }
    match mode {
        OracleMode::Float => {
            let af = a.to_f64();
            let w = (b.to_f64() - af) / n as f64;
            // Kahan compensation keeps the roundoff flat in N.
            let mut sum = 0.0f64;
            let mut comp = 0.0f64;
            for k in 1..=n {
                let x = af + k as f64 * w;
                let v = eval_with_fix(f, fix, &Real::Float(x))
                    .map_err(|e| OmegaSumError::Domain(format!("{} (term k = {})", e.message, k)))?
                    .to_f64();
                let y = v - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            Ok(Real::Float(sum * w))
        }
        OracleMode::Exact => {
            let (ax, bx) = match (a.as_exact(), b.as_exact()) {
                (Some(ax), Some(bx)) => (ax.clone(), bx.clone()),
                _ => {
                    return Err(OmegaSumError::Unsupported(String::from(
                        "exact oracle requires rational endpoints",
                    )))
                }
            };
            let w = (bx - &ax) / BigRational::from_integer(BigInt::from(n));
            if fix.is_none() {
                if let Some(value) = exact_poly_partial_sum(f, &ax, &w, 1, n) {
                    return Ok(Real::Exact(value * &w));
                }
            }
            let mut acc = BigRational::zero();
            for k in 1..=n {
                let x = Real::Exact(&ax + &w * BigRational::from_integer(BigInt::from(k)));
                let v = eval_with_fix(f, fix, &x)
                    .map_err(|e| OmegaSumError::Domain(format!("{} (term k = {})", e.message, k)))?;
                match v.as_exact() {
                    Some(q) => acc += q,
                    None => {
                        return Err(OmegaSumError::Unsupported(String::from(
                            "exact oracle requires a rational-closed expression",
                        )))
                    }
                }
            }
            Ok(Real::Exact(acc * w))
        }
    }
}

/// Term-by-term polynomial loop over a common integer denominator; same
/// naive summation, just without per-step rational reduction. Returns the
/// bare sum `Σ_{k=k0}^{k1} f(start + k·step)` (no step factor).
pub(crate) fn exact_poly_partial_sum(
    f: &Expr,
    start: &BigRational,
    step: &BigRational,
    k0: u64,
    k1: u64,
) -> Option<BigRational> {
    let coeffs = as_polynomial(f)?;
    if coeffs.is_empty() || k0 > k1 {
        return Some(BigRational::zero());
    }
    // x_k = (p + k q)/d with d the common denominator of start and step.
    let d: BigInt = start.denom().lcm(step.denom());
    let p = start.numer() * (&d / start.denom());
    let q = step.numer() * (&d / step.denom());
    // common denominator of the polynomial coefficients
    let mut e = BigInt::one();
    for c in &coeffs {
        e = e.lcm(c.denom());
    }
    let scaled: Vec<BigInt> = coeffs
        .iter()
        .map(|c| c.numer() * (&e / c.denom()))
        .collect();
    let deg = scaled.len() - 1;
    // f(x_k) = Σ_m scaled[m] (p + kq)^m d^{deg-m} / (e d^deg)
    let mut dpow = alloc::vec![BigInt::one(); deg + 1];
    for m in 1..=deg {
        dpow[m] = &dpow[m - 1] * &d;
    }
    let mut sum = BigInt::zero();
    for k in k0..=k1 {
        let t = &p + &q * BigInt::from(k);
        let mut val = scaled[deg].clone();
        for m in (0..deg).rev() {
            val = val * &t + &scaled[m] * &dpow[deg - m];
        }
        sum += val;
    }
    let mut denom = e;
    for _ in 0..deg {
        denom *= &d;
    }
    Some(BigRational::new(sum, denom))
}

// ---------------------------------------------------------------------------
// The omega sum engine
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SumMethod {
    FaulhaberExact,
    EulerMaclaurin,
    SplitPiecewise,
    OracleExtrapolation,
}

impl fmt::Display for SumMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SumMethod::FaulhaberExact => "faulhaber-exact",
            SumMethod::EulerMaclaurin => "euler-maclaurin",
            SumMethod::SplitPiecewise => "split-piecewise",
            SumMethod::OracleExtrapolation => "oracle-extrapolation",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoeffSource {
    Exact,
    Quadrature(f64),
}

impl fmt::Display for CoeffSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoeffSource::Exact => f.write_str("exact"),
            CoeffSource::Quadrature(tol) => write!(f, "quadrature({:e})", tol),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OmegaSumResult {
    pub value: Hyperreal,
    pub method: SumMethod,
    pub integral_coeff_source: CoeffSource,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SumOptions {
    /// Target validity order of the result.
    pub validity: i64,
    pub quad_tol: f64,
    /// Zeros of abs arguments, supplied by the caller; each is validated to
    /// make the abs argument vanish within [`ABS_BREAKPOINT_TOL`].
    pub abs_breakpoints: Vec<Real>,
    pub fix: Option<PointFix>,
}

impl Default for SumOptions {
    fn default() -> Self {
        SumOptions {
            validity: DEFAULT_VALIDITY,
            quad_tol: DEFAULT_QUAD_TOL,
            abs_breakpoints: Vec::new(),
            fix: None,
        }
    }
}

pub const ABS_BREAKPOINT_TOL: f64 = 1e-12;

/// Exact sum of a rational-coefficient polynomial: expand
/// `f(a + kΔ) = Σ_j r_j k^j Δ^j` and close `Σ_{k=1}^{n} k^j` by Faulhaber's
/// formula.
fn faulhaber_sum(
    coeffs: &[BigRational],
    a: &BigRational,
    b: &BigRational,
    n: &NSpec,
    v_target: i64,
) -> Hyperreal {
    if coeffs.is_empty() {
        return Hyperreal::zero(ord(v_target));
    }
    let m_deg = coeffs.len() as i64 - 1;
    let d = n.degree();
    let v_work = v_target + 2 * d * (m_deg + 2);
    let n_h = n.to_hyperreal(ord(v_work));
    let width = Real::Exact(b - a);
    let delta = n_h.invert().expect("positive leading").scale(&width);

    // r_j = Σ_{m ≥ j} c_m C(m,j) a^{m-j}
    let mut r = Vec::with_capacity(coeffs.len());
    for j in 0..=m_deg as u64 {
        let mut acc = BigRational::zero();
        for m in j..=m_deg as u64 {
            let c = &coeffs[m as usize];
            if c.is_zero() {
                continue;
            }
            let apow = num_traits::pow::pow(a.clone(), (m - j) as usize);
            acc += c * binom(m, j) * apow;
        }
        r.push(acc);
    }

    // B⁺ convention (B_1 = +1/2) closes the right-hand sum Σ_{k=1}^{n} k^j.
    let mut bplus = bernoulli_table(m_deg as usize);
    if bplus.len() > 1 {
        bplus[1] = -bplus[1].clone();
    }
    let mut npow = alloc::vec![Hyperreal::one(ord(v_work))];
    for t in 1..=(m_deg + 1) as usize {
        npow.push(npow[t - 1].mul(&n_h));
    }

    let mut total = Hyperreal::zero(ord(v_work));
    let mut dpow = Hyperreal::one(delta.valid_order());
    for (j, rj) in r.iter().enumerate() {
        dpow = dpow.mul(&delta);
        if rj.is_zero() {
            continue;
        }
        // F_j(n) = 1/(j+1) Σ_{i=0}^{j} C(j+1,i) B⁺_i n^{j+1-i}
        let mut fj = Hyperreal::zero(ord(v_work));
        for (i, bi) in bplus.iter().enumerate().take(j + 1) {
            if bi.is_zero() {
                continue;
            }
            let c = binom(j as u64 + 1, i as u64) * bi;
            fj = fj.add(&npow[j + 1 - i].scale(&Real::Exact(c)));
        }
        let fj = fj.scale(&Real::Exact(BigRational::new(
            BigInt::one(),
            BigInt::from(j as u64 + 1),
        )));
        total = total.add(&dpow.mul(&fj).scale(&Real::Exact(rj.clone())));
    }
    total.truncate(ord(v_target))
}

/// Right-sum Euler-Maclaurin closure for a smooth piece:
/// `S = I + (h/2)(f(b)-f(a)) + Σ_{j=1}^{p} B_{2j}/(2j)! h^{2j}
/// (f^{(2j-1)}(b) - f^{(2j-1)}(a))`, trusted to the remainder order
/// `(2p+2)·degree(n)`.
fn euler_maclaurin_sum(
    f: &Expr,
    a: &Real,
    b: &Real,
    n: &NSpec,
    v_target: i64,
    tol: f64,
    fix: Option<&PointFix>,
) -> Result<(Hyperreal, QuadResult), OmegaSumError> {
    let d = n.degree();
    // smallest p with (2p+2)d ≥ v_target, capped
    let p = core::cmp::min(8, core::cmp::max(0, (v_target + 2 * d - 1).div_euclid(2 * d) - 1)) as u64;
    let v_rem = (2 * p as i64 + 2) * d;
    let v_work = v_rem + 2 * d;
    let h = delta_x(n, a, b, ord(v_work));

    let quad = quad_segment(f, a, b, tol, fix)?;
    let fb = eval_with_fix(f, fix, b)?;
    let fa = eval_with_fix(f, fix, a)?;

    let mut acc = Hyperreal::from_real(quad.value.clone(), h.valid_order());
    let half = Real::from_ratio(1, 2);
    acc = acc.add(&h.scale(&((fb - fa) * half)));

    if p > 0 {
        let bern = bernoulli_table(2 * p as usize);
        let mut deriv = nth_derivative(f, 1).map_err(|e| {
            OmegaSumError::Unsupported(format!("needs derivatives for the expansion: {}", e.message))
        })?;
        let mut hpow = h.mul(&h);
        for j in 1..=p {
            if j > 1 {
                deriv = nth_derivative(&deriv, 2)
                    .map_err(|e| OmegaSumError::Unsupported(e.message))?;
                hpow = hpow.mul(&h).mul(&h);
            }
            let b2j = &bern[2 * j as usize];
            if b2j.is_zero() {
                continue;
            }
            let db = eval_with_fix(&deriv, fix, b)?;
            let da = eval_with_fix(&deriv, fix, a)?;
            let coeff = Real::Exact(b2j / factorial(2 * j)) * (db - da);
            acc = acc.add(&hpow.scale(&coeff));
        }
    }
    let value = acc.truncate(ord(core::cmp::min(v_target, v_rem)));
    Ok((value, quad))
}

/// Evaluates a whole omega sum. Path choice: exact Faulhaber for rational
/// polynomials, Euler-Maclaurin for smooth pieces, splitting at breakpoints
/// otherwise. Never invents an answer: anything outside these classes is an
/// error for the caller to triage.
pub fn omega_sum(
    f: &Expr,
    a: &Real,
    b: &Real,
    n: &NSpec,
    opts: &SumOptions,
) -> Result<OmegaSumResult, OmegaSumError> {
    if a.cmp_real(b) != Ordering::Less {
        return Err(OmegaSumError::BadInterval);
    }
    let fix = opts.fix.as_ref();
    let mut notes: Vec<String> = Vec::new();
    if let Some(pf) = fix {
        notes.push(format!("point redefinition applied at x = {}", pf.at));
    }

    // Segment boundaries: conditional thresholds, plus validated zeros of
    // abs arguments supplied by the caller.
    let mut cuts: Vec<Real> = breakpoints(f)
        .into_iter()
        .filter(|c| a.cmp_real(c) == Ordering::Less && c.cmp_real(b) == Ordering::Less)
        .collect();
    let has_abs = contains_abs(f);
    if has_abs {
        let inners = abs_arguments(f);
        for s in &opts.abs_breakpoints {
            if !(a.cmp_real(s) == Ordering::Less && s.cmp_real(b) == Ordering::Less) {
                continue;
            }
            let vanishes = inners.iter().any(|g| {
                eval_real(g, s)
                    .map(|v| Float::abs(v.to_f64()) <= ABS_BREAKPOINT_TOL)
                    .unwrap_or(false)
            });
            if !vanishes {
                return Err(OmegaSumError::Unsupported(format!(
                    "supplied breakpoint {} does not zero any abs argument",
                    s
                )));
            }
            cuts.push(s.clone());
        }
    }
    cuts.sort_by(|x, y| x.cmp_real(y));
    cuts.dedup_by(|x, y| x.cmp_real(y) == Ordering::Equal);

    let mut bounds = alloc::vec![a.clone()];
    bounds.extend(cuts.iter().cloned());
    bounds.push(b.clone());

    // Resolve each segment at its midpoint. With abs present, probe interior
    // points: a sign change inside a segment means the caller's breakpoint
    // list was incomplete.
    let needs_resolution = has_abs || !breakpoints(f).is_empty();
    let mut pieces: Vec<Expr> = Vec::new();
    for win in bounds.windows(2) {
        let (u, v) = (&win[0], &win[1]);
        if !needs_resolution {
            pieces.push(f.clone());
            continue;
        }
        let mid = (u.clone() + v.clone()) * Real::from_ratio(1, 2);
        let piece = resolve_at(f, &mid)?;
        if has_abs {
            for i in 1..=9 {
                let t = Real::from_ratio(i, 10);
                let x = u.clone() + (v.clone() - u.clone()) * t;
                let probe = resolve_at(f, &x).map_err(|e| {
                    OmegaSumError::Unsupported(format!(
                        "abs argument vanishes inside a segment: {}",
                        e.message
                    ))
                })?;
                if probe != piece {
                    return Err(OmegaSumError::Unsupported(String::from(
                        "an abs argument changes sign inside a segment; supply its zeros as breakpoints",
                    )));
                }
            }
        }
        pieces.push(piece);
    }

    // Alignment: every interior cut position (s-a)/(b-a) must scale n into
    // an integer-coefficient polynomial. The endpoint b is the n-th
    // partition point by construction.
    let width = b.clone() - a.clone();
    let mut aligned = true;
    let mut cumulative: Vec<Vec<BigInt>> = alloc::vec![alloc::vec![BigInt::zero()]];
    for s in &cuts {
        let t = (s.clone() - a.clone()) / width.clone();
        match t.as_exact().and_then(|q| n.scaled_by_rational(q)) {
            Some(c) => cumulative.push(c),
            None => {
                aligned = false;
                break;
            }
        }
    }
    cumulative.push(
        n.scaled_by_rational(&BigRational::one())
            .expect("identity scaling"),
    );

    if !aligned {
        // Only the standard part survives: the higher coefficients genuinely
        // depend on where each breakpoint falls inside its cell.
        let mut total: Option<Real> = None;
        let mut exact = true;
        for (win, piece) in bounds.windows(2).zip(&pieces) {
            let q = quad_segment(piece, &win[0], &win[1], opts.quad_tol, fix)?;
            exact &= q.exact;
            total = Some(match total {
                None => q.value,
                Some(prev) => prev + q.value,
            });
        }
        notes.push(String::from(
            "breakpoint does not align with the partition; only the standard part is certified",
        ));
        return Ok(OmegaSumResult {
            value: Hyperreal::from_real(total.expect("segment"), ord(1)),
            method: SumMethod::SplitPiecewise,
            integral_coeff_source: if exact {
                CoeffSource::Exact
            } else {
                CoeffSource::Quadrature(opts.quad_tol)
            },
            notes,
        });
    }

    let d = n.degree();
    let h = delta_x(n, a, b, ord(opts.validity + 2 * d + 2));
    let mut total = Hyperreal::zero(ord(opts.validity));
    let mut any_quadrature = false;
    let mut base_method: Option<SumMethod> = None;
    let mut corrections = 0usize;

    for (i, piece) in pieces.iter().enumerate() {
        let (u, v) = (&bounds[i], &bounds[i + 1]);
        let seg_n = if cuts.is_empty() {
            n.clone()
        } else {
            let diff: Vec<BigInt> = cumulative[i + 1]
                .iter()
                .enumerate()
                .map(|(t, c)| {
                    c - cumulative[i].get(t).cloned().unwrap_or_else(BigInt::zero)
                })
                .collect();
            NSpec::from_coeffs(diff).map_err(|_| {
                OmegaSumError::Unsupported(String::from(
                    "a segment receives a degenerate share of the partition",
                ))
            })?
        };

        let poly = as_polynomial(piece);
        let seg_value = match (&poly, u.as_exact(), v.as_exact()) {
            (Some(coeffs), Some(ux), Some(vx)) => {
                base_method.get_or_insert(SumMethod::FaulhaberExact);
                faulhaber_sum(coeffs, ux, vx, &seg_n, opts.validity)
            }
            _ => {
                let (value, quad) =
                    euler_maclaurin_sum(piece, u, v, &seg_n, opts.validity, opts.quad_tol, fix)?;
                if !quad.exact {
                    any_quadrature = true;
                }
                base_method.get_or_insert(SumMethod::EulerMaclaurin);
                if base_method == Some(SumMethod::FaulhaberExact) {
                    base_method = Some(SumMethod::EulerMaclaurin);
                }
                value
            }
        };
        total = total.add(&seg_value);

        // The sum samples the actual f at the segment's right edge; the
        // resolved piece may disagree there by a jump.
        let f_actual = eval_with_fix(f, fix, v)?;
        let f_piece = eval_with_fix(piece, fix, v)?;
        let jump = f_actual - f_piece;
        if !jump.is_zero() {
            corrections += 1;
            total = total.add(&h.scale(&jump));
            notes.push(format!("jump correction at x = {}", v));
        }
    }

    let method = if pieces.len() > 1 || corrections > 0 {
        SumMethod::SplitPiecewise
    } else {
        base_method.unwrap_or(SumMethod::EulerMaclaurin)
    };
    if any_quadrature {
        notes.push(format!("w^0 coefficient from quadrature({:e})", opts.quad_tol));
    }
    Ok(OmegaSumResult {
        value: total.truncate(ord(opts.validity)),
        method,
        integral_coeff_source: if any_quadrature {
            CoeffSource::Quadrature(opts.quad_tol)
        } else {
            CoeffSource::Exact
        },
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use alloc::string::ToString;

    fn e(text: &str) -> Expr {
        parse(text).unwrap()
    }

    fn sum(f: &str, a: i64, b: i64, n: &str) -> OmegaSumResult {
        omega_sum(
            &e(f),
            &Real::from_int(a),
            &Real::from_int(b),
            &nspec_parse(n).unwrap(),
            &SumOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn nspec_parse_and_display() {
        assert_eq!(nspec_parse("W").unwrap().to_string(), "W");
        assert_eq!(nspec_parse("2*W + 1").unwrap().to_string(), "2*W + 1");
        assert_eq!(nspec_parse("W^2").unwrap().to_string(), "W^2");
        assert_eq!(nspec_parse("W - 1").unwrap().to_string(), "W - 1");
        assert!(matches!(
            nspec_parse("5"),
            Err(OmegaSumError::NotUnlimited(_))
        ));
        assert!(matches!(
            nspec_parse("1 - W"),
            Err(OmegaSumError::NotPositive(_))
        ));
        assert_eq!(nspec_parse("2*W + 1").unwrap().eval_at(10), BigInt::from(21));
    }

    #[test]
    fn delta_x_examples() {
        let w = delta_x(
            &NSpec::big_omega(),
            &Real::zero(),
            &Real::one(),
            ord(8),
        );
        assert_eq!(w.to_string(), "w (mod w^10)");

        let omega_plus = nspec_parse("W + 1").unwrap();
        let d = delta_x(&omega_plus, &Real::zero(), &Real::one(), ord(6));
        assert_eq!(d.to_string(), "w - w^2 + w^3 - w^4 + w^5 - w^6 + w^7 (mod w^8)");

        let sq = nspec_parse("W^2").unwrap();
        let d = delta_x(&sq, &Real::zero(), &Real::Float(core::f64::consts::PI), ord(8));
        assert_eq!(d.term_count(), 1);
        assert_eq!(d.order_of_magnitude(), ord(2));
    }

    #[test]
    fn partition_endpoint_identity() {
        for n in ["W", "2*W", "W + 1", "W^2"] {
            let n = nspec_parse(n).unwrap();
            let p = PartitionSpec::new(Real::zero(), Real::from_int(2), n.clone(), ord(8)).unwrap();
            let back = p
                .delta_x
                .mul(&n.to_hyperreal(ord(8)))
                .add_real(&Real::zero());
            assert!(back.agrees_within(&Hyperreal::from_real(Real::from_int(2), ord(8)), 0.0));
            assert_eq!(
                p.delta_x.classify(),
                crate::hyperreal::HClass::Infinitesimal
            );
        }
    }

    #[test]
    fn bernoulli_examples() {
        assert_eq!(bernoulli(0).unwrap(), BigRational::one());
        assert_eq!(bernoulli(1).unwrap(), BigRational::new((-1).into(), 2.into()));
        assert_eq!(bernoulli(2).unwrap(), BigRational::new(1.into(), 6.into()));
        assert_eq!(bernoulli(3).unwrap(), BigRational::zero());
        assert_eq!(bernoulli(12).unwrap(), BigRational::new((-691).into(), 2730.into()));
        assert!(bernoulli(41).is_err());
        assert!(bernoulli(-1).is_err());
    }

    #[test]
    fn faulhaber_square() {
        let r = sum("x^2", 0, 1, "W");
        assert_eq!(r.value.to_string(), "1/3 + 1/2*w + 1/6*w^2 (mod w^8)");
        assert_eq!(r.method, SumMethod::FaulhaberExact);
        assert_eq!(r.integral_coeff_source, CoeffSource::Exact);
        assert!(r.value.is_exact());
    }

    #[test]
    fn constant_sums_exactly() {
        for n in ["W", "2*W + 1", "W^2"] {
            let r = sum("7/2", 2, 5, n);
            assert_eq!(r.value.to_string(), "21/2 (mod w^8)");
        }
    }

    #[test]
    fn oracle_examples() {
        let v = finite_sum_oracle(
            &e("x"),
            &Real::zero(),
            &Real::one(),
            4,
            OracleMode::Exact,
            None,
        )
        .unwrap();
        assert_eq!(v, Real::from_ratio(5, 8));

        let v = finite_sum_oracle(
            &e("1"),
            &Real::from_int(2),
            &Real::from_int(5),
            17,
            OracleMode::Exact,
            None,
        )
        .unwrap();
        assert_eq!(v, Real::from_int(3));

        // closed form (N+1)(2N+1)/(6N^2) at N = 1000
        let n = 1000u64;
        let v = finite_sum_oracle(
            &e("x^2"),
            &Real::zero(),
            &Real::one(),
            n,
            OracleMode::Exact,
            None,
        )
        .unwrap();
        let nn = BigRational::from_integer(BigInt::from(n));
        let expect = (&nn + BigRational::one())
            * (BigRational::from_integer(BigInt::from(2 * n)) + BigRational::one())
            / (BigRational::new(6.into(), 1.into()) * &nn * &nn);
        assert_eq!(v, Real::Exact(expect));
    }

    #[test]
    fn oracle_agreement_square() {
        // substituting w := 1/N into the symbolic sum reproduces the oracle
        // exactly for terminating expansions
        let r = sum("x^2", 0, 1, "W");
        for n in [64u64, 256, 1024] {
            let sub = r.value.eval_at(&Real::from_ratio(1, n as i64)).unwrap();
            let oracle = finite_sum_oracle(
                &e("x^2"),
                &Real::zero(),
                &Real::one(),
                n,
                OracleMode::Exact,
                None,
            )
            .unwrap();
            assert_eq!(sub, oracle);
        }
    }

    #[test]
    fn euler_maclaurin_sine() {
        let r = omega_sum(
            &e("sin(x)"),
            &Real::zero(),
            &Real::Float(core::f64::consts::PI),
            &NSpec::big_omega(),
            &SumOptions::default(),
        )
        .unwrap();
        assert_eq!(r.method, SumMethod::EulerMaclaurin);
        assert!(matches!(r.integral_coeff_source, CoeffSource::Quadrature(_)));
        let st = r.value.coeff(ord(0)).to_f64();
        assert!(Float::abs(st - 2.0) < 1e-9);
        // w^1 coefficient vanishes up to float noise since f(b) = f(a)
        assert!(Float::abs(r.value.coeff(ord(1)).to_f64()) < 1e-12);
        // w^2 coefficient is -pi^2/6
        let c2 = r.value.coeff(ord(2)).to_f64();
        let expect = -core::f64::consts::PI * core::f64::consts::PI / 6.0;
        assert!(Float::abs(c2 - expect) < 1e-6);
    }

    #[test]
    fn euler_maclaurin_matches_oracle() {
        // float oracle at N = 10^3, 10^4 and a Richardson fit of the w^2
        // coefficient
        let i_exact = 2.0f64;
        let mut fitted = Vec::new();
        for n in [1000u64, 10000] {
            let s = finite_sum_oracle(
                &e("sin(x)"),
                &Real::zero(),
                &Real::Float(core::f64::consts::PI),
                n,
                OracleMode::Float,
                None,
            )
            .unwrap()
            .to_f64();
            fitted.push((s - i_exact) * (n * n) as f64);
        }
        let expect = -core::f64::consts::PI * core::f64::consts::PI / 6.0;
        for c2 in fitted {
            assert!(Float::abs(c2 - expect) < 1e-3);
        }
    }

    #[test]
    fn quadrature_examples() {
        let q = quadrature_integral(&e("x^2"), &Real::zero(), &Real::one(), 1e-10, None).unwrap();
        assert!(q.exact);
        assert_eq!(q.value, Real::from_ratio(1, 3));

        let q = quadrature_integral(
            &e("sin(x)"),
            &Real::zero(),
            &Real::Float(core::f64::consts::PI),
            1e-10,
            None,
        )
        .unwrap();
        assert!(!q.exact);
        assert!(Float::abs(q.value.to_f64() - 2.0) < 1e-10);

        let q = quadrature_integral(&e("exp(x)"), &Real::zero(), &Real::one(), 1e-10, None).unwrap();
        assert!(Float::abs(q.value.to_f64() - (core::f64::consts::E - 1.0)) < 1e-10);
    }

    #[test]
    fn split_alignment() {
        let f = "if(x < 1, x, x^2)";
        // midpoint 1/2 aligns with 2W
        let r = omega_sum(
            &e(f),
            &Real::zero(),
            &Real::from_int(2),
            &nspec_parse("2*W").unwrap(),
            &SumOptions::default(),
        )
        .unwrap();
        assert_eq!(r.method, SumMethod::SplitPiecewise);
        assert!(r.value.is_exact());
        assert_eq!(r.value.coeff(ord(0)), Real::from_ratio(17, 6));
        assert!(r.value.valid_order() >= ord(8));

        // but not with W: only the standard part is certified
        let r = omega_sum(
            &e(f),
            &Real::zero(),
            &Real::from_int(2),
            &NSpec::big_omega(),
            &SumOptions::default(),
        )
        .unwrap();
        assert_eq!(r.value.valid_order(), ord(1));
        assert_eq!(r.value.coeff(ord(0)), Real::from_ratio(17, 6));
        assert!(r.notes.iter().any(|n| n.contains("align")));
    }

    #[test]
    fn split_matches_oracle() {
        let f = e("if(x < 1, x, x^2)");
        let r = omega_sum(
            &f,
            &Real::zero(),
            &Real::from_int(2),
            &nspec_parse("2*W").unwrap(),
            &SumOptions::default(),
        )
        .unwrap();
        for half_n in [8u64, 64, 256] {
            let n = 2 * half_n;
            let sub = r
                .value
                .eval_at(&Real::from_ratio(1, half_n as i64))
                .unwrap();
            let oracle =
                finite_sum_oracle(&f, &Real::zero(), &Real::from_int(2), n, OracleMode::Exact, None)
                    .unwrap();
            assert_eq!(sub, oracle, "N = {}", n);
        }
    }

    #[test]
    fn refinement_family_square() {
        let st = |n: &str| {
            sum("x^3 - x", 0, 2, n)
                .value
                .standard_part()
                .unwrap()
        };
        let base = st("W");
        for n in ["W + 1", "2*W", "3*W", "W^2"] {
            assert_eq!(st(n), base);
        }
        assert_eq!(base, Real::from_int(2));
    }

    #[test]
    fn rejects_undefined_inputs() {
        let err = omega_sum(
            &e("1/x"),
            &Real::zero(),
            &Real::one(),
            &NSpec::big_omega(),
            &SumOptions::default(),
        );
        assert!(err.is_err());
        assert!(omega_sum(
            &e("x"),
            &Real::one(),
            &Real::zero(),
            &NSpec::big_omega(),
            &SumOptions::default(),
        )
        .is_err());
    }

    #[test]
    fn abs_requires_breakpoints() {
        let f = e("abs(x - 1)");
        let err = omega_sum(
            &f,
            &Real::zero(),
            &Real::from_int(2),
            &nspec_parse("2*W").unwrap(),
            &SumOptions::default(),
        );
        assert!(err.is_err());

        let opts = SumOptions {
            abs_breakpoints: alloc::vec![Real::from_int(1)],
            ..SumOptions::default()
        };
        let r = omega_sum(&f, &Real::zero(), &Real::from_int(2), &nspec_parse("2*W").unwrap(), &opts)
            .unwrap();
        assert_eq!(r.value.coeff(ord(0)), Real::from_int(1));
        assert_eq!(r.method, SumMethod::SplitPiecewise);

        let bad = SumOptions {
            abs_breakpoints: alloc::vec![Real::from_ratio(1, 2)],
            ..SumOptions::default()
        };
        assert!(omega_sum(&f, &Real::zero(), &Real::from_int(2), &nspec_parse("2*W").unwrap(), &bad)
            .is_err());
    }
}

