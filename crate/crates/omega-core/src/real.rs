//! Exact-or-float real scalars.
//!
//! Every quantity in the crate that is "a real number" is a [`Real`]: either
//! an arbitrary-precision rational or a double. Arithmetic between two exact
//! values stays exact; any float operand contaminates the result. This keeps
//! the provenance of exactness honest all the way up to verdicts and reports.

use alloc::string::ToString;
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, One, Signed, ToPrimitive, Zero};

/// A real scalar: exact rational or double-precision float.
#[derive(Clone, Debug)]
pub enum Real {
    Exact(BigRational),
    Float(f64),
}

impl Real {
    pub fn zero() -> Self {
        Real::Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Real::Exact(BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Real::Exact(BigRational::from_integer(BigInt::from(n)))
    }

    /// Exact `p/q`. Panics if `q == 0`.
    pub fn from_ratio(p: i64, q: i64) -> Self {
        Real::Exact(BigRational::new(BigInt::from(p), BigInt::from(q)))
    }

    pub fn pi() -> Self {
        Real::Float(core::f64::consts::PI)
    }

    pub fn euler() -> Self {
        Real::Float(core::f64::consts::E)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Real::Exact(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Real::Exact(r) => r.is_zero(),
            Real::Float(f) => *f == 0.0,
        }
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Real::Exact(r) => r.is_negative(),
            Real::Float(f) => *f < 0.0,
        }
    }

    pub fn is_positive(&self) -> bool {
        match self {
            Real::Exact(r) => r.is_positive(),
            Real::Float(f) => *f > 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Real::Exact(_) => true,
            Real::Float(f) => f.is_finite(),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Real::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Real::Float(f) => *f,
        }
    }

    /// Drops exactness, keeping the value.
    pub fn to_float(&self) -> Real {
        Real::Float(self.to_f64())
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        match self {
            Real::Exact(r) => Some(r),
            Real::Float(_) => None,
        }
    }

    pub fn abs(&self) -> Real {
        match self {
            Real::Exact(r) => Real::Exact(r.abs()),
            Real::Float(f) => Real::Float(Float::abs(*f)),
        }
    }

    /// Exact comparison when both sides are exact, float comparison otherwise.
    pub fn cmp_real(&self, other: &Real) -> Ordering {
        match (self, other) {
            (Real::Exact(a), Real::Exact(b)) => a.cmp(b),
            _ => self
                .to_f64()
                .partial_cmp(&other.to_f64())
                .unwrap_or(Ordering::Equal),
        }
    }

    /// True when the values agree exactly (exact mode) or within `tol` (any
    /// float involved).
    pub fn agrees(&self, other: &Real, tol: f64) -> bool {
        match (self, other) {
            (Real::Exact(a), Real::Exact(b)) => a == b,
            _ => Float::abs(self.to_f64() - other.to_f64()) <= tol,
        }
    }

    /// Integer power. `None` for `0^n` with `n < 0`.
    pub fn pow_int(&self, n: i64) -> Option<Real> {
        if self.is_zero() && n < 0 {
            return None;
        }
        match self {
            Real::Exact(r) => {
                let p = n.unsigned_abs().try_into().ok()?;
                let v = num_traits::pow::pow(r.clone(), p);
                if n < 0 {
                    Some(Real::Exact(v.recip()))
                } else {
                    Some(Real::Exact(v))
                }
            }
            Real::Float(f) => {
                let p = i32::try_from(n).ok()?;
                Some(Real::Float(Float::powi(*f, p)))
            }
        }
    }

    /// Rational power `self^(p/q)`.
    ///
    /// Exact when the base is exact and the `q`-th root is rational;
    /// otherwise falls back to `powf`. `None` on domain violations
    /// (`0^negative`, negative base with even root or float path).
    pub fn pow_rational(&self, exp: &BigRational) -> Option<Real> {
        if exp.is_integer() {
            return self.pow_int(exp.numer().to_i64()?);
        }
        if self.is_zero() {
            return if exp.is_negative() {
                None
            } else {
                Some(Real::zero())
            };
        }
        if let Real::Exact(r) = self {
            let q = exp.denom().to_u32()?;
            if let Some(root) = exact_nth_root(r, q) {
                return Real::Exact(root).pow_int(exp.numer().to_i64()?);
            }
        }
        let v = Float::powf(self.to_f64(), exp.to_f64()?);
        if v.is_finite() {
            Some(Real::Float(v))
        } else {
            None
        }
    }

    /// Square root: exact for perfect squares, float otherwise, `None` if
    /// negative.
    pub fn sqrt(&self) -> Option<Real> {
        if self.is_negative() {
            return None;
        }
        if let Real::Exact(r) = self {
            if let Some(root) = exact_nth_root(r, 2) {
                return Some(Real::Exact(root));
            }
        }
        Some(Real::Float(Float::sqrt(self.to_f64())))
    }

    pub fn min(self, other: Real) -> Real {
        if self.cmp_real(&other) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Real) -> Real {
        if self.cmp_real(&other) == Ordering::Less {
            other
        } else {
            self
        }
    }
}

/// Exact `q`-th root of a rational, when it exists.
fn exact_nth_root(r: &BigRational, q: u32) -> Option<BigRational> {
    if r.is_negative() {
        if q % 2 == 0 {
            return None;
        }
        return exact_nth_root(&-r, q).map(|v| -v);
    }
    let rn = num_integer::Roots::nth_root(r.numer(), q);
    let rd = num_integer::Roots::nth_root(r.denom(), q);
    let exact = num_traits::pow::pow(rn.clone(), q as usize) == *r.numer()
        && num_traits::pow::pow(rd.clone(), q as usize) == *r.denom();
    if exact {
        Some(BigRational::new(rn, rd))
    } else {
        None
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for Real {
            type Output = Real;
            fn $method(self, rhs: Real) -> Real {
                match (self, rhs) {
                    (Real::Exact(a), Real::Exact(b)) => Real::Exact(a $op b),
                    (a, b) => Real::Float(a.to_f64() $op b.to_f64()),
                }
            }
        }
        impl $trait for &Real {
            type Output = Real;
            fn $method(self, rhs: &Real) -> Real {
                self.clone() $op rhs.clone()
            }
        }
    };
}

impl_binop!(Add, add, +);
impl_binop!(Sub, sub, -);
impl_binop!(Mul, mul, *);

impl Div for Real {
    type Output = Real;

    /// Division. Callers must reject zero divisors first; an exact zero
    /// divisor panics here, a float one produces a non-finite value.
    fn div(self, rhs: Real) -> Real {
        match (self, rhs) {
            (Real::Exact(a), Real::Exact(b)) => Real::Exact(a / b),
            (a, b) => Real::Float(a.to_f64() / b.to_f64()),
        }
    }
}

impl Div for &Real {
    type Output = Real;
    fn div(self, rhs: &Real) -> Real {
        self.clone() / rhs.clone()
    }
}

impl Neg for Real {
    type Output = Real;
    fn neg(self) -> Real {
        match self {
            Real::Exact(r) => Real::Exact(-r),
            Real::Float(f) => Real::Float(-f),
        }
    }
}

impl Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        -self.clone()
    }
}

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Real::Exact(a), Real::Exact(b)) => a == b,
            _ => self.to_f64() == other.to_f64(),
        }
    }
}

impl From<BigRational> for Real {
    fn from(r: BigRational) -> Self {
        Real::Exact(r)
    }
}

impl From<f64> for Real {
    fn from(f: f64) -> Self {
        Real::Float(f)
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Real::Exact(r) => write!(f, "{}", r),
            Real::Float(v) => {
                let s = v.to_string();
                // Keep float provenance visible: "2" would read as exact.
                if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
                    write!(f, "{}", s)
                } else {
                    write!(f, "{}.0", s)
                }
            }
        }
    }
}
