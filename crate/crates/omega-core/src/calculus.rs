//! Machine checks for the fundamental theorem of calculus over infinitesimal
//! increments, the mean-value lemma behind it, and the exact telescoping
//! identity the second part reduces to at finite `N`.
//!
//! The accumulator `F(x) = ∫_a^x f` is never materialized: the difference
//! `F(x+α) - F(x)` is the integral over the infinitesimal interval
//! `[x, x+α]`, computed directly as a Taylor expansion of `f` at `x`. That
//! keeps the checks free of symbolic integration.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use core::cmp::Ordering;
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, One};

use crate::expr::{
    differentiate, eval_hyper, eval_real, resolve_at, simplify, EvalError, Expr,
};
use crate::hyperreal::{ord, HClass, Hyperreal, FLOAT_COEFF_TOL};
use crate::integral::{default_family, integrate, IntegralVerdict, IntegrateOptions};
use crate::omegasum::{finite_sum_oracle, OmegaSumError, OracleMode};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub enum CalculusError {
    Precondition(String),
    /// The supplied H failed validation against f before any integration.
    NotAntiderivative(String),
    Domain(String),
}

impl fmt::Display for CalculusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalculusError::Precondition(m) => write!(f, "precondition: {}", m),
            CalculusError::NotAntiderivative(m) => write!(f, "not an antiderivative: {}", m),
            CalculusError::Domain(m) => write!(f, "domain error: {}", m),
        }
    }
}

impl core::error::Error for CalculusError {}

impl From<EvalError> for CalculusError {
    fn from(e: EvalError) -> Self {
        CalculusError::Domain(e.message)
    }
}

impl From<OmegaSumError> for CalculusError {
    fn from(e: OmegaSumError) -> Self {
        CalculusError::Domain(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Difference-quotient increments
// ---------------------------------------------------------------------------

/// A validated difference-quotient increment: a base point inside `[a,b]`
/// and a nonzero infinitesimal step that stays inside the interval (positive
/// at the left endpoint, negative at the right).
#[derive(Clone, Debug)]
pub struct DiffQuotientSpec {
    pub x: Real,
    pub alpha: Hyperreal,
    pub depth: u32,
}

impl DiffQuotientSpec {
    pub fn new(
        x: Real,
        alpha: Hyperreal,
        depth: u32,
        a: &Real,
        b: &Real,
    ) -> Result<Self, CalculusError> {
        if x.cmp_real(a) == Ordering::Less || b.cmp_real(&x) == Ordering::Less {
            return Err(CalculusError::Precondition(format!(
                "x = {} lies outside [{}, {}]",
                x, a, b
            )));
        }
        if alpha.classify() != HClass::Infinitesimal {
            return Err(CalculusError::Precondition(format!(
                "alpha = {} is not a nonzero infinitesimal",
                alpha
            )));
        }
        let positive = alpha
            .leading()
            .map(|(_, c)| c.is_positive())
            .unwrap_or(false);
        if x == *a && !positive {
            return Err(CalculusError::Precondition(String::from(
                "alpha must be positive at the left endpoint",
            )));
        }
        if x == *b && positive {
            return Err(CalculusError::Precondition(String::from(
                "alpha must be negative at the right endpoint",
            )));
        }
        Ok(DiffQuotientSpec { x, alpha, depth })
    }
}

// ---------------------------------------------------------------------------
// The infinitesimal-interval integral
// ---------------------------------------------------------------------------

/// `∫_x^{x+α} f(t) dt = Σ_{j=0}^{depth} f^{(j)}(x)·α^{j+1}/(j+1)!`,
/// trusted through the first omitted term's order.
pub fn integral_taylor(
    f: &Expr,
    x: &Real,
    alpha: &Hyperreal,
    depth: u32,
) -> Result<Hyperreal, CalculusError> {
    if alpha.classify() != HClass::Infinitesimal {
        return Err(CalculusError::Precondition(format!(
            "alpha = {} is not a nonzero infinitesimal",
            alpha
        )));
    }
    // errors at a breakpoint of f, per the smoothness precondition
    let piece = resolve_at(f, x)?;
    let mut deriv = piece;
    let mut apow = alpha.clone();
    let mut fact = BigRational::one();
    let mut acc = Hyperreal::zero(alpha.valid_order());
    for j in 0..=depth {
        if j > 0 {
            deriv = differentiate(&deriv)?;
            apow = apow.mul(alpha);
        }
        fact *= BigRational::from_integer(BigInt::from(j + 1));
        let cj = eval_real(&deriv, x)?;
        if !cj.is_zero() {
            let coeff = cj * Real::Exact(fact.recip());
            acc = acc.add(&apow.scale(&coeff));
        }
    }
    let trust = alpha.order_of_magnitude() * ord(depth as i64 + 2);
    Ok(acc.truncate(trust))
}

// ---------------------------------------------------------------------------
// FTC part I
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Ftc1Witness {
    pub alpha: Hyperreal,
    /// `(F(x+α) - F(x))/α` as an expansion in `w`.
    pub quotient: Hyperreal,
    pub st: Real,
}

#[derive(Clone, Debug)]
pub struct Ftc1Report {
    pub x: Real,
    pub fx: Real,
    pub witnesses: Vec<Ftc1Witness>,
    /// Every standard part equals `f(x)` and the witnesses agree with each
    /// other at order 0.
    pub pass: bool,
    pub exact: bool,
    pub tolerance: f64,
}

/// Checks `F'(x) = f(x)` by forming the difference quotient over each
/// increment: `st((F(x+α) - F(x))/α) = f(x)` for every supplied alpha.
pub fn ftc1_check(
    f: &Expr,
    a: &Real,
    b: &Real,
    x: &Real,
    alphas: &[Hyperreal],
    depth: u32,
    tol: f64,
) -> Result<Ftc1Report, CalculusError> {
    if alphas.is_empty() {
        return Err(CalculusError::Precondition(String::from(
            "at least one alpha required",
        )));
    }
    let piece = resolve_at(f, x)?;
    let fx = eval_real(&piece, x)?;
    let mut witnesses = Vec::with_capacity(alphas.len());
    let mut exact = fx.is_exact();
    for alpha in alphas {
        let spec = DiffQuotientSpec::new(x.clone(), alpha.clone(), depth, a, b)?;
        let numerator = integral_taylor(f, x, &spec.alpha, depth)?;
        let quotient = numerator.mul(&spec.alpha.invert().map_err(|e| {
            CalculusError::Precondition(e.to_string())
        })?);
        let st = quotient
            .standard_part()
            .map_err(|e| CalculusError::Domain(e.to_string()))?;
        exact &= quotient.is_exact();
        witnesses.push(Ftc1Witness {
            alpha: alpha.clone(),
            quotient,
            st,
        });
    }
    let agrees = |u: &Real, v: &Real| {
        if exact {
            u == v
        } else {
            Float::abs(u.to_f64() - v.to_f64()) <= tol
        }
    };
    let pass = witnesses.iter().all(|w| agrees(&w.st, &fx))
        && witnesses.windows(2).all(|w| agrees(&w[0].st, &w[1].st));
    Ok(Ftc1Report {
        x: x.clone(),
        fx,
        witnesses,
        pass,
        exact,
        tolerance: tol,
    })
}

// ---------------------------------------------------------------------------
// The mean-value lemma
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct L2Report {
    /// `H'(x) - (H(x+α) - H(x))/α`; zero or infinitesimal when the lemma
    /// holds. Float-mode coefficients below the shared noise floor are
    /// already removed.
    pub gamma: Hyperreal,
    pub class: HClass,
    pub pass: bool,
}

/// Exact cancellations survive float evaluation only up to roundoff, so
/// classification treats sub-tolerance float coefficients as zero.
fn drop_float_noise(h: &Hyperreal) -> Hyperreal {
    let v = h.valid_order();
    let mut out = Hyperreal::zero(v);
    for (exp, coeff) in h.terms() {
        if coeff.abs().to_f64() >= FLOAT_COEFF_TOL {
            out = out.add(&Hyperreal::monomial(exp, coeff.clone(), v));
        }
    }
    out
}

/// Checks `H'(x) = (H(x+α) - H(x))/α + γ` with `γ` zero or infinitesimal,
/// at a possibly nonstandard base point.
pub fn l2_check(
    h: &Expr,
    x_val: &Hyperreal,
    alpha: &Hyperreal,
    depth: u32,
) -> Result<L2Report, CalculusError> {
    if alpha.classify() != HClass::Infinitesimal {
        return Err(CalculusError::Precondition(format!(
            "alpha = {} is not a nonzero infinitesimal",
            alpha
        )));
    }
    match x_val.classify() {
        HClass::Zero | HClass::Infinitesimal | HClass::Appreciable => {}
        other => {
            return Err(CalculusError::Precondition(format!(
                "base point must be limited, got {:?}",
                other
            )))
        }
    }
    let dh = differentiate(h)?;
    let lhs = eval_hyper(&dh, x_val, depth)?;
    let shifted = x_val.add(alpha);
    let quotient = eval_hyper(h, &shifted, depth)?
        .sub(&eval_hyper(h, x_val, depth)?)
        .mul(&alpha.invert().map_err(|e| {
            CalculusError::Precondition(e.to_string())
        })?);
    let mut gamma = lhs.sub(&quotient);
    if !gamma.is_exact() {
        gamma = drop_float_noise(&gamma);
    }
    let class = gamma.classify();
    let pass = matches!(class, HClass::Zero | HClass::Infinitesimal);
    Ok(L2Report { gamma, class, pass })
}

// ---------------------------------------------------------------------------
// FTC part II
// ---------------------------------------------------------------------------

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn unit_f64(state: &mut u64) -> f64 {
    (splitmix64(state) >> 11) as f64 / (1u64 << 53) as f64
}

pub const ANTIDERIVATIVE_SAMPLES: usize = 50;
pub const ANTIDERIVATIVE_TOL: f64 = 1e-10;

/// How `H' = f` was established.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AntiderivativeCheck {
    /// `simplify(H')` and `simplify(f)` are structurally identical.
    Symbolic,
    /// Agreement at 50 deterministic sample points within 1e-10.
    Sampled,
}

fn validate_antiderivative(
    f: &Expr,
    h: &Expr,
    a: &Real,
    b: &Real,
) -> Result<AntiderivativeCheck, CalculusError> {
    let dh = simplify(&differentiate(&simplify(h)).map_err(|e| {
        CalculusError::NotAntiderivative(format!("H is not differentiable: {}", e.message))
    })?);
    if dh == simplify(f) {
        return Ok(AntiderivativeCheck::Symbolic);
    }
    let (af, bf) = (a.to_f64(), b.to_f64());
    let mut state = 0x0ddba11u64;
    let mut worst = 0.0f64;
    for _ in 0..ANTIDERIVATIVE_SAMPLES {
        let x = Real::Float(af + (bf - af) * unit_f64(&mut state));
        let lhs = eval_real(&dh, &x).map_err(|e| {
            CalculusError::NotAntiderivative(format!("H' undefined at {}: {}", x, e.message))
        })?;
        let rhs = eval_real(f, &x).map_err(|e| CalculusError::Domain(e.message))?;
        worst = Float::max(worst, Float::abs(lhs.to_f64() - rhs.to_f64()));
    }
    if worst <= ANTIDERIVATIVE_TOL {
        Ok(AntiderivativeCheck::Sampled)
    } else {
        Err(CalculusError::NotAntiderivative(format!(
            "H' deviates from f by {} at sampled points",
            worst
        )))
    }
}

#[derive(Clone, Debug)]
pub struct Ftc2Report {
    pub verdict: IntegralVerdict,
    /// `H(b) - H(a)`.
    pub difference: Real,
    /// `L - (H(b) - H(a))`.
    pub residual: Real,
    pub validation: AntiderivativeCheck,
    pub exact: bool,
    pub pass: bool,
    pub tolerance: f64,
}

/// Checks `∫_a^b f = H(b) - H(a)` after validating that `H` really is an
/// antiderivative of `f`. Exact verdicts must match exactly.
pub fn ftc2_check(
    f: &Expr,
    h: &Expr,
    a: &Real,
    b: &Real,
    tol: f64,
    opts: &IntegrateOptions,
) -> Result<Ftc2Report, CalculusError> {
    if a.cmp_real(b) != Ordering::Less {
        return Err(CalculusError::Precondition(String::from(
            "requires a < b",
        )));
    }
    let validation = validate_antiderivative(f, h, a, b)?;
    let verdict = integrate(f, a, b, &default_family(), opts);
    let value = match verdict.value() {
        Some(v) => v.clone(),
        None => {
            return Err(CalculusError::Precondition(format!(
                "integral verdict is {}",
                verdict.verdict.name()
            )))
        }
    };
    let difference = eval_real(h, b)? - eval_real(h, a)?;
    let residual = value.clone() - difference.clone();
    let exact = value.is_exact() && difference.is_exact();
    let pass = if exact {
        residual.is_zero()
    } else {
        Float::abs(residual.to_f64()) <= tol
    };
    Ok(Ftc2Report {
        verdict,
        difference,
        residual,
        validation,
        exact,
        pass,
        tolerance: tol,
    })
}

// ---------------------------------------------------------------------------
// The telescoping identity
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct TelescopeReport {
    pub n: u64,
    /// `Σ_{k=1}^{N} (H(x_k) - H(x_{k-1}))`.
    pub telescoped: Real,
    /// `H(b) - H(a)`.
    pub difference: Real,
    /// The collapse is an identity: exact arithmetic makes this literal
    /// equality.
    pub collapse_exact: bool,
    /// `|Σ H'(x_k)Δx - (H(b) - H(a))|`: the finite-`N` size of the proof's
    /// error terms.
    pub residual: Real,
}

/// Re-enacts the telescoping collapse `Σ (H(x_k) - H(x_{k-1})) = H(b) - H(a)`
/// at finite `N` and measures how close the right sum of `H'` is to the
/// collapsed value.
pub fn telescoping_oracle(
    h: &Expr,
    a: &Real,
    b: &Real,
    n: u64,
) -> Result<TelescopeReport, CalculusError> {
    if a.cmp_real(b) != Ordering::Less {
        return Err(CalculusError::Precondition(String::from(
            "requires a < b",
        )));
    }
    if n < 1 {
        return Err(CalculusError::Precondition(String::from(
            "N must be at least 1",
        )));
    }
    let width = b.clone() - a.clone();
    let step = width * Real::from_ratio(1, n as i64);
    let mut telescoped = Real::zero();
    let mut prev = eval_real(h, a)?;
    for k in 1..=n {
        let x = if k == n {
            b.clone()
        } else {
            a.clone() + step.clone() * Real::from_int(k as i64)
        };
        let cur = eval_real(h, &x)
            .map_err(|e| CalculusError::Domain(format!("{} (partition point k = {})", e.message, k)))?;
        telescoped = telescoped + (cur.clone() - prev);
        prev = cur;
    }
    let difference = eval_real(h, b)? - eval_real(h, a)?;
    let collapse_exact = telescoped == difference;

    let dh = differentiate(h)?;
    let mode = if a.is_exact() && b.is_exact() && difference.is_exact() {
        OracleMode::Exact
    } else {
        OracleMode::Float
    };
    let sum = finite_sum_oracle(&dh, a, b, n, mode, None)?;
    let residual = (sum - difference.clone()).abs();
    Ok(TelescopeReport {
        n,
        telescoped,
        difference,
        collapse_exact,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, DEFAULT_TAYLOR_DEPTH};
    use alloc::string::ToString;

    fn e(text: &str) -> Expr {
        parse(text).unwrap()
    }

    fn omega() -> Hyperreal {
        Hyperreal::omega(ord(8))
    }

    #[test]
    fn taylor_integral_examples() {
        let t = integral_taylor(&e("x^2"), &Real::one(), &omega(), DEFAULT_TAYLOR_DEPTH).unwrap();
        assert_eq!(t.to_string(), "w + w^2 + 1/3*w^3 (mod w^8)");

        let t = integral_taylor(&e("5"), &Real::from_ratio(1, 2), &omega(), 4).unwrap();
        assert_eq!(t.to_string(), "5*w (mod w^6)");

        let t = integral_taylor(&e("sin(x)"), &Real::zero(), &omega(), DEFAULT_TAYLOR_DEPTH).unwrap();
        // antiderivative of sin from 0 is 1 - cos
        let sub = t.eval_at(&Real::Float(1e-3)).unwrap().to_f64();
        let expect = 1.0 - Float::cos(1e-3f64);
        assert!(Float::abs(sub - expect) < 1e-15);
        assert!(Float::abs(t.coeff(ord(2)).to_f64() - 0.5) < 1e-12);
        assert!(Float::abs(t.coeff(ord(4)).to_f64() + 1.0 / 24.0) < 1e-12);
    }

    #[test]
    fn taylor_integral_rejects_breakpoint() {
        let f = e("if(x < 1, x, x^2)");
        assert!(integral_taylor(&f, &Real::one(), &omega(), 4).is_err());
        assert!(integral_taylor(&f, &Real::from_int(0), &omega(), 4).is_ok());
    }

    #[test]
    fn ftc1_square_exact() {
        let r = ftc1_check(
            &e("x^2"),
            &Real::zero(),
            &Real::from_int(2),
            &Real::one(),
            &[omega()],
            DEFAULT_TAYLOR_DEPTH,
            1e-10,
        )
        .unwrap();
        assert!(r.pass);
        assert!(r.exact);
        assert_eq!(r.fx, Real::one());
        assert_eq!(
            r.witnesses[0].quotient.to_string(),
            "1 + w + 1/3*w^2 (mod w^7)"
        );
    }

    #[test]
    fn ftc1_constant_any_alpha() {
        let alphas = [
            omega(),
            omega().neg(),
            omega().scale(&Real::from_int(2)),
            Hyperreal::monomial(ord(2), Real::one(), ord(8)),
        ];
        let r = ftc1_check(
            &e("7/2"),
            &Real::zero(),
            &Real::one(),
            &Real::from_ratio(1, 2),
            &alphas,
            4,
            1e-10,
        )
        .unwrap();
        assert!(r.pass && r.exact);
        for w in &r.witnesses {
            assert_eq!(w.st, Real::from_ratio(7, 2));
            assert_eq!(w.quotient.term_count(), 1);
        }
    }

    #[test]
    fn ftc1_sine_multiple_alphas() {
        let alphas = [
            omega(),
            omega().neg(),
            Hyperreal::monomial(ord(2), Real::one(), ord(8)),
        ];
        let r = ftc1_check(
            &e("sin(x)"),
            &Real::zero(),
            &Real::Float(core::f64::consts::PI),
            &Real::Float(core::f64::consts::FRAC_PI_2),
            &alphas,
            DEFAULT_TAYLOR_DEPTH,
            1e-10,
        )
        .unwrap();
        assert!(r.pass);
        for w in &r.witnesses {
            assert!(Float::abs(w.st.to_f64() - 1.0) <= 1e-10);
        }
    }

    #[test]
    fn ftc1_endpoint_sign_constraint() {
        let err = ftc1_check(
            &e("x^2"),
            &Real::zero(),
            &Real::one(),
            &Real::zero(),
            &[omega().neg()],
            4,
            1e-10,
        );
        assert!(matches!(err, Err(CalculusError::Precondition(_))));
        let err = ftc1_check(
            &e("x^2"),
            &Real::zero(),
            &Real::one(),
            &Real::one(),
            &[omega()],
            4,
            1e-10,
        );
        assert!(matches!(err, Err(CalculusError::Precondition(_))));
        // but the negative increment is fine at the right endpoint
        assert!(ftc1_check(
            &e("x^2"),
            &Real::zero(),
            &Real::one(),
            &Real::one(),
            &[omega().neg()],
            4,
            1e-10,
        )
        .unwrap()
        .pass);
    }

    #[test]
    fn l2_cubic() {
        let x = Hyperreal::from_real(Real::one(), ord(8));
        let r = l2_check(&e("x^3/3"), &x, &omega(), DEFAULT_TAYLOR_DEPTH).unwrap();
        assert!(r.pass);
        assert_eq!(r.class, HClass::Infinitesimal);
        assert_eq!(r.gamma.coeff(ord(1)), Real::from_int(-1));
        assert_eq!(r.gamma.coeff(ord(2)), Real::from_ratio(-1, 3));
    }

    #[test]
    fn l2_linear_exact_zero() {
        let x = Hyperreal::from_real(Real::from_ratio(3, 4), ord(8));
        let r = l2_check(&e("2*x + 1"), &x, &omega(), 4).unwrap();
        assert!(r.pass);
        assert_eq!(r.class, HClass::Zero);
        assert!(r.gamma.is_zero_value());
    }

    #[test]
    fn l2_nonstandard_base_point() {
        let r = l2_check(&e("sin(x)"), &omega(), &omega(), DEFAULT_TAYLOR_DEPTH).unwrap();
        assert!(r.pass);
        assert_eq!(r.class, HClass::Infinitesimal);
    }

    #[test]
    fn l2_rejects_unlimited_base() {
        let err = l2_check(&e("x^2"), &Hyperreal::big_omega(ord(8)), &omega(), 4);
        assert!(matches!(err, Err(CalculusError::Precondition(_))));
    }

    #[test]
    fn l2_displaced_float_base_survives_roundoff() {
        // Scaling the displaced base by 3/2 rounds once more than the
        // undisplaced route; the leftover ~1e-16 constant must not be
        // classified as appreciable.
        for h in ["sin(x)", "exp(x)", "cos(2*x) + x"] {
            let base = Hyperreal::from_real(Real::from_ratio(11, 20), ord(8))
                .add(&omega().scale(&Real::from_ratio(1, 2)));
            for alpha in [omega(), omega().scale(&Real::from_int(2))] {
                let r = l2_check(&e(h), &base, &alpha, DEFAULT_TAYLOR_DEPTH).unwrap();
                assert!(r.pass, "{h}: gamma = {} ({:?})", r.gamma, r.class);
            }
        }
    }

    #[test]
    fn ftc2_polynomial_exact() {
        let r = ftc2_check(
            &e("x^2"),
            &e("x^3/3"),
            &Real::zero(),
            &Real::one(),
            1e-8,
            &IntegrateOptions::default(),
        )
        .unwrap();
        assert!(r.pass && r.exact);
        assert_eq!(r.validation, AntiderivativeCheck::Symbolic);
        assert_eq!(r.difference, Real::from_ratio(1, 3));
        assert!(r.residual.is_zero());
    }

    #[test]
    fn ftc2_constant_shift_invariant() {
        let r = ftc2_check(
            &e("x^2"),
            &e("x^3/3 + 7"),
            &Real::zero(),
            &Real::one(),
            1e-8,
            &IntegrateOptions::default(),
        )
        .unwrap();
        assert!(r.pass && r.exact);
        assert!(r.residual.is_zero());
    }

    #[test]
    fn ftc2_cosine() {
        let r = ftc2_check(
            &e("cos(x)"),
            &e("sin(x)"),
            &Real::zero(),
            &Real::Float(core::f64::consts::FRAC_PI_2),
            1e-8,
            &IntegrateOptions::default(),
        )
        .unwrap();
        assert!(r.pass);
        assert!(Float::abs(r.difference.to_f64() - 1.0) < 1e-12);
        assert!(Float::abs(r.residual.to_f64()) < 1e-8);
    }

    #[test]
    fn ftc2_rejects_wrong_antiderivative() {
        let err = ftc2_check(
            &e("x^2"),
            &e("x^2"),
            &Real::zero(),
            &Real::one(),
            1e-8,
            &IntegrateOptions::default(),
        );
        assert!(matches!(err, Err(CalculusError::NotAntiderivative(_))));
    }

    #[test]
    fn telescoping_collapses_exactly() {
        let r = telescoping_oracle(&e("x^3/3"), &Real::zero(), &Real::one(), 1_000).unwrap();
        assert!(r.collapse_exact);
        assert_eq!(r.telescoped, Real::from_ratio(1, 3));
        // residual = w/2 + w^2/6 at w = 1e-3
        let expect = 0.5e-3 + 1e-6 / 6.0;
        assert!(Float::abs(r.residual.to_f64() - expect) < 1e-15);
    }

    #[test]
    fn telescoping_linear_zero_residual() {
        for n in [1u64, 2, 17, 1_000] {
            let r = telescoping_oracle(&e("x"), &Real::from_int(2), &Real::from_int(5), n).unwrap();
            assert!(r.collapse_exact);
            assert!(r.residual.is_zero());
        }
    }

    #[test]
    fn telescoping_residual_shrinks() {
        let coarse = telescoping_oracle(&e("x^2"), &Real::zero(), &Real::one(), 100).unwrap();
        let fine = telescoping_oracle(&e("x^2"), &Real::zero(), &Real::one(), 10_000).unwrap();
        let ratio = coarse.residual.to_f64() / fine.residual.to_f64();
        assert!(ratio > 99.0 && ratio < 101.0, "ratio {}", ratio);
    }

    #[test]
    fn ftc_directions_agree() {
        // d/dx ∫_0^x cos = cos(x) at x, and ∫_0^x cos = sin(x) - sin(0)
        let x = Real::Float(1.0);
        let r1 = ftc1_check(
            &e("cos(x)"),
            &Real::zero(),
            &Real::from_int(2),
            &x,
            &[omega()],
            DEFAULT_TAYLOR_DEPTH,
            1e-10,
        )
        .unwrap();
        let r2 = ftc2_check(
            &e("cos(x)"),
            &e("sin(x)"),
            &Real::zero(),
            &x,
            1e-8,
            &IntegrateOptions::default(),
        )
        .unwrap();
        assert!(r1.pass && r2.pass);
        assert!(Float::abs(r1.fx.to_f64() - Float::cos(1.0f64)) < 1e-12);
        assert!(Float::abs(r2.difference.to_f64() - Float::sin(1.0f64)) < 1e-12);
    }
}
