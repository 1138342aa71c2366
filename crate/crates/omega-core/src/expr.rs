//! Expression language for real functions of one variable.
//!
//! The grammar is deliberately closed: rational and named constants (`pi`,
//! `e`), the variable `x`, `+ - * /`, powers with constant rational
//! exponents, the functions `sin cos exp log sqrt abs`, and conditionals
//! `if(x < c, e1, e2)` against constant thresholds. Within this class
//! smoothness is decidable, derivatives are symbolic, and the breakpoint set
//! is syntactic, which is what the sum engine needs.
//!
//! Evaluation is exact wherever the tree is rational-closed; any
//! transcendental evaluation produces a float and the contamination is
//! carried by [`Real`]. The Taylor lift [`eval_hyper`] extends a function to
//! hyperreal arguments near a real point.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use core::cmp::Ordering;
use core::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::hyperreal::{ord, parse_decimal, Hyperreal, HyperrealError};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// Immutable expression tree. Subtrees are shared, so clones are cheap and
/// evaluation is safe to run in parallel.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(Real),
    Pi,
    E,
    Var,
    Neg(Arc<Expr>),
    Fun(Func, Arc<Expr>),
    Bin(BinOp, Arc<Expr>, Arc<Expr>),
    /// Power with a constant rational exponent.
    Pow(Arc<Expr>, BigRational),
    /// `if(x < threshold, less, otherwise)`; the threshold is a breakpoint.
    If {
        threshold: Real,
        less: Arc<Expr>,
        otherwise: Arc<Expr>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at offset {}: {}", self.offset, self.message)
    }
}

impl core::error::Error for ParseError {}

/// Evaluation failure; the message names the offending subexpression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalError {
    pub message: String,
}

impl EvalError {
    fn at(what: &str, node: &Expr) -> Self {
        EvalError {
            message: format!("{} in `{}`", what, node),
        }
    }
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl core::error::Error for EvalError {}

impl From<HyperrealError> for EvalError {
    fn from(e: HyperrealError) -> Self {
        EvalError {
            message: e.to_string(),
        }
    }
}

/// Redefines the function's value at one point. Right-hand sums never
/// sample the left endpoint, so integration results are unaffected; the
/// wrapper exists so grid probes and quadrature can cope with a removable
/// endpoint gap, and reports flag its use.
#[derive(Clone, Debug, PartialEq)]
pub struct PointFix {
    pub at: Real,
    pub value: Real,
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

/// Effective precedence for parenthesization; mirrors the parse grammar
/// (additive 1, multiplicative 2, unary minus 3, power 4, atoms 5).
/// Constants that print with a slash or sign get the precedence of the
/// operator their text re-parses through.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add, ..) | Expr::Bin(BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul, ..) | Expr::Bin(BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        Expr::Num(r) => match r {
            Real::Exact(q) if !q.is_integer() => 2,
            _ => {
                if r.is_negative() {
                    3
                } else {
                    5
                }
            }
        },
        _ => 5,
    }
}

fn fmt_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({})", child)
    } else {
        write!(f, "{}", child)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(r) => write!(f, "{}", r),
            Expr::Pi => write!(f, "pi"),
            Expr::E => write!(f, "e"),
            Expr::Var => write!(f, "x"),
            Expr::Neg(u) => {
                write!(f, "-")?;
                fmt_child(f, u, prec(u) < 3)
            }
            Expr::Fun(fun, u) => write!(f, "{}({})", fun.name(), u),
            Expr::Bin(op, l, r) => {
                let p = prec(self);
                fmt_child(f, l, prec(l) < p)?;
                match op {
                    BinOp::Add | BinOp::Sub => write!(f, " {} ", op.symbol())?,
                    BinOp::Mul | BinOp::Div => write!(f, "{}", op.symbol())?,
                }
                fmt_child(f, r, prec(r) <= p)
            }
            Expr::Pow(b, q) => {
                fmt_child(f, b, prec(b) < 5)?;
                if q.is_integer() && !q.is_negative() {
                    write!(f, "^{}", q.numer())
                } else {
                    write!(f, "^({})", q)
                }
            }
            Expr::If {
                threshold,
                less,
                otherwise,
            } => write!(f, "if(x < {}, {}, {})", threshold, less, otherwise),
        }
    }
}

/// Canonical text form; `parse(to_text(e))` is structurally equal to `e`.
pub fn to_text(e: &Expr) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// Smart constructors / simplification
// ---------------------------------------------------------------------------

fn num_of(e: &Expr) -> Option<&Real> {
    match e {
        Expr::Num(r) => Some(r),
        _ => None,
    }
}

fn is_zero(e: &Expr) -> bool {
    num_of(e).is_some_and(Real::is_zero)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Num(Real::Exact(q)) if q.is_one())
}

pub fn snum(r: Real) -> Expr {
    Expr::Num(r)
}

pub fn sneg(e: Expr) -> Expr {
    match e {
        Expr::Num(r) => Expr::Num(-r),
        Expr::Neg(u) => (*u).clone(),
        other => Expr::Neg(Arc::new(other)),
    }
}

pub fn sadd(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return b;
    }
    if is_zero(&b) {
        return a;
    }
    if let (Some(x), Some(y)) = (num_of(&a), num_of(&b)) {
        return Expr::Num(x + y);
    }
    Expr::Bin(BinOp::Add, Arc::new(a), Arc::new(b))
}

pub fn ssub(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        return a;
    }
    if is_zero(&a) {
        return sneg(b);
    }
    if let (Some(x), Some(y)) = (num_of(&a), num_of(&b)) {
        return Expr::Num(x - y);
    }
    if a == b {
        return Expr::Num(Real::zero());
    }
    Expr::Bin(BinOp::Sub, Arc::new(a), Arc::new(b))
}

pub fn smul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        return Expr::Num(Real::zero());
    }
    if is_one(&a) {
        return b;
    }
    if is_one(&b) {
        return a;
    }
    if let (Some(x), Some(y)) = (num_of(&a), num_of(&b)) {
        return Expr::Num(x * y);
    }
    // Constants migrate left; nested constant factors merge.
    if num_of(&b).is_some() && num_of(&a).is_none() {
        return smul(b, a);
    }
    if let (Some(x), Expr::Bin(BinOp::Mul, u, v)) = (num_of(&a), &b) {
        if let Some(y) = num_of(u) {
            return smul(Expr::Num(x * y), (**v).clone());
        }
    }
    Expr::Bin(BinOp::Mul, Arc::new(a), Arc::new(b))
}

pub fn sdiv(a: Expr, b: Expr) -> Expr {
    if is_one(&b) {
        return a;
    }
    if is_zero(&a) && !is_zero(&b) {
        return Expr::Num(Real::zero());
    }
    if let Some(y) = num_of(&b) {
        // Exact divisors become reciprocal factors so constants keep merging.
        if y.is_exact() && !y.is_zero() {
            let inv = Real::one() / y.clone();
            return smul(Expr::Num(inv), a);
        }
    }
    if let (Some(x), Some(y)) = (num_of(&a), num_of(&b)) {
        if !y.is_zero() {
            return Expr::Num(x / y);
        }
    }
    Expr::Bin(BinOp::Div, Arc::new(a), Arc::new(b))
}

/// `b^0 = 1` by the usual symbolic convention; exact constant bases fold
/// when the power has an exact value. Integer powers of integer powers
/// collapse, which keeps repeated quotient-rule derivatives from nesting.
pub fn spow(b: Expr, q: BigRational) -> Expr {
    if q.is_zero() {
        return Expr::Num(Real::one());
    }
    if q.is_one() {
        return b;
    }
    if let Some(r) = num_of(&b) {
        if let Some(v) = r.pow_rational(&q) {
            return Expr::Num(v);
        }
    }
    if let Expr::Pow(inner, q1) = &b {
        if q1.is_integer() && q.is_integer() {
            return spow((**inner).clone(), q1 * &q);
        }
    }
    Expr::Pow(Arc::new(b), q)
}

pub fn sfun(f: Func, u: Expr) -> Expr {
    Expr::Fun(f, Arc::new(u))
}

/// Bottom-up rebuild through the smart constructors; deterministic and
/// conservative (no transcendental identities).
pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Num(_) | Expr::Pi | Expr::E | Expr::Var => e.clone(),
        Expr::Neg(u) => sneg(simplify(u)),
        Expr::Fun(f, u) => sfun(*f, simplify(u)),
        Expr::Bin(op, l, r) => {
            let l = simplify(l);
            let r = simplify(r);
            match op {
                BinOp::Add => sadd(l, r),
                BinOp::Sub => ssub(l, r),
                BinOp::Mul => smul(l, r),
                BinOp::Div => sdiv(l, r),
            }
        }
        Expr::Pow(b, q) => spow(simplify(b), q.clone()),
        Expr::If {
            threshold,
            less,
            otherwise,
        } => Expr::If {
            threshold: threshold.clone(),
            less: Arc::new(simplify(less)),
            otherwise: Arc::new(simplify(otherwise)),
        },
    }
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

/// Symbolic derivative with algebraic simplification. Errors on any abs or
/// conditional lying on the differentiation path; resolve branches first
/// (see [`resolve_at`]) to differentiate piecewise functions.
pub fn differentiate(e: &Expr) -> Result<Expr, EvalError> {
    Ok(match e {
        Expr::Num(_) | Expr::Pi | Expr::E => Expr::Num(Real::zero()),
        Expr::Var => Expr::Num(Real::one()),
        Expr::Neg(u) => sneg(differentiate(u)?),
        Expr::Bin(BinOp::Add, l, r) => sadd(differentiate(l)?, differentiate(r)?),
        Expr::Bin(BinOp::Sub, l, r) => ssub(differentiate(l)?, differentiate(r)?),
        Expr::Bin(BinOp::Mul, l, r) => sadd(
            smul(differentiate(l)?, (**r).clone()),
            smul((**l).clone(), differentiate(r)?),
        ),
        Expr::Bin(BinOp::Div, l, r) => {
            let dl = differentiate(l)?;
            let dr = differentiate(r)?;
            sdiv(
                ssub(smul(dl, (**r).clone()), smul((**l).clone(), dr)),
                spow((**r).clone(), BigRational::from_integer(2.into())),
            )
        }
        Expr::Pow(b, q) => {
            let db = differentiate(b)?;
            let coeff = Real::Exact(q.clone());
            smul(
                smul(Expr::Num(coeff), spow((**b).clone(), q - BigRational::one())),
                db,
            )
        }
        Expr::Fun(f, u) => {
            let du = differentiate(u)?;
            let outer = match f {
                Func::Sin => sfun(Func::Cos, (**u).clone()),
                Func::Cos => sneg(sfun(Func::Sin, (**u).clone())),
                Func::Exp => sfun(Func::Exp, (**u).clone()),
                Func::Log => return Ok(sdiv(du, (**u).clone())),
                Func::Sqrt => {
                    return Ok(sdiv(
                        du,
                        smul(Expr::Num(Real::from_int(2)), sfun(Func::Sqrt, (**u).clone())),
                    ))
                }
                Func::Abs => return Err(EvalError::at("non-differentiable node", e)),
            };
            smul(outer, du)
        }
        Expr::If { .. } => return Err(EvalError::at("non-differentiable node", e)),
    })
}

/// `n`-th derivative, simplifying at every step.
pub fn nth_derivative(e: &Expr, n: u32) -> Result<Expr, EvalError> {
    let mut cur = simplify(e);
    for _ in 0..n {
        cur = differentiate(&cur)?;
    }
    Ok(cur)
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

fn eval_inner(e: &Expr, x: Option<&Real>) -> Result<Real, EvalError> {
    match e {
        Expr::Num(r) => Ok(r.clone()),
        Expr::Pi => Ok(Real::pi()),
        Expr::E => Ok(Real::euler()),
        Expr::Var => x
            .cloned()
            .ok_or_else(|| EvalError::at("expression is not constant", e)),
        Expr::Neg(u) => Ok(-eval_inner(u, x)?),
        Expr::Fun(f, u) => {
            let v = eval_inner(u, x)?;
            match f {
                Func::Abs => Ok(v.abs()),
                Func::Sqrt => v
                    .sqrt()
                    .ok_or_else(|| EvalError::at("square root of a negative value", e)),
                Func::Sin => Ok(Real::Float(libm_sin(v.to_f64()))),
                Func::Cos => Ok(Real::Float(libm_cos(v.to_f64()))),
                Func::Exp => Ok(Real::Float(libm_exp(v.to_f64()))),
                Func::Log => {
                    if v.is_positive() {
                        Ok(Real::Float(libm_ln(v.to_f64())))
                    } else {
                        Err(EvalError::at("logarithm of a nonpositive value", e))
                    }
                }
            }
        }
        Expr::Bin(op, l, r) => {
            let a = eval_inner(l, x)?;
            let b = eval_inner(r, x)?;
            Ok(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b.is_zero() {
                        return Err(EvalError::at("division by zero", e));
                    }
                    a / b
                }
            })
        }
        Expr::Pow(b, q) => {
            let base = eval_inner(b, x)?;
            base.pow_rational(q)
                .ok_or_else(|| EvalError::at("power outside its domain", e))
        }
        Expr::If {
            threshold,
            less,
            otherwise,
        } => {
            let xv = x.ok_or_else(|| EvalError::at("expression is not constant", e))?;
            if xv.cmp_real(threshold) == Ordering::Less {
                eval_inner(less, x)
            } else {
                eval_inner(otherwise, x)
            }
        }
    }
}

/// Evaluates at a real point. Exact when the tree stays rational-closed;
/// transcendental functions always produce floats.
pub fn eval_real(e: &Expr, x: &Real) -> Result<Real, EvalError> {
    eval_inner(e, Some(x))
}

/// Evaluation honoring an optional single-point redefinition.
pub fn eval_with_fix(e: &Expr, fix: Option<&PointFix>, x: &Real) -> Result<Real, EvalError> {
    if let Some(f) = fix {
        if f.at.cmp_real(x) == Ordering::Equal {
            return Ok(f.value.clone());
        }
    }
    eval_real(e, x)
}

/// Evaluates a variable-free expression.
pub fn eval_constant(e: &Expr) -> Result<Real, EvalError> {
    eval_inner(e, None)
}

// Thin wrappers so the module reads the same on std and no_std: num-traits'
// Float trait routes to libm when std is off.
fn libm_sin(v: f64) -> f64 {
    num_traits::Float::sin(v)
}
fn libm_cos(v: f64) -> f64 {
    num_traits::Float::cos(v)
}
fn libm_exp(v: f64) -> f64 {
    num_traits::Float::exp(v)
}
fn libm_ln(v: f64) -> f64 {
    num_traits::Float::ln(v)
}

// ---------------------------------------------------------------------------
// Breakpoints and branch resolution
// ---------------------------------------------------------------------------

/// Conditional thresholds, collected syntactically, sorted and deduplicated.
pub fn breakpoints(e: &Expr) -> Vec<Real> {
    fn walk(e: &Expr, out: &mut Vec<Real>) {
        match e {
            Expr::Num(_) | Expr::Pi | Expr::E | Expr::Var => {}
            Expr::Neg(u) | Expr::Fun(_, u) => walk(u, out),
            Expr::Bin(_, l, r) => {
                walk(l, out);
                walk(r, out);
            }
            Expr::Pow(b, _) => walk(b, out),
            Expr::If {
                threshold,
                less,
                otherwise,
            } => {
                out.push(threshold.clone());
                walk(less, out);
                walk(otherwise, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(e, &mut out);
    out.sort_by(|a, b| a.cmp_real(b));
    out.dedup_by(|a, b| a.cmp_real(b) == Ordering::Equal);
    out
}

/// Dense rational coefficients (index = power) when `e` is a polynomial in
/// `x` over the rationals; `None` otherwise. Exponents above 64 are not
/// expanded.
pub fn as_polynomial(e: &Expr) -> Option<Vec<BigRational>> {
    fn trim(mut v: Vec<BigRational>) -> Vec<BigRational> {
        while v.len() > 1 && v.last().is_some_and(Zero::is_zero) {
            v.pop();
        }
        v
    }
    fn padd(a: &[BigRational], b: &[BigRational], sub: bool) -> Vec<BigRational> {
        let mut out = Vec::new();
        for i in 0..a.len().max(b.len()) {
            let x = a.get(i).cloned().unwrap_or_else(BigRational::zero);
            let y = b.get(i).cloned().unwrap_or_else(BigRational::zero);
            out.push(if sub { x - y } else { x + y });
        }
        trim(out)
    }
    fn pmul(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
        let mut out = alloc::vec![BigRational::zero(); a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        trim(out)
    }
    match e {
        Expr::Num(Real::Exact(q)) => Some(alloc::vec![q.clone()]),
        Expr::Num(_) | Expr::Pi | Expr::E => None,
        Expr::Var => Some(alloc::vec![BigRational::zero(), BigRational::one()]),
        Expr::Neg(u) => {
            let p = as_polynomial(u)?;
            Some(p.into_iter().map(|c| -c).collect())
        }
        Expr::Fun(..) | Expr::If { .. } => None,
        Expr::Bin(op, l, r) => {
            let a = as_polynomial(l)?;
            let b = as_polynomial(r)?;
            match op {
                BinOp::Add => Some(padd(&a, &b, false)),
                BinOp::Sub => Some(padd(&a, &b, true)),
                BinOp::Mul => Some(pmul(&a, &b)),
                BinOp::Div => {
                    if b.len() == 1 && !b[0].is_zero() {
                        Some(a.into_iter().map(|c| c / &b[0]).collect())
                    } else {
                        None
                    }
                }
            }
        }
        Expr::Pow(b, q) => {
            if !q.is_integer() || q.is_negative() || q.numer() > &64.into() {
                return None;
            }
            let base = as_polynomial(b)?;
            let exp = num_traits::ToPrimitive::to_u32(q.numer())?;
            let mut acc = alloc::vec![BigRational::one()];
            for _ in 0..exp {
                acc = pmul(&acc, &base);
            }
            Some(acc)
        }
    }
}

/// Arguments of every abs node, in syntactic order.
pub fn abs_arguments(e: &Expr) -> Vec<Expr> {
    fn walk(e: &Expr, out: &mut Vec<Expr>) {
        match e {
            Expr::Num(_) | Expr::Pi | Expr::E | Expr::Var => {}
            Expr::Neg(u) | Expr::Pow(u, _) => walk(u, out),
            Expr::Fun(f, u) => {
                if *f == Func::Abs {
                    out.push((**u).clone());
                }
                walk(u, out);
            }
            Expr::Bin(_, l, r) => {
                walk(l, out);
                walk(r, out);
            }
            Expr::If { less, otherwise, .. } => {
                walk(less, out);
                walk(otherwise, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(e, &mut out);
    out
}

pub fn contains_abs(e: &Expr) -> bool {
    match e {
        Expr::Num(_) | Expr::Pi | Expr::E | Expr::Var => false,
        Expr::Neg(u) | Expr::Pow(u, _) => contains_abs(u),
        Expr::Fun(Func::Abs, _) => true,
        Expr::Fun(_, u) => contains_abs(u),
        Expr::Bin(_, l, r) => contains_abs(l) || contains_abs(r),
        Expr::If { less, otherwise, .. } => contains_abs(less) || contains_abs(otherwise),
    }
}

/// Replaces every conditional and abs by the branch taken in a neighborhood
/// of the point `s`, yielding a tree that is smooth there. Errors when `s`
/// sits exactly on a breakpoint (conditional threshold, or a zero of an abs
/// argument).
pub fn resolve_at(e: &Expr, s: &Real) -> Result<Expr, EvalError> {
    Ok(match e {
        Expr::Num(_) | Expr::Pi | Expr::E | Expr::Var => e.clone(),
        Expr::Neg(u) => sneg(resolve_at(u, s)?),
        Expr::Fun(Func::Abs, u) => {
            let inner = resolve_at(u, s)?;
            let v = eval_real(&inner, s)?;
            if v.is_zero() {
                return Err(EvalError::at("breakpoint at the expansion point", e));
            } else if v.is_negative() {
                sneg(inner)
            } else {
                inner
            }
        }
        Expr::Fun(f, u) => sfun(*f, resolve_at(u, s)?),
        Expr::Bin(op, l, r) => {
            let l = resolve_at(l, s)?;
            let r = resolve_at(r, s)?;
            Expr::Bin(*op, Arc::new(l), Arc::new(r))
        }
        Expr::Pow(b, q) => Expr::Pow(Arc::new(resolve_at(b, s)?), q.clone()),
        Expr::If {
            threshold,
            less,
            otherwise,
        } => match s.cmp_real(threshold) {
            Ordering::Less => resolve_at(less, s)?,
            Ordering::Greater => resolve_at(otherwise, s)?,
            Ordering::Equal => {
                return Err(EvalError::at("breakpoint at the expansion point", e))
            }
        },
    })
}

// ---------------------------------------------------------------------------
// Taylor lift to hyperreal arguments
// ---------------------------------------------------------------------------

/// Default expansion depth, matched to the default validity budget.
pub const DEFAULT_TAYLOR_DEPTH: u32 = 8;

/// The computable extension of `e` to a hyperreal argument near a real
/// point: with `s = st(X)` and `δ = X - s`,
/// `Σ_{j=0}^{depth} e^(j)(s) δ^j / j!`, derivatives symbolic.
///
/// The result is trusted to `min(V_X, (depth+1)·ord(δ))`: the discarded
/// remainder has order `(depth+1)·ord(δ)`.
pub fn eval_hyper(e: &Expr, x: &Hyperreal, depth: u32) -> Result<Hyperreal, EvalError> {
    let s = x.standard_part()?;
    let resolved = resolve_at(e, &s)?;
    let delta = x.add_real(&-s.clone());
    let delta_ord = delta.order_of_magnitude();

    let mut acc = Hyperreal::zero(x.valid_order());
    let mut dpow = Hyperreal::one(x.valid_order());
    let mut deriv = resolved;
    let mut factorial = Real::one();
    for j in 0..=depth {
        if j > 0 {
            deriv = differentiate(&deriv)?;
            factorial = factorial * Real::from_int(j as i64);
            dpow = dpow.mul(&delta);
            if dpow.is_zero_value() {
                break;
            }
        }
        let cj = eval_real(&deriv, &s)?;
        if !cj.is_zero() {
            let coeff = cj / factorial.clone();
            acc = acc.add(&dpow.scale(&coeff));
        }
    }
    let trust = x.valid_order().min(delta_ord * ord(1 + depth as i64));
    Ok(acc.truncate(trust))
}

// ---------------------------------------------------------------------------
// Smoothness reporting
// ---------------------------------------------------------------------------

/// What the engine needs to know before choosing a sum path: conditional
/// breakpoints inside the interval, presence of abs, how many symbolic
/// derivatives exist, and where evaluation fails on a probe grid.
#[derive(Clone, Debug)]
pub struct SmoothnessReport {
    pub a: Real,
    pub b: Real,
    pub breakpoints: Vec<Real>,
    pub abs_present: bool,
    /// Symbolic derivatives obtainable before a non-differentiable node,
    /// capped at [`DEFAULT_TAYLOR_DEPTH`].
    pub smooth_degree: u32,
    /// Grid points where evaluation failed, with the failure message.
    pub domain_violations: Vec<(Real, String)>,
}

/// Probe grid size; 256 panels plus both endpoints.
pub const SMOOTHNESS_GRID: u32 = 257;

pub fn smoothness_report(e: &Expr, a: &Real, b: &Real) -> SmoothnessReport {
    let inside = breakpoints(e)
        .into_iter()
        .filter(|c| a.cmp_real(c) == Ordering::Less && c.cmp_real(b) == Ordering::Less)
        .collect();

    let mut smooth_degree = 0;
    let mut deriv = simplify(e);
    for _ in 0..DEFAULT_TAYLOR_DEPTH {
        match differentiate(&deriv) {
            Ok(d) => {
                deriv = d;
                smooth_degree += 1;
            }
            Err(_) => break,
        }
    }

    let mut domain_violations = Vec::new();
    let width = b.clone() - a.clone();
    let panels = Real::from_int((SMOOTHNESS_GRID - 1) as i64);
    for k in 0..SMOOTHNESS_GRID {
        let t = Real::from_int(k as i64) / panels.clone();
        let xk = a.clone() + width.clone() * t;
        if let Err(err) = eval_real(e, &xk) {
            domain_violations.push((xk, err.message));
        }
    }

    SmoothnessReport {
        a: a.clone(),
        b: b.clone(),
        breakpoints: inside,
        abs_present: contains_abs(e),
        smooth_degree,
        domain_violations,
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, at: usize, message: &str) -> Result<T, ParseError> {
        Err(ParseError {
            offset: at,
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

    fn expect(&mut self, b: u8) -> Result<(), ParseError> {
        if self.eat(b) {
            Ok(())
        } else {
            self.err(self.pos, match b {
                b')' => "expected ')'",
                b'(' => "expected '('",
                b',' => "expected ','",
                b'<' => "expected '<'",
                _ => "unexpected character",
            })
        }
    }

    fn ident(&mut self) -> Option<(String, usize)> {
        self.skip_ws();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphabetic() || *c == b'_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            None
        } else {
            Some((
                core::str::from_utf8(&self.bytes[start..self.pos])
                    .expect("ascii")
                    .to_string(),
                start,
            ))
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_digit() || *c == b'.')
        {
            self.pos += 1;
        }
        let text = core::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii");
        match parse_decimal(text) {
            Some(r) => Ok(Expr::Num(r)),
            None => self.err(start, "malformed number"),
        }
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.multiplicative()?;
        loop {
            if self.eat(b'+') {
                let rhs = self.multiplicative()?;
                acc = fold_bin(BinOp::Add, acc, rhs);
            } else if self.eat(b'-') {
                let rhs = self.multiplicative()?;
                acc = fold_bin(BinOp::Sub, acc, rhs);
            } else {
                return Ok(acc);
            }
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                let rhs = self.unary()?;
                acc = fold_bin(BinOp::Mul, acc, rhs);
            } else if self.eat(b'/') {
                let rhs = self.unary()?;
                acc = fold_bin(BinOp::Div, acc, rhs);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            Ok(match inner {
                Expr::Num(r) => Expr::Num(-r),
                other => Expr::Neg(Arc::new(other)),
            })
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let caret = self.pos - 1;
            let exp_expr = self.unary()?;
            let q = match constant_rational(&exp_expr) {
                Some(q) => q,
                None => return self.err(caret, "exponent must be a rational constant"),
            };
            Ok(spow(base, q))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.additive()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let (name, at) = self.ident().expect("alphabetic start");
                match name.as_str() {
                    "x" => Ok(Expr::Var),
                    "pi" => Ok(Expr::Pi),
                    "e" => Ok(Expr::E),
                    "if" => self.if_tail(),
                    "sin" | "cos" | "exp" | "log" | "ln" | "sqrt" | "abs" => {
                        let f = match name.as_str() {
                            "sin" => Func::Sin,
                            "cos" => Func::Cos,
                            "exp" => Func::Exp,
                            "log" | "ln" => Func::Log,
                            "sqrt" => Func::Sqrt,
                            _ => Func::Abs,
                        };
                        self.expect(b'(')?;
                        let arg = self.additive()?;
                        self.expect(b')')?;
                        Ok(Expr::Fun(f, Arc::new(arg)))
                    }
                    _ => self.err(at, "unknown identifier"),
                }
            }
            _ => self.err(self.pos, "expected an operand"),
        }
    }

    /// `if` has been consumed; parses `(x < c, e1, e2)`.
    fn if_tail(&mut self) -> Result<Expr, ParseError> {
        self.expect(b'(')?;
        match self.ident() {
            Some((v, _)) if v == "x" => {}
            Some((_, vat)) => return self.err(vat, "conditional must test the variable x"),
            None => return self.err(self.pos, "conditional must test the variable x"),
        }
        self.expect(b'<')?;
        let c_at = self.pos;
        let cexpr = self.additive()?;
        let threshold = match eval_constant(&cexpr) {
            Ok(r) => r,
            Err(_) => return self.err(c_at, "conditional threshold must be constant"),
        };
        self.expect(b',')?;
        let less = self.additive()?;
        self.expect(b',')?;
        let otherwise = self.additive()?;
        self.expect(b')')?;
        Ok(Expr::If {
            threshold,
            less: Arc::new(less),
            otherwise: Arc::new(otherwise),
        })
    }
}

/// Parse-time constant folding: two exact constants collapse (division only
/// when the divisor is nonzero), so `1/3` is a single rational constant.
fn fold_bin(op: BinOp, l: Expr, r: Expr) -> Expr {
    if let (Some(a), Some(b)) = (num_of(&l), num_of(&r)) {
        if a.is_exact() && b.is_exact() {
            let v = match op {
                BinOp::Add => Some(a + b),
                BinOp::Sub => Some(a - b),
                BinOp::Mul => Some(a * b),
                BinOp::Div => {
                    if b.is_zero() {
                        None
                    } else {
                        Some(a / b)
                    }
                }
            };
            if let Some(v) = v {
                return Expr::Num(v);
            }
        }
    }
    Expr::Bin(op, Arc::new(l), Arc::new(r))
}

fn constant_rational(e: &Expr) -> Option<BigRational> {
    match e {
        Expr::Num(Real::Exact(q)) => Some(q.clone()),
        _ => None,
    }
}

/// Parses the expression grammar. Whitespace insensitive; errors carry the
/// byte offset.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let e = p.additive()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return p.err(p.pos, "unexpected trailing input");
    }
    Ok(e)
}

/// Parses a variable-free expression to a real (endpoints like `pi/2` or
/// `1/3`).
pub fn parse_constant(text: &str) -> Result<Real, ParseError> {
    let e = parse(text)?;
    eval_constant(&e).map_err(|err| ParseError {
        offset: 0,
        message: err.message,
    })
}
