//! Integrability verdicts, additivity checking, divergence classification,
//! and the rational-indicator integral on quadratic-field endpoints.
//!
//! A verdict is evidence, not proof: the definition quantifies over every
//! unlimited partition count, while the engine samples a finite family of
//! symbolic counts plus finite-`N` growth probes. Verdicts therefore carry
//! a confidence label (`exact`, `numeric`, `heuristic`) and never claim
//! more than their evidence supports.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use core::cmp::Ordering;
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, One, Signed, ToPrimitive, Zero};

use crate::expr::{
    as_polynomial, eval_with_fix, resolve_at, smoothness_report, Expr, PointFix,
};
use crate::omegasum::{
    exact_poly_partial_sum, finite_sum_oracle, nspec_parse, omega_sum, NSpec, OmegaSumError,
    OracleMode, SumOptions,
};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub enum IntegralError {
    /// The requested report needs an integrable verdict and did not get one.
    NotApplicable(String),
    /// Endpoint or field element outside what the module handles.
    Unsupported(String),
    Sum(OmegaSumError),
}

impl fmt::Display for IntegralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegralError::NotApplicable(m) => write!(f, "not applicable: {}", m),
            IntegralError::Unsupported(m) => write!(f, "unsupported: {}", m),
            IntegralError::Sum(e) => write!(f, "{}", e),
        }
    }
}

impl core::error::Error for IntegralError {}

impl From<OmegaSumError> for IntegralError {
    fn from(e: OmegaSumError) -> Self {
        IntegralError::Sum(e)
    }
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Integrable(Real),
    PositiveUnlimited,
    NegativeUnlimited,
    NotIntegrable,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Integrable(v) => write!(f, "integrable({})", v),
            Verdict::PositiveUnlimited => f.write_str("positive-unlimited"),
            Verdict::NegativeUnlimited => f.write_str("negative-unlimited"),
            Verdict::NotIntegrable => f.write_str("not-integrable"),
            Verdict::Inconclusive => f.write_str("inconclusive"),
        }
    }
}

impl Verdict {
    /// The bare verdict name, without the value.
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Integrable(_) => "integrable",
            Verdict::PositiveUnlimited => "positive-unlimited",
            Verdict::NegativeUnlimited => "negative-unlimited",
            Verdict::NotIntegrable => "not-integrable",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Confidence {
    Exact,
    Numeric,
    Heuristic,
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Confidence::Exact => "exact",
            Confidence::Numeric => "numeric",
            Confidence::Heuristic => "heuristic",
        })
    }
}

/// One piece of supporting data: a symbolic family member's standard part,
/// or a finite-`N` growth sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Evidence {
    Family { n: NSpec, st: Real },
    Growth { n: u64, value: f64 },
}

#[derive(Clone, Debug)]
pub struct IntegralVerdict {
    pub verdict: Verdict,
    pub evidence: Vec<Evidence>,
    pub tolerance: f64,
    pub confidence: Confidence,
}

impl IntegralVerdict {
    pub fn value(&self) -> Option<&Real> {
        match &self.verdict {
            Verdict::Integrable(v) => Some(v),
            _ => None,
        }
    }
}

/// The default evidence family: `W`, `W + 1`, `2W`, `3W`, `W^2`.
pub fn default_family() -> Vec<NSpec> {
    ["W", "W + 1", "2*W", "3*W", "W^2"]
        .iter()
        .map(|t| nspec_parse(t).expect("family literal"))
        .collect()
}

#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    /// Agreement tolerance between family standard parts (float paths).
    pub tolerance: f64,
    pub sum: SumOptions,
    /// Probe sizes for growth classification when symbolic sums fail.
    pub probe_ns: Vec<u64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            tolerance: 1e-8,
            sum: SumOptions::default(),
            probe_ns: alloc::vec![1_000, 10_000, 100_000, 1_000_000],
        }
    }
}

/// Runs the sum engine over the family and reduces the evidence to a
/// verdict. All outcomes are verdicts; symbolic failures fall back to
/// finite-`N` growth probing rather than erroring.
pub fn integrate(
    f: &Expr,
    a: &Real,
    b: &Real,
    family: &[NSpec],
    opts: &IntegrateOptions,
) -> IntegralVerdict {
    if a.cmp_real(b) != Ordering::Less || family.is_empty() {
        return IntegralVerdict {
            verdict: Verdict::Inconclusive,
            evidence: Vec::new(),
            tolerance: opts.tolerance,
            confidence: Confidence::Heuristic,
        };
    }

    let mut evidence = Vec::with_capacity(family.len());
    let mut sts: Vec<Real> = Vec::with_capacity(family.len());
    let mut all_exact = true;
    let mut failed = false;
    for n in family {
        match omega_sum(f, a, b, n, &opts.sum) {
            Ok(r) => match r.value.standard_part() {
                Ok(st) => {
                    all_exact &= r.value.is_exact();
                    evidence.push(Evidence::Family {
                        n: n.clone(),
                        st: st.clone(),
                    });
                    sts.push(st);
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            },
            Err(_) => {
                failed = true;
                break;
            }
        }
    }

    if !failed {
        if all_exact {
            // exact-path disagreement of any size is a failure
            let agree = sts.windows(2).all(|w| w[0] == w[1]);
            return IntegralVerdict {
                verdict: if agree {
                    Verdict::Integrable(sts[0].clone())
                } else {
                    Verdict::NotIntegrable
                },
                evidence,
                tolerance: opts.tolerance,
                confidence: Confidence::Exact,
            };
        }
        let lo = sts.iter().map(|s| s.to_f64()).fold(f64::INFINITY, f64::min);
        let hi = sts
            .iter()
            .map(|s| s.to_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let agree = hi - lo <= opts.tolerance;
        let mean = sts.iter().map(|s| s.to_f64()).sum::<f64>() / sts.len() as f64;
        return IntegralVerdict {
            verdict: if agree {
                Verdict::Integrable(Real::Float(mean))
            } else {
                Verdict::NotIntegrable
            },
            evidence,
            tolerance: opts.tolerance,
            confidence: Confidence::Numeric,
        };
    }

    // Symbolic paths gave out; classify growth from finite sums.
    let probe = divergence_probe(f, a, b, &opts.probe_ns, opts.sum.fix.as_ref());
    let growth_evidence: Vec<Evidence> = probe
        .samples
        .iter()
        .filter_map(|(n, r)| r.as_ref().ok().map(|v| Evidence::Growth { n: *n, value: *v }))
        .collect();
    let verdict = match probe.model {
        GrowthModel::Bounded { limit } => Verdict::Integrable(Real::Float(limit)),
        GrowthModel::Log { .. } | GrowthModel::Power { .. }
            if probe.monotone && probe.sign == Some(1) =>
        {
            Verdict::PositiveUnlimited
        }
        GrowthModel::Log { .. } | GrowthModel::Power { .. }
            if probe.monotone && probe.sign == Some(-1) =>
        {
            Verdict::NegativeUnlimited
        }
        _ => Verdict::Inconclusive,
    };
    IntegralVerdict {
        verdict,
        evidence: growth_evidence,
        tolerance: opts.tolerance,
        confidence: Confidence::Heuristic,
    }
}

// ---------------------------------------------------------------------------
// Growth probing
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum GrowthModel {
    /// Successive sums converge geometrically; `limit` is the Aitken
    /// extrapolation of the last three samples.
    Bounded { limit: f64 },
    /// Sums fit `slope·ln N + intercept` with the given fit quality.
    Log { slope: f64, r2: f64 },
    /// Sums fit `c·N^exponent`.
    Power { exponent: f64, r2: f64 },
    Indeterminate,
}

#[derive(Clone, Debug)]
pub struct GrowthReport {
    /// Raw right sums per `N`; errors keep the failing term's position.
    pub samples: Vec<(u64, Result<f64, String>)>,
    /// |S| nondecreasing across successful samples.
    pub monotone: bool,
    /// Consistent sign across samples: `Some(1)`, `Some(-1)`, or `None`.
    pub sign: Option<i8>,
    pub model: GrowthModel,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

fn aitken(s1: f64, s2: f64, s3: f64) -> f64 {
    let d1 = s2 - s1;
    let d2 = s3 - s2;
    let den = d2 - d1;
    if Float::abs(den) < 1e-300 {
        s3
    } else {
        s3 - d2 * d2 / den
    }
}

const FIT_R2_THRESHOLD: f64 = 0.999;

/// Finite-`N` right sums at the probe sizes, classified against the three
/// growth models. Heuristic by construction: it samples standard integers
/// only.
pub fn divergence_probe(
    f: &Expr,
    a: &Real,
    b: &Real,
    ns: &[u64],
    fix: Option<&PointFix>,
) -> GrowthReport {
    let mut samples: Vec<(u64, Result<f64, String>)> = Vec::with_capacity(ns.len());
    for &n in ns {
        let r = finite_sum_oracle(f, a, b, n, OracleMode::Float, fix)
            .map(|v| v.to_f64())
            .map_err(|e| e.to_string());
        samples.push((n, r));
    }
    let ok: Vec<(u64, f64)> = samples
        .iter()
        .filter_map(|(n, r)| r.as_ref().ok().map(|v| (*n, *v)))
        .collect();
    if ok.len() < 3 {
        return GrowthReport {
            samples,
            monotone: false,
            sign: None,
            model: GrowthModel::Indeterminate,
        };
    }
    let vals: Vec<f64> = ok.iter().map(|(_, v)| *v).collect();
    let monotone = vals
        .windows(2)
        .all(|w| Float::abs(w[1]) >= Float::abs(w[0]) - 1e-12);
    let sign = if vals.iter().all(|v| *v > 0.0) {
        Some(1)
    } else if vals.iter().all(|v| *v < 0.0) {
        Some(-1)
    } else {
        None
    };

    // geometric convergence: every successive difference shrinks by a
    // definite factor
    let diffs: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = vals.iter().fold(0.0f64, |m, v| Float::max(m, Float::abs(*v)));
    let settled = diffs.iter().all(|d| Float::abs(*d) <= 1e-12 * Float::max(1.0, scale));
    let geometric = settled
        || diffs
            .windows(2)
            .all(|w| Float::abs(w[1]) < 0.9 * Float::abs(w[0]) + 1e-15);
    if geometric {
        let m = vals.len();
        let limit = if settled {
            vals[m - 1]
        } else {
            aitken(vals[m - 3], vals[m - 2], vals[m - 1])
        };
        return GrowthReport {
            samples,
            monotone,
            sign,
            model: GrowthModel::Bounded { limit },
        };
    }

    let lnn: Vec<f64> = ok.iter().map(|(n, _)| Float::ln(*n as f64)).collect();
    let (slope, _, r2) = linear_fit(&lnn, &vals);
    if r2 > FIT_R2_THRESHOLD && Float::abs(slope) > 1e-9 {
        return GrowthReport {
            samples,
            monotone,
            sign,
            model: GrowthModel::Log { slope, r2 },
        };
    }

    if sign.is_some() {
        let lnv: Vec<f64> = vals.iter().map(|v| Float::ln(Float::abs(*v))).collect();
        let (p, _, r2) = linear_fit(&lnn, &lnv);
        if r2 > FIT_R2_THRESHOLD && p > 0.05 {
            return GrowthReport {
                samples,
                monotone,
                sign,
                model: GrowthModel::Power { exponent: p, r2 },
            };
        }
    }

    GrowthReport {
        samples,
        monotone,
        sign,
        model: GrowthModel::Indeterminate,
    }
}

// ---------------------------------------------------------------------------
// Additivity
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum AdditivityOutcome {
    /// The identity holds: `residual = L(a,b) + L(b,c) - L(a,c)`.
    Verified { residual: Real, exact: bool },
    Violated { residual: Real },
    NotApplicable { reason: String },
}

#[derive(Clone, Debug)]
pub struct AdditivityReport {
    pub ab: Option<IntegralVerdict>,
    pub bc: Option<IntegralVerdict>,
    pub ac: Option<IntegralVerdict>,
    pub outcome: AdditivityOutcome,
    pub tolerance: f64,
}

/// Checks continuity of `f` at a conditional threshold by resolving the
/// branch on each side and comparing both at the threshold itself.
fn continuous_at(f: &Expr, s: &Real, fix: Option<&PointFix>) -> bool {
    let sf = s.to_f64();
    let h = Float::max(1e-9, Float::abs(sf) * 1e-9);
    let sides = [Real::Float(sf - h), Real::Float(sf + h)];
    let mut vals = Vec::with_capacity(2);
    for side in &sides {
        match resolve_at(f, side).and_then(|piece| eval_with_fix(&piece, fix, s)) {
            Ok(v) => vals.push(v.to_f64()),
            Err(_) => return false,
        }
    }
    let tol = 1e-9 * (1.0 + Float::abs(vals[0]) + Float::abs(vals[1]));
    Float::abs(vals[0] - vals[1]) <= tol
}

/// Verifies `∫_a^b + ∫_b^c = ∫_a^c` for continuous `f`, exactly when all
/// three verdicts are exact, within `tol` otherwise.
pub fn additivity_check(
    f: &Expr,
    a: &Real,
    b: &Real,
    c: &Real,
    tol: f64,
    opts: &IntegrateOptions,
) -> AdditivityReport {
    let not_applicable = |reason: String| AdditivityReport {
        ab: None,
        bc: None,
        ac: None,
        outcome: AdditivityOutcome::NotApplicable { reason },
        tolerance: tol,
    };
    if !(a.cmp_real(b) == Ordering::Less && b.cmp_real(c) == Ordering::Less) {
        return not_applicable(String::from("requires a < b < c"));
    }
    let report = smoothness_report(f, a, c);
    if !report.domain_violations.is_empty() {
        return not_applicable(format!(
            "f is undefined inside [{}, {}]",
            a, c
        ));
    }
    for s in &report.breakpoints {
        if a.cmp_real(s) == Ordering::Less
            && s.cmp_real(c) == Ordering::Less
            && !continuous_at(f, s, opts.sum.fix.as_ref())
        {
            return not_applicable(format!("f is discontinuous at x = {}", s));
        }
    }

    let family = default_family();
    let ab = integrate(f, a, b, &family, opts);
    let bc = integrate(f, b, c, &family, opts);
    let ac = integrate(f, a, c, &family, opts);

    let values = (ab.value(), bc.value(), ac.value());
    let outcome = match values {
        (Some(l1), Some(l2), Some(l3)) => {
            let residual = l1.clone() + l2.clone() - l3.clone();
            let exact = l1.is_exact() && l2.is_exact() && l3.is_exact();
            let holds = if exact {
                residual.is_zero()
            } else {
                Float::abs(residual.to_f64()) <= tol
            };
            if holds {
                AdditivityOutcome::Verified { residual, exact }
            } else {
                AdditivityOutcome::Violated { residual }
            }
        }
        _ => {
            let offender = [("a,b", &ab), ("b,c", &bc), ("a,c", &ac)]
                .iter()
                .find(|(_, v)| v.value().is_none())
                .map(|(span, v)| format!("[{}] verdict is {}", span, v.verdict.name()))
                .unwrap_or_default();
            AdditivityOutcome::NotApplicable { reason: offender }
        }
    };
    AdditivityReport {
        ab: Some(ab),
        bc: Some(bc),
        ac: Some(ac),
        outcome,
        tolerance: tol,
    }
}

// ---------------------------------------------------------------------------
// The split-sum experiment
// ---------------------------------------------------------------------------

/// Finite-`N` re-enactment of the additivity proof: partition `[a,c]` into
/// `N` cells, take `B = ⌊N(b-a)/(c-a)⌋` so the `B`-th point straddles `b`,
/// and measure how far the `[a,b]` and `[b,c]` sums built from their own
/// partitions drift from the corresponding halves of the `[a,c]` sum. Both
/// discrepancies shrink as `N` grows.
#[derive(Clone, Debug)]
pub struct SplitSumReport {
    pub n: u64,
    pub b_index: u64,
    /// `|Σ_{k=1}^{B} f(y_k)Δy - Σ_{k=1}^{B} f(x_k)Δx|`
    pub left: Real,
    /// `|Σ_{k=1}^{N-B} f(z_k)Δz - Σ_{k=B+1}^{N} f(x_k)Δx|`
    pub right: Real,
    pub exact: bool,
}

fn kahan_partial_sum(
    f: &Expr,
    fix: Option<&PointFix>,
    start: f64,
    step: f64,
    k0: u64,
    k1: u64,
) -> Result<f64, OmegaSumError> {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut k = k0;
    while k <= k1 {
        let x = start + k as f64 * step;
        let v = eval_with_fix(f, fix, &Real::Float(x))
            .map_err(|e| OmegaSumError::Domain(format!("{} (term k = {})", e.message, k)))?
            .to_f64();
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        k += 1;
    }
    Ok(sum)
}

pub fn split_sum_experiment(
    f: &Expr,
    a: &Real,
    b: &Real,
    c: &Real,
    n: u64,
    fix: Option<&PointFix>,
) -> Result<SplitSumReport, OmegaSumError> {
    if !(a.cmp_real(b) == Ordering::Less && b.cmp_real(c) == Ordering::Less) {
        return Err(OmegaSumError::BadInterval);
    }
    if n < 4 {
        return Err(OmegaSumError::Domain(String::from("N must be at least 4")));
    }

    let exact_inputs = a.is_exact() && b.is_exact() && c.is_exact();
    let poly = as_polynomial(f);
    if exact_inputs && fix.is_none() {
        if let Some(_) = &poly {
            let (ax, bx, cx) = (
                a.as_exact().unwrap(),
                b.as_exact().unwrap(),
                c.as_exact().unwrap(),
            );
            let nq = BigRational::from_integer(BigInt::from(n));
            let ratio = (bx - ax) / (cx - ax) * &nq;
            let b_index = ratio.floor().to_integer().to_u64().unwrap_or(1).clamp(1, n - 1);
            let bq = BigRational::from_integer(BigInt::from(b_index));
            let dx = (cx - ax) / &nq;
            let dy = (bx - ax) / &bq;
            let dz = (cx - bx) / (&nq - &bq);
            let sum = |start: &BigRational, step: &BigRational, k0: u64, k1: u64| {
                exact_poly_partial_sum(f, start, step, k0, k1).expect("polynomial")
            };
            let left = (sum(ax, &dy, 1, b_index) * &dy - sum(ax, &dx, 1, b_index) * &dx).abs();
            let right = (sum(bx, &dz, 1, n - b_index) * &dz
                - sum(ax, &dx, b_index + 1, n) * &dx)
                .abs();
            return Ok(SplitSumReport {
                n,
                b_index,
                left: Real::Exact(left),
                right: Real::Exact(right),
                exact: true,
            });
        }
    }

    let (af, bf, cf) = (a.to_f64(), b.to_f64(), c.to_f64());
    // nudge recovers exact integers lost to rounding; a true non-integer
    // ratio is unaffected
    let b_index = (Float::floor(n as f64 * (bf - af) / (cf - af) + 1e-9) as u64).clamp(1, n - 1);
    let dx = (cf - af) / n as f64;
    let dy = (bf - af) / b_index as f64;
    let dz = (cf - bf) / (n - b_index) as f64;
    let left = Float::abs(
        kahan_partial_sum(f, fix, af, dy, 1, b_index)? * dy
            - kahan_partial_sum(f, fix, af, dx, 1, b_index)? * dx,
    );
    let right = Float::abs(
        kahan_partial_sum(f, fix, bf, dz, 1, n - b_index)? * dz
            - kahan_partial_sum(f, fix, af, dx, b_index + 1, n)? * dx,
    );
    Ok(SplitSumReport {
        n,
        b_index,
        left: Real::Float(left),
        right: Real::Float(right),
        exact: false,
    })
}

// ---------------------------------------------------------------------------
// Quadratic-field endpoints and the rational indicator
// ---------------------------------------------------------------------------

/// `p + q·√d` with exact rational `p`, `q` and squarefree `d`. Rationality
/// is decidable: the element is rational iff `q = 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadField {
    p: BigRational,
    q: BigRational,
    d: u64,
}

fn squarefree_split(d: u64) -> (u64, u64) {
    // d = square * free with free squarefree
    let mut free = 1u64;
    let mut square = 1u64;
    let mut rest = d;
    let mut i = 2u64;
    while i * i <= rest {
        let mut e = 0;
        while rest % i == 0 {
            rest /= i;
            e += 1;
        }
        for _ in 0..e / 2 {
            square *= i;
        }
        if e % 2 == 1 {
            free *= i;
        }
        i += 1;
    }
    (square, free * rest)
}

impl QuadField {
    /// Canonicalizes: square factors of `d` migrate into `q`, and `√1`
    /// collapses into the rational part.
    pub fn new(p: BigRational, q: BigRational, d: u64) -> Result<Self, IntegralError> {
        if d == 0 {
            return Ok(QuadField {
                p,
                q: BigRational::zero(),
                d: 1,
            });
        }
        let (square, free) = squarefree_split(d);
        let q = q * BigRational::from_integer(BigInt::from(square));
        if free == 1 {
            return Ok(QuadField {
                p: p + q,
                q: BigRational::zero(),
                d: 1,
            });
        }
        Ok(QuadField { p, q, d: free })
    }

    pub fn from_rational(p: BigRational) -> Self {
        QuadField {
            p,
            q: BigRational::zero(),
            d: 1,
        }
    }

    pub fn rational_part(&self) -> &BigRational {
        &self.p
    }

    pub fn surd_coeff(&self) -> &BigRational {
        &self.q
    }

    pub fn radicand(&self) -> u64 {
        self.d
    }

    pub fn is_rational(&self) -> bool {
        self.q.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        let p = self.p.to_f64().unwrap_or(f64::NAN);
        let q = self.q.to_f64().unwrap_or(f64::NAN);
        p + q * Float::sqrt(self.d as f64)
    }

    /// Exact sign of `p + q√d`.
    fn sign(&self) -> Ordering {
        let ps = self.p.cmp(&BigRational::zero());
        let qs = self.q.cmp(&BigRational::zero());
        match (ps, qs) {
            (s, Ordering::Equal) => s,
            (Ordering::Equal, s) => s,
            (Ordering::Greater, Ordering::Greater) => Ordering::Greater,
            (Ordering::Less, Ordering::Less) => Ordering::Less,
            _ => {
                // opposite signs: compare p^2 with q^2 d
                let p2 = &self.p * &self.p;
                let q2d = &self.q * &self.q * BigRational::from_integer(BigInt::from(self.d));
                match p2.cmp(&q2d) {
                    Ordering::Greater => ps,
                    Ordering::Less => qs,
                    Ordering::Equal => Ordering::Equal,
                }
            }
        }
    }

    /// Exact comparison; errors when the two elements live in different
    /// irrational fields.
    pub fn cmp_field(&self, other: &QuadField) -> Result<Ordering, IntegralError> {
        let diff = self.sub(other)?;
        Ok(diff.sign())
    }

    /// `self - other`, unifying radicands.
    pub fn sub(&self, other: &QuadField) -> Result<QuadField, IntegralError> {
        let d = match (self.q.is_zero(), other.q.is_zero()) {
            (true, true) => 1,
            (true, false) => other.d,
            (false, true) => self.d,
            (false, false) => {
                if self.d != other.d {
                    return Err(IntegralError::Unsupported(format!(
                        "mixed radicands sqrt({}) and sqrt({})",
                        self.d, other.d
                    )));
                }
                self.d
            }
        };
        Ok(QuadField {
            p: &self.p - &other.p,
            q: &self.q - &other.q,
            d,
        })
    }
}

impl fmt::Display for QuadField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.q.is_zero() {
            return write!(f, "{}", self.p);
        }
        let mag = self.q.abs();
        let surd = if mag.is_one() {
            format!("sqrt({})", self.d)
        } else {
            format!("{}*sqrt({})", mag, self.d)
        };
        if self.p.is_zero() {
            if self.q.is_negative() {
                return write!(f, "-{}", surd);
            }
            return write!(f, "{}", surd);
        }
        if self.q.is_negative() {
            write!(f, "{} - {}", self.p, surd)
        } else {
            write!(f, "{} + {}", self.p, surd)
        }
    }
}

/// Parses `1`, `-3/2`, `sqrt(2)`, `2*sqrt(3)`, `1 + sqrt(2)`,
/// `1/2 - 3*sqrt(5)`.
pub fn parse_quadfield(text: &str) -> Result<QuadField, IntegralError> {
    let bad = |m: &str| Err(IntegralError::Unsupported(format!("bad field element: {}", m)));
    let s = text.trim();
    if s.is_empty() {
        return bad("empty");
    }

    fn rational(tok: &str) -> Option<BigRational> {
        let tok = tok.trim();
        if let Some((num, den)) = tok.split_once('/') {
            let n: BigInt = num.trim().parse().ok()?;
            let d: BigInt = den.trim().parse().ok()?;
            if d.is_zero() {
                return None;
            }
            return Some(BigRational::new(n, d));
        }
        if tok.contains('.') {
            return crate::hyperreal::parse_decimal(tok).and_then(|r| match r {
                Real::Exact(q) => Some(q),
                Real::Float(_) => None,
            });
        }
        let n: BigInt = tok.parse().ok()?;
        Some(BigRational::from_integer(n))
    }

    // split into signed terms at top level
    let bytes = s.as_bytes();
    let mut terms: Vec<(i8, &str)> = Vec::new();
    let mut depth = 0i32;
    let mut start = 0usize;
    let mut sign: i8 = 1;
    let mut i = 0usize;
    if bytes[0] == b'-' {
        sign = -1;
        start = 1;
        i = 1;
    } else if bytes[0] == b'+' {
        start = 1;
        i = 1;
    }
    while i < bytes.len() {
        match bytes[i] {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b'+' | b'-' if depth == 0 && i > start => {
                terms.push((sign, s[start..i].trim()));
                sign = if bytes[i] == b'-' { -1 } else { 1 };
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    terms.push((sign, s[start..].trim()));
    if terms.len() > 2 {
        return bad("too many terms");
    }

    let mut p = BigRational::zero();
    let mut q = BigRational::zero();
    let mut d: Option<u64> = None;
    for (sgn, term) in terms {
        if term.is_empty() {
            return bad("missing term");
        }
        let sgnq = BigRational::from_integer(BigInt::from(sgn));
        if let Some(idx) = term.find("sqrt") {
            let coeff_text = term[..idx].trim().trim_end_matches('*').trim();
            let coeff = if coeff_text.is_empty() {
                BigRational::one()
            } else {
                match rational(coeff_text) {
                    Some(c) => c,
                    None => return bad(term),
                }
            };
            let rest = term[idx + 4..].trim();
            // both `sqrt(2)` and the bare literal `sqrt2`
            let digits = if rest.starts_with('(') && rest.ends_with(')') {
                rest[1..rest.len() - 1].trim()
            } else {
                rest
            };
            let inner: u64 = match digits.parse() {
                Ok(v) => v,
                Err(_) => return bad("sqrt argument must be a nonnegative integer"),
            };
            if d.replace(inner).is_some() {
                return bad("more than one surd");
            }
            q += sgnq * coeff;
        } else {
            match rational(term) {
                Some(r) => p += sgnq * r,
                None => return bad(term),
            }
        }
    }
    QuadField::new(p, q, d.unwrap_or(1))
}

/// The rational-indicator integral `∫_a^b 1_ℚ` on decidable endpoints.
/// With partition points `x_k = a + (k/n)(b-a)`, rationality of `x_k`
/// reduces to a single linear equation in `k/n`, so at most one partition
/// point per count is rational unless both `a` and `b-a` are.
pub fn dirichlet_integrate(
    a: &QuadField,
    b: &QuadField,
) -> Result<IntegralVerdict, IntegralError> {
    if a.cmp_field(b)? != Ordering::Less {
        return Err(IntegralError::Unsupported(String::from(
            "requires a < b in the field",
        )));
    }
    let w = b.sub(a)?;
    let value = if w.q.is_zero() && a.q.is_zero() {
        // every partition point is rational: the sum is exactly b - a
        Real::Exact(w.p.clone())
    } else {
        // at most one partition point is rational, contributing at most
        // one infinitesimal cell
        Real::Exact(BigRational::zero())
    };
    let evidence = default_family()
        .into_iter()
        .map(|n| Evidence::Family {
            n,
            st: value.clone(),
        })
        .collect();
    Ok(IntegralVerdict {
        verdict: Verdict::Integrable(value),
        evidence,
        tolerance: 0.0,
        confidence: Confidence::Exact,
    })
}

#[derive(Clone, Debug)]
pub struct DirichletAdditivityReport {
    pub ab: IntegralVerdict,
    pub bc: IntegralVerdict,
    pub ac: IntegralVerdict,
    /// `L(a,b) + L(b,c) - L(a,c)`, exact.
    pub residual: Real,
    pub additive: bool,
}

/// Exhibits (non-)additivity of the rational indicator across `a < b < c`.
pub fn dirichlet_additivity(
    a: &QuadField,
    b: &QuadField,
    c: &QuadField,
) -> Result<DirichletAdditivityReport, IntegralError> {
    let ab = dirichlet_integrate(a, b)?;
    let bc = dirichlet_integrate(b, c)?;
    let ac = dirichlet_integrate(a, c)?;
    let residual = match (ab.value(), bc.value(), ac.value()) {
        (Some(l1), Some(l2), Some(l3)) => l1.clone() + l2.clone() - l3.clone(),
        _ => unreachable!("dirichlet verdicts are always integrable"),
    };
    let additive = residual.is_zero();
    Ok(DirichletAdditivityReport {
        ab,
        bc,
        ac,
        residual,
        additive,
    })
}

// ---------------------------------------------------------------------------
// Bounds sanity check
// ---------------------------------------------------------------------------

pub const BOUNDS_GRID: usize = 1025;

#[derive(Clone, Debug)]
pub struct BoundsReport {
    /// Grid minimum of `f` on `[a,b]`.
    pub lower: f64,
    /// Grid maximum.
    pub upper: f64,
    /// The integrable verdict value.
    pub value: f64,
    /// Allowance for extremes the grid might miss, from 513- vs 1025-point
    /// refinement drift.
    pub margin: f64,
    pub ok: bool,
}

/// Checks `m(b-a) ≤ L ≤ M(b-a)` with `m`, `M` estimated on a 1025-point
/// grid and `L` the integrable verdict value.
pub fn bounds_check(
    f: &Expr,
    a: &Real,
    b: &Real,
    opts: &IntegrateOptions,
) -> Result<BoundsReport, IntegralError> {
    let verdict = integrate(f, a, b, &default_family(), opts);
    let value = match verdict.value() {
        Some(v) => v.to_f64(),
        None => return Err(IntegralError::NotApplicable(verdict.verdict.name().to_string())),
    };
    let fix = opts.sum.fix.as_ref();
    let (af, bf) = (a.to_f64(), b.to_f64());
    let extremes = |points: usize| -> Result<(f64, f64), IntegralError> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..points {
            let x = af + (bf - af) * i as f64 / (points - 1) as f64;
            let v = eval_with_fix(f, fix, &Real::Float(x))
                .map_err(|e| IntegralError::Unsupported(e.message))?
                .to_f64();
            lo = Float::min(lo, v);
            hi = Float::max(hi, v);
        }
        Ok((lo, hi))
    };
    let (lo_coarse, hi_coarse) = extremes((BOUNDS_GRID + 1) / 2)?;
    let (lower, upper) = extremes(BOUNDS_GRID)?;
    let margin = Float::max(
        Float::abs(lower - lo_coarse),
        Float::abs(upper - hi_coarse),
    ) + 1e-12;
    let width = bf - af;
    let ok = (lower - margin) * width <= value && value <= (upper + margin) * width;
    Ok(BoundsReport {
        lower,
        upper,
        value,
        margin,
        ok,
    })
}
