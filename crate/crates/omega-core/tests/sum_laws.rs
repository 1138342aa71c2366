//! Corpus-level agreement between the series engine and the brute-force
//! finite sums: substitution at w = 1/N, refinement invariance, the
//! right-minus-left boundary identity, positivity, and the decay of the
//! split-point discrepancies.

use omega_core::expr::{eval_real, parse, Expr};
use omega_core::integral::split_sum_experiment;
use omega_core::omegasum::{
    delta_x, finite_sum_oracle, nspec_parse, omega_sum, OracleMode, SumMethod, SumOptions,
};
use omega_core::{ord, Hyperreal, Real};

const PI: f64 = core::f64::consts::PI;

fn e(src: &str) -> Expr {
    parse(src).unwrap()
}

fn rat(p: i64, q: i64) -> Real {
    Real::from_ratio(p, q)
}

/// Polynomials with rational endpoints: the closed-form path.
fn exact_corpus() -> Vec<(Expr, Real, Real)> {
    vec![
        (e("x^2"), rat(0, 1), rat(1, 1)),
        (e("x^3 - x"), rat(1, 1), rat(3, 1)),
        (e("x^4 - 2*x + 1/2"), rat(0, 1), rat(2, 1)),
        (e("7/3"), rat(-1, 2), rat(5, 2)),
    ]
}

/// Smooth non-polynomial integrands: the asymptotic path.
fn float_corpus() -> Vec<(Expr, Real, Real)> {
    vec![
        (e("sin(x)"), Real::Float(0.0), Real::Float(PI)),
        (e("exp(x)"), rat(0, 1), rat(1, 1)),
        (e("1/(1 + x^2)"), rat(0, 1), rat(2, 1)),
    ]
}

fn left_sum_exact(f: &Expr, a: &Real, b: &Real, n: u64) -> Real {
    let h = (b.clone() - a.clone()) * rat(1, n as i64);
    let mut sum = Real::zero();
    for k in 0..n {
        let x = a.clone() + h.clone() * Real::from_int(k as i64);
        sum = sum + eval_real(f, &x).unwrap();
    }
    sum * h
}

fn left_sum_float(f: &Expr, a: f64, b: f64, n: u64) -> f64 {
    let h = (b - a) / n as f64;
    let mut sum = 0.0;
    for k in 0..n {
        let x = a + k as f64 * h;
        sum += eval_real(f, &Real::Float(x)).unwrap().to_f64();
    }
    sum * h
}

#[test]
fn substitution_reproduces_finite_sums_exactly() {
    let n = nspec_parse("W").unwrap();
    for (f, a, b) in exact_corpus() {
        let res = omega_sum(&f, &a, &b, &n, &SumOptions::default()).unwrap();
        assert_eq!(res.method, SumMethod::FaulhaberExact);
        for count in [64u64, 256, 1024] {
            let w = rat(1, count as i64);
            let substituted = res.value.eval_at(&w).unwrap();
            let oracle = finite_sum_oracle(&f, &a, &b, count, OracleMode::Exact, None).unwrap();
            assert_eq!(substituted, oracle, "{} at N = {}", f, count);
        }
    }
}

#[test]
fn substitution_tracks_finite_sums_numerically() {
    let n = nspec_parse("W").unwrap();
    for (f, a, b) in float_corpus() {
        let res = omega_sum(&f, &a, &b, &n, &SumOptions::default()).unwrap();
        for count in [64u64, 256, 1024] {
            let substituted = res
                .value
                .eval_at(&Real::Float(1.0 / count as f64))
                .unwrap()
                .to_f64();
            let oracle = finite_sum_oracle(&f, &a, &b, count, OracleMode::Float, None)
                .unwrap()
                .to_f64();
            // validity 8 puts the model error below roundoff at these N
            assert!(
                (substituted - oracle).abs() <= 1e-11,
                "{} at N = {}: {} vs {}",
                f,
                count,
                substituted,
                oracle
            );
        }
    }
}

#[test]
fn refinement_family_shares_standard_part() {
    let family: Vec<_> = ["W", "W + 1", "2*W", "3*W", "W^2"]
        .iter()
        .map(|s| nspec_parse(s).unwrap())
        .collect();
    for (f, a, b) in exact_corpus() {
        let mut sts = Vec::new();
        for n in &family {
            let res = omega_sum(&f, &a, &b, n, &SumOptions::default()).unwrap();
            sts.push(res.value.standard_part().unwrap());
        }
        for st in &sts[1..] {
            assert_eq!(st, &sts[0], "{} family split: {} vs {}", f, st, sts[0]);
        }
    }
    for (f, a, b) in float_corpus() {
        let mut sts = Vec::new();
        for n in &family {
            let res = omega_sum(&f, &a, &b, n, &SumOptions::default()).unwrap();
            sts.push(res.value.standard_part().unwrap().to_f64());
        }
        for st in &sts[1..] {
            assert!(
                (st - sts[0]).abs() <= 2e-10,
                "{} family split: {} vs {}",
                f,
                st,
                sts[0]
            );
        }
    }
}

#[test]
fn right_sum_minus_left_sum_is_boundary_jump() {
    for (f, a, b) in exact_corpus() {
        for count in [64u64, 256] {
            let right = finite_sum_oracle(&f, &a, &b, count, OracleMode::Exact, None).unwrap();
            let left = left_sum_exact(&f, &a, &b, count);
            let h = (b.clone() - a.clone()) * rat(1, count as i64);
            let jump = h * (eval_real(&f, &b).unwrap() - eval_real(&f, &a).unwrap());
            assert_eq!(right - left, jump, "{} at N = {}", f, count);
        }
    }
    for (f, a, b) in float_corpus() {
        let (af, bf) = (a.to_f64(), b.to_f64());
        for count in [64u64, 256] {
            let right = finite_sum_oracle(&f, &a, &b, count, OracleMode::Float, None)
                .unwrap()
                .to_f64();
            let left = left_sum_float(&f, af, bf, count);
            let h = (bf - af) / count as f64;
            let jump = h
                * (eval_real(&f, &b).unwrap().to_f64() - eval_real(&f, &a).unwrap().to_f64());
            assert!(
                (right - left - jump).abs() <= 1e-12,
                "{} at N = {}",
                f,
                count
            );
        }
    }
}

#[test]
fn left_sum_series_identity() {
    // S_right - Δx·(f(b) - f(a)) is the left-sum series; check it against
    // directly computed left sums under w := 1/N.
    let n = nspec_parse("W").unwrap();
    for (f, a, b) in exact_corpus() {
        let res = omega_sum(&f, &a, &b, &n, &SumOptions::default()).unwrap();
        let dx = delta_x(&n, &a, &b, ord(8));
        let jump = eval_real(&f, &b).unwrap() - eval_real(&f, &a).unwrap();
        let left_series: Hyperreal = res.value.sub(&dx.scale(&jump));
        for count in [64u64, 256] {
            let substituted = left_series.eval_at(&rat(1, count as i64)).unwrap();
            assert_eq!(
                substituted,
                left_sum_exact(&f, &a, &b, count),
                "{} at N = {}",
                f,
                count
            );
        }
    }
}

#[test]
fn nonnegative_integrands_have_nonnegative_sums() {
    let cases = [
        ("x^2", rat(-1, 1), rat(2, 1), "W"),
        ("sin(x)", Real::Float(0.0), Real::Float(PI), "W"),
        ("exp(x)", rat(-1, 1), rat(1, 1), "W"),
        ("1/(1 + x^2)", rat(0, 1), rat(3, 1), "W"),
        ("if(x < 1, 1 - x, x - 1)", rat(0, 1), rat(2, 1), "2*W"),
    ];
    for (src, a, b, nsrc) in cases {
        let f = e(src);
        // premise: f is nonnegative on a sample grid
        let (af, bf) = (a.to_f64(), b.to_f64());
        for i in 0..=100 {
            let x = af + (bf - af) * i as f64 / 100.0;
            assert!(
                eval_real(&f, &Real::Float(x)).unwrap().to_f64() >= -1e-15,
                "{} premise fails at {}",
                src,
                x
            );
        }
        let n = nspec_parse(nsrc).unwrap();
        let res = omega_sum(&f, &a, &b, &n, &SumOptions::default()).unwrap();
        let st = res.value.standard_part().unwrap();
        assert!(st.to_f64() >= -1e-12, "{}: st = {}", src, st);
    }
}

#[test]
fn split_discrepancies_decrease_with_refinement() {
    // unaligned triple: b - a = 1 against c - a = 3
    let exact_triple = (rat(0, 1), rat(1, 1), rat(3, 1));
    let float_triple = (Real::Float(0.0), Real::Float(1.0), Real::Float(3.0));
    for (src, (a, b, c)) in [("x^2", exact_triple), ("sin(x)", float_triple)] {
        let f = e(src);
        let mut prev_left = f64::INFINITY;
        let mut prev_right = f64::INFINITY;
        for count in [100u64, 1_000, 10_000, 100_000] {
            let rep = split_sum_experiment(&f, &a, &b, &c, count, None).unwrap();
            let left = rep.left.to_f64().abs();
            let right = rep.right.to_f64().abs();
            assert!(
                left <= prev_left + 1e-15 && right <= prev_right + 1e-15,
                "{} at N = {}: left {} (prev {}), right {} (prev {})",
                src,
                count,
                left,
                prev_left,
                right,
                prev_right
            );
            prev_left = left;
            prev_right = right;
        }
        // an order of magnitude of N buys at least an order of decay overall
        assert!(prev_left < 1e-4 && prev_right < 1e-4, "{}", src);
    }
}
