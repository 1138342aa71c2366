//! Renders core values and reports into the stable text and JSON shapes
//! the CLI promises. JSON object keys are emitted in sorted order, so
//! identical inputs always serialize to identical bytes.

use serde_json::{json, Value};

use omega_core::calculus::{AntiderivativeCheck, Ftc1Report, Ftc2Report, TelescopeReport};
use omega_core::integral::{
    AdditivityOutcome, AdditivityReport, DirichletAdditivityReport, Evidence, IntegralVerdict,
};
use omega_core::omegasum::OmegaSumResult;
use omega_core::{Hyperreal, Real};

pub fn hyperreal_json(h: &Hyperreal) -> Value {
    let terms: Vec<Value> = h
        .terms()
        .map(|(exp, coeff)| {
            json!({
                "exp": exp.to_string(),
                "coeff": coeff.to_string(),
            })
        })
        .collect();
    json!({
        "terms": terms,
        "valid_order": h.valid_order().to_string(),
        "mode": if h.is_exact() { "exact" } else { "float" },
    })
}

pub fn real_str(r: &Real) -> String {
    r.to_string()
}

pub fn sum_json(res: &OmegaSumResult) -> Value {
    json!({
        "value": hyperreal_json(&res.value),
        "method": res.method.to_string(),
        "integral_coeff_source": res.integral_coeff_source.to_string(),
        "validity": res.value.valid_order().to_string(),
        "notes": res.notes,
    })
}

pub fn sum_text(res: &OmegaSumResult) -> String {
    let mut lines = vec![
        res.value.to_string(),
        format!("method: {}", res.method),
        format!("coefficients: {}", res.integral_coeff_source),
    ];
    for note in &res.notes {
        lines.push(format!("note: {}", note));
    }
    lines.join("\n") + "\n"
}

pub fn verdict_json(v: &IntegralVerdict) -> Value {
    let evidence: Vec<Value> = v
        .evidence
        .iter()
        .map(|e| match e {
            Evidence::Family { n, st } => json!({
                "n": n.to_string(),
                "st": st.to_string(),
            }),
            Evidence::Growth { n, value } => json!({
                "n": n.to_string(),
                "value": value,
            }),
        })
        .collect();
    json!({
        "verdict": v.verdict.name(),
        "value": v.value().map(|r| r.to_string()),
        "confidence": v.confidence.to_string(),
        "evidence": evidence,
        "tolerance": v.tolerance,
    })
}

pub fn verdict_text_lines(v: &IntegralVerdict) -> Vec<String> {
    let mut lines = vec![
        format!("verdict: {}", v.verdict),
        format!("confidence: {}", v.confidence),
        format!("tolerance: {}", v.tolerance),
        String::from("evidence:"),
    ];
    for e in &v.evidence {
        match e {
            Evidence::Family { n, st } => lines.push(format!("  {}: st = {}", n, st)),
            Evidence::Growth { n, value } => {
                lines.push(format!("  N = {}: sum = {}", n, value))
            }
        }
    }
    lines
}

fn status_str(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

pub fn additivity_json(rep: &AdditivityReport) -> Value {
    let (status, residual, exact) = match &rep.outcome {
        AdditivityOutcome::Verified { residual, exact } => {
            ("pass", Some(real_str(residual)), Some(*exact))
        }
        AdditivityOutcome::Violated { residual } => ("fail", Some(real_str(residual)), None),
        AdditivityOutcome::NotApplicable { .. } => ("not-applicable", None, None),
    };
    json!({
        "claim": "additivity",
        "status": status,
        "ab": rep.ab.as_ref().map(verdict_json),
        "bc": rep.bc.as_ref().map(verdict_json),
        "ac": rep.ac.as_ref().map(verdict_json),
        "residual": residual,
        "exact": exact,
        "tolerance": rep.tolerance,
    })
}

pub fn additivity_text(rep: &AdditivityReport) -> String {
    let mut lines = vec![String::from("claim: additivity")];
    for (name, v) in [("ab", &rep.ab), ("bc", &rep.bc), ("ac", &rep.ac)] {
        if let Some(v) = v {
            lines.push(format!("{}: {}", name, v.verdict));
        }
    }
    match &rep.outcome {
        AdditivityOutcome::Verified { residual, exact } => {
            lines.push(format!("residual: {}", residual));
            lines.push(format!("exact: {}", exact));
            lines.push(String::from("status: pass"));
        }
        AdditivityOutcome::Violated { residual } => {
            lines.push(format!("residual: {}", residual));
            lines.push(String::from("status: fail"));
        }
        AdditivityOutcome::NotApplicable { reason } => {
            lines.push(format!("status: not-applicable ({})", reason));
        }
    }
    lines.join("\n") + "\n"
}

pub fn ftc1_json(rep: &Ftc1Report) -> Value {
    let witnesses: Vec<Value> = rep
        .witnesses
        .iter()
        .map(|w| {
            json!({
                "alpha": w.alpha.to_string(),
                "quotient": hyperreal_json(&w.quotient),
                "st": w.st.to_string(),
            })
        })
        .collect();
    json!({
        "claim": "ftc1",
        "status": status_str(rep.pass),
        "x": rep.x.to_string(),
        "fx": rep.fx.to_string(),
        "witnesses": witnesses,
        "exact": rep.exact,
        "tolerance": rep.tolerance,
    })
}

pub fn ftc1_text(rep: &Ftc1Report) -> String {
    let mut lines = vec![
        String::from("claim: ftc1"),
        format!("x: {}", rep.x),
        format!("f(x): {}", rep.fx),
    ];
    for w in &rep.witnesses {
        lines.push(format!(
            "alpha = {}: quotient = {}, st = {}",
            w.alpha, w.quotient, w.st
        ));
    }
    lines.push(format!("status: {}", status_str(rep.pass)));
    lines.join("\n") + "\n"
}

pub fn validation_str(v: AntiderivativeCheck) -> &'static str {
    match v {
        AntiderivativeCheck::Symbolic => "symbolic",
        AntiderivativeCheck::Sampled => "sampled",
    }
}

pub fn ftc2_json(rep: &Ftc2Report) -> Value {
    json!({
        "claim": "ftc2",
        "status": status_str(rep.pass),
        "validation": validation_str(rep.validation),
        "verdict": verdict_json(&rep.verdict),
        "difference": rep.difference.to_string(),
        "residual": rep.residual.to_string(),
        "exact": rep.exact,
        "tolerance": rep.tolerance,
    })
}

pub fn ftc2_text(rep: &Ftc2Report) -> String {
    let mut lines = vec![
        String::from("claim: ftc2"),
        format!("validation: {}", validation_str(rep.validation)),
    ];
    lines.extend(verdict_text_lines(&rep.verdict));
    lines.push(format!("difference: {}", rep.difference));
    lines.push(format!("residual: {}", rep.residual));
    lines.push(format!("status: {}", status_str(rep.pass)));
    lines.join("\n") + "\n"
}

pub fn dirichlet_split_json(rep: &DirichletAdditivityReport) -> Value {
    json!({
        "claim": "dirichlet-additivity",
        "status": status_str(rep.additive),
        "expected_violation": !rep.additive,
        "left": verdict_json(&rep.ab),
        "right": verdict_json(&rep.bc),
        "whole": verdict_json(&rep.ac),
        "residual": rep.residual.to_string(),
        "additive": rep.additive,
    })
}

pub fn dirichlet_split_text(rep: &DirichletAdditivityReport) -> String {
    let l = rep.ab.value().expect("dirichlet verdicts carry values");
    let r = rep.bc.value().expect("dirichlet verdicts carry values");
    let w = rep.ac.value().expect("dirichlet verdicts carry values");
    let identity = if rep.additive {
        format!("identity: {} + {} = {}", l, r, w)
    } else {
        format!("identity: {} + {} != {}", l, r, w)
    };
    let status = if rep.additive {
        String::from("status: pass")
    } else {
        String::from("status: fail (expected-violation)")
    };
    let lines = vec![
        String::from("claim: dirichlet-additivity"),
        format!("left: {}", rep.ab.verdict),
        format!("right: {}", rep.bc.verdict),
        format!("whole: {}", rep.ac.verdict),
        identity,
        format!("residual: {}", rep.residual),
        status,
    ];
    lines.join("\n") + "\n"
}

pub fn telescope_json(rep: &TelescopeReport, pass: bool) -> Value {
    json!({
        "claim": "telescoping",
        "status": status_str(pass),
        "n": rep.n.to_string(),
        "telescoped": rep.telescoped.to_string(),
        "difference": rep.difference.to_string(),
        "collapse_exact": rep.collapse_exact,
        "residual": rep.residual.to_string(),
    })
}

pub fn telescope_text(rep: &TelescopeReport, pass: bool) -> String {
    let lines = vec![
        String::from("claim: telescoping"),
        format!("n: {}", rep.n),
        format!("telescoped: {}", rep.telescoped),
        format!("difference: {}", rep.difference),
        format!(
            "collapse: {}",
            if rep.collapse_exact { "exact" } else { "approximate" }
        ),
        format!("residual: {}", rep.residual),
        format!("status: {}", status_str(pass)),
    ];
    lines.join("\n") + "\n"
}
