//! Command-line front door: every check and computation in the core crate,
//! with stable text or JSON output and exit codes that scripts can branch on.
//!
//! Exit codes: 0 success (including expected-violation findings), 1 usage
//! error, 2 parse error, 3 domain or precondition error, 4 a checked claim
//! failed.

pub mod config;
mod render;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use omega_core::calculus::{ftc1_check, ftc2_check, telescoping_oracle, CalculusError};
use omega_core::expr::{parse as parse_expr_text, Expr, PointFix};
use omega_core::hyperreal::parse_literal;
use omega_core::integral::{
    additivity_check, dirichlet_additivity, dirichlet_integrate, integrate, parse_quadfield,
    AdditivityOutcome, IntegralError, IntegrateOptions, QuadField,
};
use omega_core::omegasum::{
    finite_sum_oracle, nspec_parse, omega_sum, OmegaSumError, OracleMode,
};
use omega_core::{ord, Hyperreal, Real};

use config::{parse_real_arg, Config, Format};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_CLAIM_FAILED: i32 = 4;

#[derive(Clone, Debug)]
pub enum CliError {
    Usage(String),
    Parse(String),
    Domain(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Domain(_) => EXIT_DOMAIN,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Parse(m) | CliError::Domain(m) => m,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage error",
            CliError::Parse(_) => "parse error",
            CliError::Domain(_) => "error",
        }
    }
}

fn sum_err(e: OmegaSumError) -> CliError {
    match e {
        OmegaSumError::BadNSpec(m) => CliError::Parse(m),
        other => CliError::Domain(other.to_string()),
    }
}

fn calc_err(e: CalculusError) -> CliError {
    CliError::Domain(e.to_string())
}

fn integral_err(e: IntegralError) -> CliError {
    CliError::Domain(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "omega",
    version,
    about = "Omega sums, integral verdicts, and calculus checks over series in a distinguished infinitesimal"
)]
pub struct Cli {
    #[command(flatten)]
    pub globals: GlobalFlags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args)]
pub struct GlobalFlags {
    /// Output format: text or json.
    #[arg(long, global = true, value_name = "FMT")]
    pub format: Option<String>,
    /// Agreement tolerance for claims and float comparisons.
    #[arg(long, global = true, value_name = "TOL")]
    pub tol: Option<f64>,
    /// Series validity depth V, between 2 and 16.
    #[arg(long, global = true, value_name = "V")]
    pub depth: Option<i64>,
    /// Config file with key=value lines; replaces the OMEGA_CONFIG default.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Quadrature tolerance for numeric integral coefficients.
    #[arg(long = "quad-tol", global = true, value_name = "TOL")]
    pub quad_tol: Option<f64>,
    /// Comma-separated N-spec family used by integrate.
    #[arg(long, global = true, value_name = "LIST")]
    pub family: Option<String>,
    /// Comma-separated breakpoints where abs arguments vanish.
    #[arg(long, global = true, value_name = "LIST")]
    pub breakpoints: Option<String>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Expand the right-hand sum of EXPR over [a, b] as a series in w = 1/N.
    Sum {
        expr: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Partition count polynomial in W, e.g. "W", "2*W", "W^2".
        #[arg(long)]
        n: String,
        /// Redefine EXPR at one point (with --fix-value).
        #[arg(long = "fix-at", value_name = "X")]
        fix_at: Option<String>,
        #[arg(long = "fix-value", value_name = "Y")]
        fix_value: Option<String>,
    },
    /// Classify the integral of EXPR over [a, b] from family evidence.
    Integrate {
        expr: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long = "fix-at", value_name = "X")]
        fix_at: Option<String>,
        #[arg(long = "fix-value", value_name = "Y")]
        fix_value: Option<String>,
    },
    /// Check the interval-additivity identity over a < b < c.
    Additivity {
        expr: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        c: String,
    },
    /// Check the accumulator's difference quotients against EXPR at x.
    Ftc1 {
        expr: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        x: String,
        /// Comma-separated infinitesimal increments, e.g. "w,-w,2*w,w^2".
        #[arg(long, value_name = "LIST")]
        alphas: Option<String>,
    },
    /// Check the integral of EXPR against the antiderivative difference.
    Ftc2 {
        expr: String,
        #[arg(long)]
        anti: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Integrate the rational indicator over quadratic-field endpoints.
    Dirichlet {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Interior cut point: also report additivity across it.
        #[arg(long)]
        c: Option<String>,
    },
    /// Brute-force finite right-hand sum at a concrete N.
    Oracle {
        expr: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long = "N", alias = "n")]
        n: u64,
        /// Exact rational summation (endpoints must be rational).
        #[arg(long)]
        exact: bool,
        #[arg(long = "fix-at", value_name = "X")]
        fix_at: Option<String>,
        #[arg(long = "fix-value", value_name = "Y")]
        fix_value: Option<String>,
    },
    /// Re-enact the telescoping collapse of an antiderivative at finite N.
    Telescope {
        anti: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long = "N", alias = "n")]
        n: u64,
    },
}

pub struct Outcome {
    pub text: String,
    pub json: Value,
    pub failed: bool,
}

impl Outcome {
    fn report(text: String, json: Value) -> Self {
        Outcome {
            text,
            json,
            failed: false,
        }
    }

    fn claim(text: String, json: Value, pass: bool) -> Self {
        Outcome {
            text,
            json,
            failed: !pass,
        }
    }
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{}", e);
                    EXIT_OK
                }
                _ => {
                    eprint!("{}", e);
                    EXIT_USAGE
                }
            };
        }
    };
    let cfg = match config::resolve(&cli.globals) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{}: {}", e.label(), e.message());
            return e.exit_code();
        }
    };
    match dispatch(cli.command, &cfg) {
        Ok(outcome) => {
            match cfg.format {
                Format::Text => print!("{}", outcome.text),
                Format::Json => {
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&outcome.json)
                            .expect("reports serialize")
                    );
                }
            }
            if outcome.failed {
                EXIT_CLAIM_FAILED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("{}: {}", e.label(), e.message());
            e.exit_code()
        }
    }
}

fn parse_expr_arg(text: &str) -> Result<Expr, CliError> {
    parse_expr_text(text)
        .map_err(|e| CliError::Parse(format!("expression: {} (offset {})", e.message, e.offset)))
}

fn parse_fix(at: &Option<String>, value: &Option<String>) -> Result<Option<PointFix>, CliError> {
    match (at, value) {
        (None, None) => Ok(None),
        (Some(at), Some(value)) => Ok(Some(PointFix {
            at: parse_real_arg("--fix-at", at)?,
            value: parse_real_arg("--fix-value", value)?,
        })),
        _ => Err(CliError::Usage(String::from(
            "--fix-at and --fix-value must be given together",
        ))),
    }
}

fn parse_quadfield_arg(name: &str, text: &str) -> Result<QuadField, CliError> {
    parse_quadfield(text).map_err(|e| CliError::Parse(format!("{}: {}", name, e)))
}

fn parse_alphas(cfg: &Config, spec: &Option<String>) -> Result<Vec<Hyperreal>, CliError> {
    let v = ord(cfg.validity);
    match spec {
        None => Ok(vec![
            Hyperreal::omega(v),
            Hyperreal::omega(v).neg(),
            Hyperreal::omega(v).scale(&Real::from_int(2)),
            Hyperreal::monomial(ord(2), Real::one(), v),
        ]),
        Some(list) => config::split_list(list)
            .iter()
            .map(|s| {
                parse_literal(s, v).map_err(|e| CliError::Parse(format!("alpha {:?}: {}", s, e)))
            })
            .collect(),
    }
}

fn integrate_options(cfg: &Config, fix: Option<PointFix>) -> IntegrateOptions {
    let mut sum = cfg.sum_options();
    sum.fix = fix;
    IntegrateOptions {
        tolerance: cfg.tolerance,
        sum,
        ..IntegrateOptions::default()
    }
}

fn dispatch(command: Command, cfg: &Config) -> Result<Outcome, CliError> {
    match command {
        Command::Sum {
            expr,
            a,
            b,
            n,
            fix_at,
            fix_value,
        } => {
            let f = parse_expr_arg(&expr)?;
            let a = parse_real_arg("--a", &a)?;
            let b = parse_real_arg("--b", &b)?;
            let n = nspec_parse(&n).map_err(sum_err)?;
            let mut opts = cfg.sum_options();
            opts.fix = parse_fix(&fix_at, &fix_value)?;
            let res = omega_sum(&f, &a, &b, &n, &opts).map_err(sum_err)?;
            Ok(Outcome::report(render::sum_text(&res), render::sum_json(&res)))
        }
        Command::Integrate {
            expr,
            a,
            b,
            fix_at,
            fix_value,
        } => {
            let f = parse_expr_arg(&expr)?;
            let a = parse_real_arg("--a", &a)?;
            let b = parse_real_arg("--b", &b)?;
            if a.cmp_real(&b) != std::cmp::Ordering::Less {
                return Err(CliError::Domain(String::from("requires a < b")));
            }
            let family = cfg.family_nspecs()?;
            let opts = integrate_options(cfg, parse_fix(&fix_at, &fix_value)?);
            let verdict = integrate(&f, &a, &b, &family, &opts);
            let text = render::verdict_text_lines(&verdict).join("\n") + "\n";
            Ok(Outcome::report(text, render::verdict_json(&verdict)))
        }
        Command::Additivity { expr, a, b, c } => {
            let f = parse_expr_arg(&expr)?;
            let a = parse_real_arg("--a", &a)?;
            let b = parse_real_arg("--b", &b)?;
            let c = parse_real_arg("--c", &c)?;
            let opts = integrate_options(cfg, None);
            let rep = additivity_check(&f, &a, &b, &c, cfg.tolerance, &opts);
            if let AdditivityOutcome::NotApplicable { reason } = &rep.outcome {
                return Err(CliError::Domain(format!("not applicable: {}", reason)));
            }
            let pass = matches!(rep.outcome, AdditivityOutcome::Verified { .. });
            Ok(Outcome::claim(
                render::additivity_text(&rep),
                render::additivity_json(&rep),
                pass,
            ))
        }
        Command::Ftc1 {
            expr,
            a,
            b,
            x,
            alphas,
        } => {
            let f = parse_expr_arg(&expr)?;
            let a = parse_real_arg("--a", &a)?;
            let b = parse_real_arg("--b", &b)?;
            let x = parse_real_arg("--x", &x)?;
            let alphas = parse_alphas(cfg, &alphas)?;
            let rep = ftc1_check(
                &f,
                &a,
                &b,
                &x,
                &alphas,
                cfg.validity as u32,
                cfg.tolerance,
            )
            .map_err(calc_err)?;
            Ok(Outcome::claim(
                render::ftc1_text(&rep),
                render::ftc1_json(&rep),
                rep.pass,
            ))
        }
        Command::Ftc2 { expr, anti, a, b } => {
            let f = parse_expr_arg(&expr)?;
            let h = parse_expr_arg(&anti)?;
            let a = parse_real_arg("--a", &a)?;
            let b = parse_real_arg("--b", &b)?;
            let opts = integrate_options(cfg, None);
            let rep = ftc2_check(&f, &h, &a, &b, cfg.tolerance, &opts).map_err(calc_err)?;
            Ok(Outcome::claim(
                render::ftc2_text(&rep),
                render::ftc2_json(&rep),
                rep.pass,
            ))
        }
        Command::Dirichlet { a, b, c } => {
            let a = parse_quadfield_arg("--a", &a)?;
            let b = parse_quadfield_arg("--b", &b)?;
            match c {
                None => {
                    let verdict = dirichlet_integrate(&a, &b).map_err(integral_err)?;
                    let text = render::verdict_text_lines(&verdict).join("\n") + "\n";
                    Ok(Outcome::report(text, render::verdict_json(&verdict)))
                }
                Some(c) => {
                    let cut = parse_quadfield_arg("--c", &c)?;
                    // a and b are the endpoints; the cut splits [a, b]
                    let rep = dirichlet_additivity(&a, &cut, &b).map_err(integral_err)?;
                    // non-additivity here reproduces the expected finding,
                    // so it never fails the run
                    Ok(Outcome::report(
                        render::dirichlet_split_text(&rep),
                        render::dirichlet_split_json(&rep),
                    ))
                }
            }
        }
        Command::Oracle {
            expr,
            a,
            b,
            n,
            exact,
            fix_at,
            fix_value,
        } => {
            let f = parse_expr_arg(&expr)?;
            let a = parse_real_arg("--a", &a)?;
            let b = parse_real_arg("--b", &b)?;
            let fix = parse_fix(&fix_at, &fix_value)?;
            let mode = if exact {
                OracleMode::Exact
            } else {
                OracleMode::Float
            };
            let value =
                finite_sum_oracle(&f, &a, &b, n, mode, fix.as_ref()).map_err(sum_err)?;
            let text = format!(
                "{}\nn: {}\nmode: {}\n",
                value,
                n,
                if exact { "exact" } else { "float" }
            );
            let json = serde_json::json!({
                "value": value.to_string(),
                "n": n.to_string(),
                "mode": if exact { "exact" } else { "float" },
            });
            Ok(Outcome::report(text, json))
        }
        Command::Telescope { anti, a, b, n } => {
            let h = parse_expr_arg(&anti)?;
            let a = parse_real_arg("--a", &a)?;
            let b = parse_real_arg("--b", &b)?;
            let rep = telescoping_oracle(&h, &a, &b, n).map_err(calc_err)?;
            let drift = (rep.telescoped.to_f64() - rep.difference.to_f64()).abs();
            let pass = rep.collapse_exact || drift <= cfg.tolerance;
            Ok(Outcome::claim(
                render::telescope_text(&rep, pass),
                render::telescope_json(&rep, pass),
                pass,
            ))
        }
    }
}
