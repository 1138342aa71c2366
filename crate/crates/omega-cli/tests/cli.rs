//! End-to-end behavior of the omega binary: exit codes, output formats,
//! and config layering (defaults, OMEGA_CONFIG, --config, flags).

use std::io::Write as _;
use std::process::{Command, Output};

fn run_env(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_omega"));
    cmd.args(args).env_remove("OMEGA_CONFIG");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn omega")
}

fn run(args: &[&str]) -> Output {
    run_env(args, &[])
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn help_and_version_exit_zero() {
    let help = run(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("Usage"));

    let sub = run(&["sum", "--help"]);
    assert_eq!(code(&sub), 0);
    assert!(stdout(&sub).contains("--n"));

    let version = run(&["--version"]);
    assert_eq!(code(&version), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["sum", "x^2", "--a", "0", "--b", "1"])), 1);

    let tol = run(&["sum", "x^2", "--a", "0", "--b", "1", "--n", "W", "--tol", "0"]);
    assert_eq!(code(&tol), 1);
    assert!(stderr(&tol).contains("tolerance must be positive"));

    let depth = run(&["sum", "x^2", "--a", "0", "--b", "1", "--n", "W", "--depth", "20"]);
    assert_eq!(code(&depth), 1);
    assert!(stderr(&depth).contains("[2, 16]"));

    let fix = run(&["sum", "x^2", "--a", "0", "--b", "1", "--n", "W", "--fix-at", "0"]);
    assert_eq!(code(&fix), 1);
    assert!(stderr(&fix).contains("together"));
}

#[test]
fn parse_errors_exit_two() {
    let expr = run(&["sum", "x^^2", "--a", "0", "--b", "1", "--n", "W"]);
    assert_eq!(code(&expr), 2);
    assert!(stderr(&expr).contains("parse error"));
    assert!(stderr(&expr).contains("offset"));

    let nspec = run(&["sum", "x^2", "--a", "0", "--b", "1", "--n", "W%3"]);
    assert_eq!(code(&nspec), 2);

    let field = run(&["dirichlet", "--a", "sqrt(-2)", "--b", "1"]);
    assert_eq!(code(&field), 2);

    let endpoint = run(&["integrate", "x^2", "--a", "zero", "--b", "1"]);
    assert_eq!(code(&endpoint), 2);
}

#[test]
fn domain_errors_exit_three() {
    let reversed = run(&["integrate", "x^2", "--a", "2", "--b", "1"]);
    assert_eq!(code(&reversed), 3);
    assert!(stderr(&reversed).contains("a < b"));

    let jump = run(&["additivity", "if(x < 1, 0, 1)", "--a", "0", "--b", "1", "--c", "2"]);
    assert_eq!(code(&jump), 3);
    assert!(stderr(&jump).contains("not applicable"));

    let outside = run(&["ftc1", "x^2", "--a", "0", "--b", "1", "--x", "2"]);
    assert_eq!(code(&outside), 3);

    let wrong_anti = run(&["ftc2", "x^2", "--anti", "x^2", "--a", "0", "--b", "1"]);
    assert_eq!(code(&wrong_anti), 3);
    assert!(stderr(&wrong_anti).contains("antiderivative"));

    let pole = run(&["sum", "1/x", "--a", "0", "--b", "1", "--n", "W"]);
    assert_eq!(code(&pole), 3);
}

#[test]
fn failed_claims_exit_four() {
    let out = run(&[
        "ftc2", "cos(x)", "--anti", "sin(x)", "--a", "0", "--b", "1", "--tol", "1e-30",
    ]);
    assert_eq!(code(&out), 4);
    assert!(stdout(&out).contains("status: fail"));
}

#[test]
fn expected_violation_exits_zero() {
    let out = run(&["dirichlet", "--a", "0", "--b", "sqrt2", "--c", "1"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("identity: 1 + 0 != 0"));
    assert!(text.contains("status: fail (expected-violation)"));
}

#[test]
fn json_format_emits_json() {
    let out = run(&[
        "sum", "x^2", "--a", "0", "--b", "1", "--n", "W", "--format", "json",
    ]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("JSON output");
    assert_eq!(doc["method"], "faulhaber-exact");
    assert_eq!(doc["value"]["terms"][0]["coeff"], "1/3");

    let text = run(&["sum", "x^2", "--a", "0", "--b", "1", "--n", "W"]);
    assert!(stdout(&text).starts_with("1/3 + 1/2*w + 1/6*w^2"));
}

#[test]
fn family_flag_controls_evidence() {
    let out = run(&[
        "integrate", "x^2", "--a", "0", "--b", "1", "--family", "W,2*W", "--format", "json",
    ]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("JSON output");
    assert_eq!(doc["evidence"].as_array().expect("array").len(), 2);
    assert_eq!(doc["evidence"][0]["n"], "W");
    assert_eq!(doc["evidence"][1]["n"], "2*W");
}

fn write_config(contents: &str) -> tempfile::NamedTempFile {
    let mut file = tempfile::NamedTempFile::new().expect("temp config");
    file.write_all(contents.as_bytes()).expect("write config");
    file
}

#[test]
fn config_file_sets_defaults() {
    let cfg = write_config("# comment line\n\nvalidity = 4\nformat = json\n");
    let out = run(&[
        "sum",
        "x^2",
        "--a",
        "0",
        "--b",
        "1",
        "--n",
        "W",
        "--config",
        cfg.path().to_str().expect("utf8 path"),
    ]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("config format=json");
    assert_eq!(doc["validity"], "4");
}

#[test]
fn env_config_applies_when_flag_absent() {
    let cfg = write_config("validity = 5\n");
    let path = cfg.path().to_str().expect("utf8 path");
    let out = run_env(
        &["sum", "x^2", "--a", "0", "--b", "1", "--n", "W"],
        &[("OMEGA_CONFIG", path)],
    );
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("(mod w^5)"));
}

#[test]
fn config_flag_overrides_env_config() {
    let env_cfg = write_config("validity = 4\n");
    let flag_cfg = write_config("validity = 6\n");
    let out = run_env(
        &[
            "sum",
            "x^2",
            "--a",
            "0",
            "--b",
            "1",
            "--n",
            "W",
            "--config",
            flag_cfg.path().to_str().expect("utf8 path"),
        ],
        &[("OMEGA_CONFIG", env_cfg.path().to_str().expect("utf8 path"))],
    );
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("(mod w^6)"));
}

#[test]
fn flags_override_config_file() {
    let cfg = write_config("validity = 4\nformat = json\n");
    let out = run(&[
        "sum",
        "x^2",
        "--a",
        "0",
        "--b",
        "1",
        "--n",
        "W",
        "--config",
        cfg.path().to_str().expect("utf8 path"),
        "--depth",
        "12",
        "--format",
        "text",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.starts_with("1/3"), "format flag overrides file: {text}");
    assert!(text.contains("(mod w^12)"));
}

#[test]
fn config_breakpoints_enable_piecewise_sums() {
    let cfg = write_config("breakpoints = 1\n");
    let out = run(&[
        "sum",
        "abs(x - 1)",
        "--a",
        "0",
        "--b",
        "2",
        "--n",
        "W",
        "--config",
        cfg.path().to_str().expect("utf8 path"),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("method: split-piecewise"));
}

#[test]
fn malformed_config_exits_one() {
    let unknown = write_config("granularity = 9\n");
    let out = run(&[
        "sum",
        "x^2",
        "--a",
        "0",
        "--b",
        "1",
        "--n",
        "W",
        "--config",
        unknown.path().to_str().expect("utf8 path"),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("granularity"));

    let no_eq = write_config("validity 4\n");
    let out = run(&[
        "sum",
        "x^2",
        "--a",
        "0",
        "--b",
        "1",
        "--n",
        "W",
        "--config",
        no_eq.path().to_str().expect("utf8 path"),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains(":1"), "message names the line: {}", stderr(&out));

    let missing = run_env(
        &["sum", "x^2", "--a", "0", "--b", "1", "--n", "W"],
        &[("OMEGA_CONFIG", "/nonexistent/omega.conf")],
    );
    assert_eq!(code(&missing), 1);
}

#[test]
fn oracle_reports_mode_and_value() {
    let exact = run(&["oracle", "x^2", "--a", "0", "--b", "1", "--N", "4", "--exact"]);
    assert_eq!(code(&exact), 0);
    let text = stdout(&exact);
    assert!(text.starts_with("15/32"));
    assert!(text.contains("mode: exact"));

    let float = run(&["oracle", "x^2", "--a", "0", "--b", "1", "--N", "4"]);
    assert_eq!(code(&float), 0);
    assert!(stdout(&float).contains("mode: float"));
}

#[test]
fn fixed_point_flags_reach_the_oracle() {
    // The pole at 1/2 falls on a sample point of the N = 2 right sum.
    let unfixed = run(&["oracle", "1/(x - 1/2)", "--a", "0", "--b", "1", "--N", "2", "--exact"]);
    assert_eq!(code(&unfixed), 3);

    let fixed = run(&[
        "oracle",
        "1/(x - 1/2)",
        "--a",
        "0",
        "--b",
        "1",
        "--N",
        "2",
        "--exact",
        "--fix-at",
        "1/2",
        "--fix-value",
        "0",
    ]);
    assert_eq!(code(&fixed), 0);
    assert!(stdout(&fixed).starts_with("1\n"));
}
