//! Layered configuration: built-in defaults, then the file named by
//! OMEGA_CONFIG, then an explicit --config file (which replaces the
//! environment default), then individual command-line flags.

use std::fs;
use std::path::Path;

use omega_core::expr::{eval_constant, parse};
use omega_core::omegasum::{nspec_parse, NSpec, SumOptions};
use omega_core::Real;

use crate::CliError;

pub const DEFAULT_VALIDITY: i64 = 8;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
pub const DEFAULT_FAMILY: &str = "W,W+1,2*W,3*W,W^2";
pub const MIN_VALIDITY: i64 = 2;
pub const MAX_VALIDITY: i64 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
}

#[derive(Clone, Debug)]
pub struct Config {
    pub validity: i64,
    pub tolerance: f64,
    pub quad_tol: f64,
    /// N-spec sources, parsed on demand so error positions stay readable.
    pub family: Vec<String>,
    pub format: Format,
    pub breakpoints: Vec<Real>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            validity: DEFAULT_VALIDITY,
            tolerance: DEFAULT_TOLERANCE,
            quad_tol: DEFAULT_QUAD_TOL,
            family: split_list(DEFAULT_FAMILY),
            format: Format::Text,
            breakpoints: Vec::new(),
        }
    }
}

pub fn split_list(text: &str) -> Vec<String> {
    text.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Parses a constant expression argument ("1/2", "pi", "0.25") into a Real.
pub fn parse_real_arg(name: &str, text: &str) -> Result<Real, CliError> {
    let ast = parse(text)
        .map_err(|e| CliError::Parse(format!("{}: {} (offset {})", name, e.message, e.offset)))?;
    eval_constant(&ast).map_err(|e| CliError::Parse(format!("{}: {}", name, e.message)))
}

fn parse_breakpoint_list(text: &str) -> Result<Vec<Real>, CliError> {
    split_list(text)
        .iter()
        .map(|s| parse_real_arg("breakpoints", s))
        .collect()
}

impl Config {
    pub fn set_format(&mut self, text: &str) -> Result<(), CliError> {
        self.format = match text.trim() {
            "text" => Format::Text,
            "json" => Format::Json,
            other => {
                return Err(CliError::Usage(format!(
                    "format must be text or json, got {:?}",
                    other
                )))
            }
        };
        Ok(())
    }

    fn apply_key(&mut self, key: &str, value: &str, at: &str) -> Result<(), CliError> {
        let bad_number = || CliError::Usage(format!("{}: bad numeric value {:?}", at, value));
        match key {
            "validity" | "depth" => {
                self.validity = value.trim().parse().map_err(|_| bad_number())?;
            }
            "tolerance" | "tol" => {
                self.tolerance = value.trim().parse().map_err(|_| bad_number())?;
            }
            "quad_tol" => {
                self.quad_tol = value.trim().parse().map_err(|_| bad_number())?;
            }
            "family" => self.family = split_list(value),
            "format" => self.set_format(value)?,
            "breakpoints" => self.breakpoints = parse_breakpoint_list(value)?,
            other => {
                return Err(CliError::Usage(format!(
                    "{}: unknown config key {:?}",
                    at, other
                )))
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let body = fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {}", path.display(), e))
        })?;
        for (idx, raw) in body.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = format!("{}:{}", path.display(), idx + 1);
            match line.split_once('=') {
                Some((k, v)) => self.apply_key(k.trim(), v.trim(), &at)?,
                None => {
                    return Err(CliError::Usage(format!("{}: expected key=value", at)));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(MIN_VALIDITY..=MAX_VALIDITY).contains(&self.validity) {
            return Err(CliError::Usage(format!(
                "validity depth must be in [{}, {}], got {}",
                MIN_VALIDITY, MAX_VALIDITY, self.validity
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(CliError::Usage(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.quad_tol > 0.0) {
            return Err(CliError::Usage(format!(
                "quadrature tolerance must be positive, got {}",
                self.quad_tol
            )));
        }
        if self.family.is_empty() {
            return Err(CliError::Usage(String::from("family must not be empty")));
        }
        self.family_nspecs()?;
        Ok(())
    }

    pub fn family_nspecs(&self) -> Result<Vec<NSpec>, CliError> {
        self.family
            .iter()
            .map(|s| {
                nspec_parse(s).map_err(|e| CliError::Parse(format!("family {:?}: {}", s, e)))
            })
            .collect()
    }

    pub fn sum_options(&self) -> SumOptions {
        SumOptions {
            validity: self.validity,
            quad_tol: self.quad_tol,
            abs_breakpoints: self.breakpoints.clone(),
            fix: None,
        }
    }
}

pub fn resolve(globals: &crate::GlobalFlags) -> Result<Config, CliError> {
    let mut cfg = Config::default();
    if globals.config.is_none() {
        if let Ok(path) = std::env::var("OMEGA_CONFIG") {
            if !path.is_empty() {
                cfg.apply_file(Path::new(&path))?;
            }
        }
    }
    if let Some(path) = &globals.config {
        cfg.apply_file(path)?;
    }
    if let Some(fmt) = &globals.format {
        cfg.set_format(fmt)?;
    }
    if let Some(t) = globals.tol {
        cfg.tolerance = t;
    }
    if let Some(q) = globals.quad_tol {
        cfg.quad_tol = q;
    }
    if let Some(v) = globals.depth {
        cfg.validity = v;
    }
    if let Some(fam) = &globals.family {
        cfg.family = split_list(fam);
    }
    if let Some(bps) = &globals.breakpoints {
        cfg.breakpoints = parse_breakpoint_list(bps)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
