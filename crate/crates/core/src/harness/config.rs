//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom::Point;
use crate::nonlinearity::{
    make_cubic, BistableNonlinearity, Forcing, NonlinearityError, SystemCoupling,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    Duplicate { line: usize, key: String },
    #[error("key {key:?}: cannot parse {value:?} ({why})")]
    BadValue {
        key: &'static str,
        value: String,
        why: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
}

/// Reaction term selection.
#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearitySpec {
    Cubic,
    /// `-lambda (u - a-)(u - a)(u - a+)`.
    Zeros {
        lambda: f64,
        zeros: [f64; 3],
    },
}

/// Perturbation `g` of the Allen-Cahn problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForcingSpec {
    Zero,
    Constant(f64),
    LinearX(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub eps_list: Vec<f64>,
    pub mu: f64,
    pub t_end: f64,
    /// `[x_lo, y_lo, x_hi, y_hi]`.
    pub domain: [f64; 4],
    pub r0: f64,
    pub curve_file: Option<PathBuf>,
    pub nonlinearity: NonlinearitySpec,
    pub forcing: ForcingSpec,
    /// `h = eps / grid_ratio`.
    pub grid_ratio: f64,
    pub steepness: f64,
    pub dt_safety: f64,
    pub observers: usize,
    pub graph_tube: f64,
    pub transversality_tube: f64,
    pub eta: f64,
    pub c_tube: f64,
    pub generation_checks: usize,
    pub bisection_steps: usize,
    pub profile_z_max: f64,
    pub profile_samples: usize,
    pub limit_dt: f64,
    pub limit_density: f64,
    /// Nodes per finest-grid cell for the coupled limit curve.
    pub rd_limit_density: f64,
    pub remesh_every: usize,
    /// Space dimension of the radial limit ODE (`limit` only).
    pub dimension: u32,
    pub fhn_alpha: f64,
    pub fhn_beta: f64,
    pub fhn_diffusion: f64,
    pub fhn_f1: Vec<f64>,
    pub v0: f64,
    pub write_fields: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            eps_list: vec![0.08, 0.04, 0.02],
            mu: 2.0,
            t_end: 0.04,
            domain: [-1.0, -1.0, 1.0, 1.0],
            r0: 0.35,
            curve_file: None,
            nonlinearity: NonlinearitySpec::Cubic,
            forcing: ForcingSpec::Zero,
            grid_ratio: 8.0,
            steepness: 5.0,
            dt_safety: 0.9,
            observers: 20,
            graph_tube: 4.0,
            transversality_tube: 2.0,
            eta: 0.1,
            c_tube: 6.0,
            generation_checks: 20,
            bisection_steps: 12,
            profile_z_max: 12.0,
            profile_samples: 4000,
            limit_dt: 1e-5,
            limit_density: 4.0,
            rd_limit_density: 1.0,
            remesh_every: 5,
            dimension: 2,
            fhn_alpha: 1.0,
            fhn_beta: 1.0,
            fhn_diffusion: 1.0,
            fhn_f1: Vec::new(),
            v0: 0.1,
            write_fields: true,
        }
    }
}

const KEYS: &[&str] = &[
    "eps_list",
    "mu",
    "t_end",
    "domain",
    "r0",
    "curve_file",
    "nonlinearity",
    "forcing",
    "grid_ratio",
    "steepness",
    "dt_safety",
    "observers",
    "graph_tube",
    "transversality_tube",
    "eta",
    "c_tube",
    "generation_checks",
    "bisection_steps",
    "profile_z_max",
    "profile_samples",
    "limit_dt",
    "limit_density",
    "rd_limit_density",
    "remesh_every",
    "dimension",
    "fhn_alpha",
    "fhn_beta",
    "fhn_diffusion",
    "fhn_f1",
    "v0",
    "write_fields",
];

fn bad(key: &'static str, value: &str, why: impl ToString) -> ConfigError {
    ConfigError::BadValue {
        key,
        value: value.to_string(),
        why: why.to_string(),
    }
}

fn real(key: &'static str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|e| bad(key, v, e))?;
    if !x.is_finite() {
        return Err(bad(key, v, "not finite"));
    }
    Ok(x)
}

fn count(key: &'static str, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|e| bad(key, v, e))
}

fn list(key: &'static str, v: &str) -> Result<Vec<f64>, ConfigError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| real(key, s.trim())).collect()
}

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| fmt_real(*x))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Shortest representation that parses back to the same value.
fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    text: raw.to_string(),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            let Some(&key) = KEYS.iter().find(|&&known| known == k) else {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    key: k.to_string(),
                });
            };
            if seen.contains(&key) {
                return Err(ConfigError::Duplicate {
                    line: line_no,
                    key: k.to_string(),
                });
            }
            seen.push(key);
            cfg.set(key, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &'static str, v: &str) -> Result<(), ConfigError> {
        match key {
            "eps_list" => self.eps_list = list(key, v)?,
            "mu" => self.mu = real(key, v)?,
            "t_end" => self.t_end = real(key, v)?,
            "domain" => {
                let d = list(key, v)?;
                self.domain = d
                    .try_into()
                    .map_err(|_| bad(key, v, "need x_lo, y_lo, x_hi, y_hi"))?;
            }
            "r0" => self.r0 = real(key, v)?,
            "curve_file" => {
                self.curve_file = if v.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(v))
                }
            }
            "nonlinearity" => self.nonlinearity = parse_nonlinearity(v)?,
            "forcing" => self.forcing = parse_forcing(v)?,
            "grid_ratio" => self.grid_ratio = real(key, v)?,
            "steepness" => self.steepness = real(key, v)?,
            "dt_safety" => self.dt_safety = real(key, v)?,
            "observers" => self.observers = count(key, v)?,
            "graph_tube" => self.graph_tube = real(key, v)?,
            "transversality_tube" => self.transversality_tube = real(key, v)?,
            "eta" => self.eta = real(key, v)?,
            "c_tube" => self.c_tube = real(key, v)?,
            "generation_checks" => self.generation_checks = count(key, v)?,
            "bisection_steps" => self.bisection_steps = count(key, v)?,
            "profile_z_max" => self.profile_z_max = real(key, v)?,
            "profile_samples" => self.profile_samples = count(key, v)?,
            "limit_dt" => self.limit_dt = real(key, v)?,
            "limit_density" => self.limit_density = real(key, v)?,
            "rd_limit_density" => self.rd_limit_density = real(key, v)?,
            "remesh_every" => self.remesh_every = count(key, v)?,
            "dimension" => self.dimension = v.parse().map_err(|e| bad(key, v, e))?,
            "fhn_alpha" => self.fhn_alpha = real(key, v)?,
            "fhn_beta" => self.fhn_beta = real(key, v)?,
            "fhn_diffusion" => self.fhn_diffusion = real(key, v)?,
            "fhn_f1" => self.fhn_f1 = list(key, v)?,
            "v0" => self.v0 = real(key, v)?,
            "write_fields" => {
                self.write_fields = match v {
                    "true" => true,
                    "false" => false,
                    _ => return Err(bad(key, v, "expected true or false")),
                }
            }
            _ => unreachable!("key list and setter out of sync: {key}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |s: String| Err(ConfigError::Invalid(s));
        if self.eps_list.is_empty() {
            return invalid("eps_list is empty".into());
        }
        if self.eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return invalid(format!(
                "eps values must lie in (0, 1): {:?}",
                self.eps_list
            ));
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return invalid(format!(
                "eps_list must be strictly decreasing: {:?}",
                self.eps_list
            ));
        }
        if !(self.mu > 1.0) {
            return invalid(format!("mu must exceed 1, got {}", self.mu));
        }
        if !(self.t_end > 0.0) {
            return invalid(format!("t_end must be positive, got {}", self.t_end));
        }
        let [x0, y0, x1, y1] = self.domain;
        if !(x1 > x0 && y1 > y0) {
            return invalid(format!("empty domain {:?}", self.domain));
        }
        if self.curve_file.is_none() && !(self.r0 > 0.0) {
            return invalid(format!("r0 must be positive, got {}", self.r0));
        }
        for (name, v) in [
            ("grid_ratio", self.grid_ratio),
            ("steepness", self.steepness),
            ("graph_tube", self.graph_tube),
            ("transversality_tube", self.transversality_tube),
            ("c_tube", self.c_tube),
            ("limit_dt", self.limit_dt),
            ("limit_density", self.limit_density),
            ("rd_limit_density", self.rd_limit_density),
            ("fhn_diffusion", self.fhn_diffusion),
        ] {
            if !(v > 0.0) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return invalid(format!(
                "dt_safety must lie in (0, 1], got {}",
                self.dt_safety
            ));
        }
        if self.dimension < 2 {
            return invalid(format!(
                "dimension must be at least 2, got {}",
                self.dimension
            ));
        }
        if self.observers < 2 || self.generation_checks < 1 || self.remesh_every < 1 {
            return invalid(
                "observers >= 2, generation_checks >= 1 and remesh_every >= 1 required".into(),
            );
        }
        let nl = self.nonlinearity()?;
        let z = nl.zeros();
        if !(self.eta > 0.0 && self.eta < (z.mid - z.minus).min(z.plus - z.mid)) {
            return invalid(format!(
                "eta must lie in (0, {}), got {}",
                (z.mid - z.minus).min(z.plus - z.mid),
                self.eta
            ));
        }
        Ok(())
    }

    pub fn nonlinearity(&self) -> Result<BistableNonlinearity, ConfigError> {
        Ok(match self.nonlinearity {
            NonlinearitySpec::Cubic => make_cubic(),
            NonlinearitySpec::Zeros {
                lambda,
                zeros: [a, b, c],
            } => BistableNonlinearity::from_zeros(lambda, (a, b, c))?,
        })
    }

    pub fn forcing(&self) -> Forcing {
        match self.forcing {
            ForcingSpec::Zero => Forcing::Zero,
            ForcingSpec::Constant(delta) => Forcing::Constant { delta },
            ForcingSpec::LinearX(delta) => Forcing::LinearX { delta },
        }
    }

    pub fn coupling(&self) -> SystemCoupling {
        SystemCoupling::fhn(
            self.fhn_alpha,
            self.fhn_beta,
            self.fhn_diffusion,
            self.fhn_f1.clone(),
        )
    }

    pub fn domain_corners(&self) -> (Point, Point) {
        let [x0, y0, x1, y1] = self.domain;
        (Point::new(x0, y0), Point::new(x1, y1))
    }

    /// Every key in fixed order, values in round-trip format.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("eps_list", join(&self.eps_list));
        put("mu", fmt_real(self.mu));
        put("t_end", fmt_real(self.t_end));
        put("domain", join(&self.domain));
        put("r0", fmt_real(self.r0));
        put(
            "curve_file",
            self.curve_file
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        put(
            "nonlinearity",
            match &self.nonlinearity {
                NonlinearitySpec::Cubic => "cubic".into(),
                NonlinearitySpec::Zeros { lambda, zeros } => {
                    format!("zeros:{}; {}", fmt_real(*lambda), join(zeros))
                }
            },
        );
        put(
            "forcing",
            match self.forcing {
                ForcingSpec::Zero => "zero".into(),
                ForcingSpec::Constant(d) => format!("constant:{}", fmt_real(d)),
                ForcingSpec::LinearX(d) => format!("linear_x:{}", fmt_real(d)),
            },
        );
        put("grid_ratio", fmt_real(self.grid_ratio));
        put("steepness", fmt_real(self.steepness));
        put("dt_safety", fmt_real(self.dt_safety));
        put("observers", self.observers.to_string());
        put("graph_tube", fmt_real(self.graph_tube));
        put("transversality_tube", fmt_real(self.transversality_tube));
        put("eta", fmt_real(self.eta));
        put("c_tube", fmt_real(self.c_tube));
        put("generation_checks", self.generation_checks.to_string());
        put("bisection_steps", self.bisection_steps.to_string());
        put("profile_z_max", fmt_real(self.profile_z_max));
        put("profile_samples", self.profile_samples.to_string());
        put("limit_dt", fmt_real(self.limit_dt));
        put("limit_density", fmt_real(self.limit_density));
        put("rd_limit_density", fmt_real(self.rd_limit_density));
        put("remesh_every", self.remesh_every.to_string());
        put("dimension", self.dimension.to_string());
        put("fhn_alpha", fmt_real(self.fhn_alpha));
        put("fhn_beta", fmt_real(self.fhn_beta));
        put("fhn_diffusion", fmt_real(self.fhn_diffusion));
        put("fhn_f1", join(&self.fhn_f1));
        put("v0", fmt_real(self.v0));
        put("write_fields", self.write_fields.to_string());
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}

fn parse_nonlinearity(v: &str) -> Result<NonlinearitySpec, ConfigError> {
    const KEY: &str = "nonlinearity";
    if v == "cubic" {
        return Ok(NonlinearitySpec::Cubic);
    }
    // zeros:<lambda>; <a->, <a>, <a+>
    let Some(rest) = v.strip_prefix("zeros:") else {
        return Err(bad(
            KEY,
            v,
            "expected `cubic` or `zeros:<lambda>; <a->, <a>, <a+>`",
        ));
    };
    let Some((lambda, zs)) = rest.split_once(';') else {
        return Err(bad(KEY, v, "missing `;` after lambda"));
    };
    let lambda = real(KEY, lambda.trim())?;
    let zs = list(KEY, zs)?;
    let zeros: [f64; 3] = zs.try_into().map_err(|_| bad(KEY, v, "need three zeros"))?;
    Ok(NonlinearitySpec::Zeros { lambda, zeros })
}

fn parse_forcing(v: &str) -> Result<ForcingSpec, ConfigError> {
    const KEY: &str = "forcing";
    if v == "zero" {
        return Ok(ForcingSpec::Zero);
    }
    if let Some(d) = v.strip_prefix("constant:") {
        return Ok(ForcingSpec::Constant(real(KEY, d.trim())?));
    }
    if let Some(d) = v.strip_prefix("linear_x:") {
        return Ok(ForcingSpec::LinearX(real(KEY, d.trim())?));
    }
    Err(bad(
        KEY,
        v,
        "expected zero, constant:<delta> or linear_x:<delta>",
    ))
}
