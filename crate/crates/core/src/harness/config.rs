//! Experiment configuration from flat `key = value` files.
//!
//! ```text
//! # Milstein on the built-in circle problem
//! problem = circle2d
//! scheme = milstein
//! n_list = [32, 64, 128, 256, 512, 1024]
//! fine_n = 16384
//! reps = 20000
//! p_list = [1, 2, 4, 8]
//! seed = 42
//! ```
//!
//! `problem = inline` builds a piecewise-constant drift from `surface`,
//! `center`/`radius` or `normal`/`offset`, `drift_minus`, `drift_plus`,
//! `diffusion = identity | linear`, `diffusion_scale` and `x0`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::coefficients::{registry, MatrixField, SdeProblem};
use crate::error::{Error, Result};
use crate::geometry::HypersurfaceDescriptor;
use crate::schemes::Scheme;
use crate::transform::TransformSettings;

const KNOWN_KEYS: &[&str] = &[
    "problem",
    "scheme",
    "n_list",
    "fine_n",
    "reps",
    "p_list",
    "seed",
    "threads",
    "output",
    "epsilon",
    "newton_tol",
    "newton_max_iter",
    "sup_error",
    "occupation_eps",
    "surface",
    "center",
    "radius",
    "normal",
    "offset",
    "drift_minus",
    "drift_plus",
    "diffusion",
    "diffusion_scale",
    "x0",
];

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Name written to the CSV `problem` column.
    pub problem_name: String,
    pub problem: SdeProblem,
    pub scheme: Scheme,
    pub n_list: Vec<usize>,
    pub fine_n: usize,
    pub reps: usize,
    pub p_list: Vec<f64>,
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
    pub output: Option<PathBuf>,
    pub transform: TransformSettings,
    /// Measure the discrete sup over the fine grid instead of the error at
    /// time 1.
    pub sup_error: bool,
    /// Neighbourhood widths for occupation diagnostics; empty disables
    /// diagnostics.
    pub occupation_eps: Vec<f64>,
}

impl ExperimentConfig {
    /// Defaults: `n = 2^5..2^10`, `fine_n = 2^14`, 1000 repetitions, `p = 2`,
    /// seed 0, one thread.
    pub fn new(problem: SdeProblem, scheme: Scheme) -> Self {
        Self {
            problem_name: problem.name.clone(),
            problem,
            scheme,
            n_list: (5..=10).map(|k| 1 << k).collect(),
            fine_n: 1 << 14,
            reps: 1000,
            p_list: vec![2.0],
            seed: 0,
            threads: 1,
            output: None,
            transform: TransformSettings::default(),
            sup_error: false,
            occupation_eps: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::Config("n_list is empty".into()));
        }
        for &n in &self.n_list {
            if n == 0 || !self.fine_n.is_multiple_of(n) {
                return Err(Error::NotDivisible { fine_n: self.fine_n, n });
            }
        }
        if self.reps < 2 {
            return Err(Error::Config(format!("reps must be at least 2, got {}", self.reps)));
        }
        if self.p_list.is_empty() {
            return Err(Error::Config("p_list is empty".into()));
        }
        if let Some(p) = self.p_list.iter().find(|p| !(**p >= 1.0 && p.is_finite())) {
            return Err(Error::Config(format!("p must be at least 1, got {p}")));
        }
        if let Some(e) = self.occupation_eps.iter().find(|e| e.is_nan() || **e <= 0.0) {
            return Err(Error::Config(format!("occupation_eps must be positive, got {e}")));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_entries(text)?;
        let get = |k: &str| entries.get(k).map(String::as_str);

        let problem_name = get("problem").ok_or_else(|| Error::Config("missing key 'problem'".into()))?;
        let mut problem =
            if problem_name == "inline" { inline_problem(&entries)? } else { registry::by_name(problem_name)? };
        if problem_name != "inline" {
            if let Some(x0) = get("x0") {
                problem = problem.with_x0(DVector::from_vec(floats("x0", x0)?))?;
            }
        }
        let scheme = get("scheme").map(str::parse).transpose()?.unwrap_or(Scheme::Milstein);
        let mut cfg = Self::new(problem, scheme);
        cfg.problem_name = problem_name.to_string();

        if let Some(v) = get("n_list") {
            cfg.n_list = floats("n_list", v)?.into_iter().map(|x| to_count("n_list", x)).collect::<Result<_>>()?;
        }
        if let Some(v) = get("fine_n") {
            cfg.fine_n = count("fine_n", v)?;
        }
        if let Some(v) = get("reps") {
            cfg.reps = count("reps", v)?;
        }
        if let Some(v) = get("p_list") {
            cfg.p_list = floats("p_list", v)?;
        }
        if let Some(v) = get("seed") {
            cfg.seed = v.parse().map_err(|_| bad("seed", v))?;
        }
        if let Some(v) = get("threads") {
            cfg.threads = count("threads", v)?;
        }
        if let Some(v) = get("output") {
            cfg.output = Some(PathBuf::from(v));
        }
        if let Some(v) = get("epsilon") {
            cfg.transform.epsilon = Some(float("epsilon", v)?);
        }
        if let Some(v) = get("newton_tol") {
            cfg.transform.newton_tol = float("newton_tol", v)?;
        }
        if let Some(v) = get("newton_max_iter") {
            cfg.transform.newton_max_iter = count("newton_max_iter", v)?;
        }
        if let Some(v) = get("sup_error") {
            cfg.sup_error = v.parse().map_err(|_| bad("sup_error", v))?;
        }
        if let Some(v) = get("occupation_eps") {
            cfg.occupation_eps = floats("occupation_eps", v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value for '{key}': {value}"))
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut entries = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key '{key}'", lineno + 1)));
        }
        let value = value.trim().trim_matches('"').trim().to_string();
        if entries.insert(key.to_string(), value).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
        }
    }
    Ok(entries)
}

fn float(key: &str, value: &str) -> Result<f64> {
    value.trim().parse().map_err(|_| bad(key, value))
}

fn floats(key: &str, value: &str) -> Result<Vec<f64>> {
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .ok_or_else(|| Error::Config(format!("'{key}' must be a bracketed list, got {value}")))?;
    inner.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| float(key, s)).collect()
}

fn to_count(key: &str, x: f64) -> Result<usize> {
    if x >= 0.0 && x.fract() == 0.0 && x < 9.0e15 {
        Ok(x as usize)
    } else {
        Err(bad(key, &x.to_string()))
    }
}

/// Non-negative integer, accepting forms like `1e4`.
fn count(key: &str, value: &str) -> Result<usize> {
    value.parse().or_else(|_| to_count(key, float(key, value)?))
}

fn inline_problem(entries: &BTreeMap<String, String>) -> Result<SdeProblem> {
    let require = |k: &str| {
        entries.get(k).map(String::as_str).ok_or_else(|| Error::Config(format!("inline problem needs '{k}'")))
    };
    let x0 = DVector::from_vec(floats("x0", require("x0")?)?);
    let d = x0.len();
    let theta = match require("surface")? {
        "sphere" => HypersurfaceDescriptor::sphere(
            DVector::from_vec(floats("center", require("center")?)?),
            float("radius", require("radius")?)?,
        )?,
        "hyperplane" => HypersurfaceDescriptor::hyperplane(
            DVector::from_vec(floats("normal", require("normal")?)?),
            entries.get("offset").map(|v| float("offset", v)).transpose()?.unwrap_or(0.0),
        )?,
        "empty" => HypersurfaceDescriptor::empty(),
        other => return Err(bad("surface", other)),
    };
    let minus = DVector::from_vec(floats("drift_minus", require("drift_minus")?)?);
    let plus = DVector::from_vec(floats("drift_plus", require("drift_plus")?)?);
    let scale = entries.get("diffusion_scale").map(|v| float("diffusion_scale", v)).transpose()?.unwrap_or(1.0);
    let sigma = match entries.get("diffusion").map(String::as_str).unwrap_or("identity") {
        "identity" => MatrixField::constant(DMatrix::identity(d, d) * scale),
        // every column equals scale * x
        "linear" => MatrixField::affine_columns(vec![DVector::zeros(d); d], vec![DMatrix::identity(d, d) * scale; d]),
        other => return Err(bad("diffusion", other)),
    };
    registry::piecewise_constant("inline", x0, theta, minus, plus, sigma)
}
