//! Experiment configuration: TOML file, `--key=value` overrides, defaults
//! and validation that reports every violation at once.

use ks_control::grid::{Grid, MIN_INTERVALS, MIN_STEPS};
use ks_control::ks_model::KsParams;
use ks_control::weights::{time_scale, ControlRegions, Subdomain, WeightParams};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Syntax(String),
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Syntax(msg) => write!(f, "malformed config: {msg}"),
            ConfigError::Invalid(v) => write!(f, "{} violation(s): {}", v.len(), v.join("; ")),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Scalar applied to every axis, or one value per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axes<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Copy> Axes<T> {
    pub fn resolve(&self, dim: usize) -> Option<Vec<T>> {
        match self {
            Axes::One(x) => Some(vec![*x; dim]),
            Axes::Many(v) if v.len() == dim => Some(v.clone()),
            Axes::Many(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Axes<f64>,
    pub hi: Axes<f64>,
}

impl BoxConfig {
    fn interval(lo: f64, hi: f64) -> Self {
        Self {
            lo: Axes::One(lo),
            hi: Axes::One(hi),
        }
    }

    fn resolve(&self, dim: usize) -> Option<Subdomain> {
        let (lo, hi) = (self.lo.resolve(dim)?, self.hi.resolve(dim)?);
        Some(if dim == 1 {
            Subdomain::interval(lo[0], hi[0])
        } else {
            Subdomain::rect([lo[0], lo[1]], [hi[0], hi[1]])
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub length: Axes<f64>,
    pub n: Axes<usize>,
    pub t_final: f64,
    pub m: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            length: Axes::One(1.0),
            n: Axes::One(50),
            t_final: 2.0,
            m: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub a: f64,
    pub b: f64,
    pub m1: f64,
    /// Defaults to `a M1 / b`.
    pub m2: Option<f64>,
    /// Relaxation parameter of single-run commands.
    pub eps: f64,
    pub eps_list: Vec<f64>,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            m1: 1.0,
            m2: None,
            eps: 0.1,
            eps_list: vec![1.0, 0.5, 0.1, 0.01, 0.001],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    /// `s = sigma0 (T^4 + T^8)` unless `s` is given.
    pub sigma0: f64,
    pub s: Option<f64>,
    pub lambda: f64,
    pub eta_amplitude: f64,
    pub omega0: BoxConfig,
    pub omega_prime: BoxConfig,
    pub omega: BoxConfig,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            s: None,
            lambda: 1.5,
            eta_amplitude: 0.01,
            omega0: BoxConfig::interval(0.3, 0.4),
            omega_prime: BoxConfig::interval(0.25, 0.45),
            omega: BoxConfig::interval(0.2, 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Picard tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub tau: f64,
    /// Extra penalties solved by `control-linear` for the monotonicity check.
    pub tau_scan: Vec<f64>,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub blowup_cap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20,
            damping: 1.0,
            tau: 1e-8,
            tau_scan: vec![1e-4, 1e-6, 1e-8],
            cg_tol: 1e-10,
            cg_max_iter: 5000,
            blowup_cap: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `u0 = M1 + delta cos(k pi x / L)`, `v0 = M2` for the nonlinear commands.
    pub delta: f64,
    /// `z0 = z0_amplitude cos(k pi x / L)`, `w0 = 0` for `control-linear`.
    pub z0_amplitude: f64,
    /// Cosine mode numbers per axis.
    pub mode: Axes<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            z0_amplitude: 0.01,
            mode: Axes::Many(vec![1, 0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanConfig {
    pub samples: usize,
    pub seed: u64,
    /// Multiples of the base `s`; all must be at least one.
    pub s_factors: Vec<f64>,
    pub eps_list: Vec<f64>,
}

impl Default for CarlemanConfig {
    fn default() -> Self {
        Self {
            samples: 20,
            seed: 7,
            s_factors: vec![1.0, 10f64.sqrt(), 10.0],
            eps_list: vec![1.0, 0.1, 0.01],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub outdir: PathBuf,
    pub format: Format,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            outdir: PathBuf::from("out"),
            format: Format::Both,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub weights: WeightsConfig,
    pub solver: SolverConfig,
    pub data: DataConfig,
    pub carleman: CarlemanConfig,
    pub io: IoConfig,
}

const SECTIONS: [&str; 7] = ["grid", "physics", "weights", "solver", "data", "carleman", "io"];

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Apply `key=value` overrides. A key is `section.name` or a bare name that
/// occurs in exactly one section of the defaults.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[(String, String)]) -> Result<(), ConfigError> {
    let defaults = toml::Table::try_from(ExperimentConfig::default()).expect("defaults serialize");
    let mut errors = Vec::new();
    for (key, raw) in overrides {
        let path: Vec<&str> = key.split('.').collect();
        let (section, name) = match path.as_slice() {
            [s, n] => (s.to_string(), n.to_string()),
            [n] => {
                let hits: Vec<&str> = SECTIONS
                    .iter()
                    .copied()
                    .filter(|s| {
                        defaults.get(*s).and_then(|t| t.as_table()).is_some_and(|t| t.contains_key(*n))
                            || (*s == "physics" && *n == "m2")
                            || (*s == "weights" && *n == "s")
                    })
                    .collect();
                match hits.as_slice() {
                    [s] => (s.to_string(), n.to_string()),
                    [] => {
                        errors.push(format!("override --{key}: unknown key"));
                        continue;
                    }
                    _ => {
                        errors.push(format!("override --{key}: ambiguous, use one of {}", hits.iter().map(|s| format!("{s}.{n}")).collect::<Vec<_>>().join(", ")));
                        continue;
                    }
                }
            }
            _ => {
                errors.push(format!("override --{key}: expected section.key"));
                continue;
            }
        };
        let entry = table
            .entry(section.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry.as_table_mut() {
            Some(t) => {
                t.insert(name, parse_value(raw));
            }
            None => errors.push(format!("override --{key}: [{section}] is not a table")),
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(errors))
    }
}

/// Read, override, deserialize and validate.
pub fn parse_config(path: &Path, overrides: &[(String, String)]) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
    apply_overrides(&mut table, overrides)?;
    let unknown: Vec<String> = table
        .keys()
        .filter(|k| !SECTIONS.contains(&k.as_str()))
        .map(|k| format!("unknown section [{k}]"))
        .collect();
    if !unknown.is_empty() {
        return Err(ConfigError::Invalid(unknown));
    }
    // Deserialize section by section so that errors in several sections
    // are all reported.
    let mut errors = Vec::new();
    let mut cfg = ExperimentConfig::default();
    macro_rules! section {
        ($name:ident) => {
            if let Some(v) = table.get(stringify!($name)) {
                match v.clone().try_into() {
                    Ok(x) => cfg.$name = x,
                    Err(e) => errors.push(format!("[{}] {}", stringify!($name), toml::de::Error::message(&e).trim())),
                }
            }
        };
    }
    section!(grid);
    section!(physics);
    section!(weights);
    section!(solver);
    section!(data);
    section!(carleman);
    section!(io);
    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors));
    }
    let violations = cfg.violations();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

fn in_unit(eps: f64) -> bool {
    eps > 0.0 && eps <= 1.0
}

impl ExperimentConfig {
    pub fn m2(&self) -> f64 {
        self.physics.m2.unwrap_or(self.physics.a * self.physics.m1 / self.physics.b)
    }

    /// Every precondition violated by this configuration.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let g = &self.grid;
        let dim_ok = g.dim == 1 || g.dim == 2;
        if !dim_ok {
            v.push(format!("grid.dim must be 1 or 2, got {}", g.dim));
        }
        let dim = if dim_ok { g.dim } else { 1 };
        let lengths = g.length.resolve(dim);
        match &lengths {
            None => v.push(format!("grid.length needs {dim} entries")),
            Some(l) if l.iter().any(|x| !(*x > 0.0)) => v.push("grid.length must be positive".into()),
            _ => {}
        }
        match g.n.resolve(dim) {
            None => v.push(format!("grid.n needs {dim} entries")),
            Some(n) if n.iter().any(|x| *x < MIN_INTERVALS) => {
                v.push(format!("grid.n must be at least {MIN_INTERVALS} per axis (grid resolution)"))
            }
            _ => {}
        }
        if !(g.t_final > 0.0) {
            v.push(format!("grid.t_final must be positive, got {}", g.t_final));
        }
        if g.m < MIN_STEPS {
            v.push(format!("grid.m must be at least {MIN_STEPS}, got {}", g.m));
        }

        let p = &self.physics;
        for (name, x) in [("a", p.a), ("b", p.b), ("m1", p.m1)] {
            if !(x > 0.0) {
                v.push(format!("physics.{name} must be positive, got {x}"));
            }
        }
        let m2 = self.m2();
        if (p.a * p.m1 - p.b * m2).abs() > 1e-12 * (p.a * p.m1).abs().max(1.0) {
            v.push(format!(
                "physics: steady-state condition a*M1 = b*M2 violated (a*M1 = {}, b*M2 = {}); the target (M1, M2) must be a constant steady state",
                p.a * p.m1,
                p.b * m2
            ));
        }
        if !in_unit(p.eps) {
            v.push(format!("physics.eps must lie in (0, 1], got {}", p.eps));
        }
        if p.eps_list.is_empty() || p.eps_list.iter().any(|e| !in_unit(*e)) {
            v.push("physics.eps_list must be non-empty with entries in (0, 1]".into());
        }

        let w = &self.weights;
        if w.s.is_none() && !(w.sigma0 > 0.0) {
            v.push(format!("weights.sigma0 must be positive, got {}", w.sigma0));
        }
        if let Some(s) = w.s {
            if !(s > 0.0) {
                v.push(format!("weights.s must be positive, got {s}"));
            }
        }
        if !(w.lambda >= 1.0) {
            v.push(format!("weights.lambda must be >= 1, got {}", w.lambda));
        }
        if !(w.eta_amplitude > 0.0) {
            v.push(format!("weights.eta_amplitude must be positive, got {}", w.eta_amplitude));
        }
        let boxes = [("omega0", &w.omega0), ("omega_prime", &w.omega_prime), ("omega", &w.omega)];
        let mut resolved = Vec::new();
        for (name, b) in boxes {
            match b.resolve(dim) {
                None => v.push(format!("weights.{name} needs {dim} lo/hi entries")),
                Some(sd) => {
                    let inside = lengths.as_ref().is_none_or(|l| {
                        (0..dim).all(|a| sd.lo[a] > 0.0 && sd.hi[a] < l[a])
                    });
                    if (0..dim).any(|a| !(sd.lo[a] < sd.hi[a])) {
                        v.push(format!("weights.{name} must have lo < hi"));
                    } else if !inside {
                        v.push(format!("weights.{name} must lie strictly inside the domain"));
                    }
                    resolved.push(sd);
                }
            }
        }
        if let [o0, op, o] = resolved.as_slice() {
            if !o0.compactly_inside(op, dim) {
                v.push("weights: nesting rule omega0 ⊂⊂ omega_prime ⊂⊂ omega violated (omega0 not compactly inside omega_prime)".into());
            }
            if !op.compactly_inside(o, dim) {
                v.push("weights: nesting rule omega0 ⊂⊂ omega_prime ⊂⊂ omega violated (omega_prime not compactly inside omega)".into());
            }
        }

        let s = &self.solver;
        for (name, x) in [("tol", s.tol), ("cg_tol", s.cg_tol), ("blowup_cap", s.blowup_cap)] {
            if !(x > 0.0) {
                v.push(format!("solver.{name} must be positive, got {x}"));
            }
        }
        if !(s.tau >= 0.0) || s.tau_scan.iter().any(|t| !(*t >= 0.0)) {
            v.push("solver.tau and solver.tau_scan must be >= 0".into());
        }
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            v.push(format!("solver.damping must lie in (0, 1], got {}", s.damping));
        }
        if s.max_iter == 0 || s.cg_max_iter == 0 {
            v.push("solver.max_iter and solver.cg_max_iter must be at least 1".into());
        }

        let d = &self.data;
        if !(d.delta >= 0.0) || !(d.z0_amplitude >= 0.0) {
            v.push("data.delta and data.z0_amplitude must be >= 0".into());
        }
        match &d.mode {
            Axes::One(_) => {}
            Axes::Many(m) if m.len() >= dim => {}
            Axes::Many(_) => v.push(format!("data.mode needs {dim} entries")),
        }
        if self.mode().iter().all(|k| *k == 0) {
            v.push("data.mode must not be the constant mode (the perturbation must have zero mass)".into());
        }

        let c = &self.carleman;
        if c.samples == 0 {
            v.push("carleman.samples must be at least 1".into());
        }
        if c.s_factors.is_empty() || c.s_factors.iter().any(|f| !(*f >= 1.0)) {
            v.push("carleman.s_factors must be non-empty and >= 1 (s at or above the calibrated threshold)".into());
        }
        if c.eps_list.is_empty() || c.eps_list.iter().any(|e| !in_unit(*e)) {
            v.push("carleman.eps_list must be non-empty with entries in (0, 1]".into());
        }
        v
    }

    pub fn mode(&self) -> [usize; 2] {
        match &self.data.mode {
            Axes::One(k) => {
                if self.grid.dim == 1 {
                    [*k, 0]
                } else {
                    [*k, *k]
                }
            }
            Axes::Many(m) => [m.first().copied().unwrap_or(0), if self.grid.dim == 2 { m.get(1).copied().unwrap_or(0) } else { 0 }],
        }
    }

    pub fn build_grid(&self) -> ks_control::Result<Grid> {
        let dim = self.grid.dim;
        let l = self.grid.length.resolve(dim).unwrap_or_default();
        let n = self.grid.n.resolve(dim).unwrap_or_default();
        ks_control::grid::build_grid(dim, &l, &n, self.grid.t_final, self.grid.m)
    }

    pub fn regions(&self) -> ControlRegions {
        let dim = self.grid.dim;
        let w = &self.weights;
        ControlRegions {
            omega0: w.omega0.resolve(dim).expect("validated"),
            omega_prime: w.omega_prime.resolve(dim).expect("validated"),
            omega: w.omega.resolve(dim).expect("validated"),
        }
    }

    pub fn base_s(&self) -> f64 {
        self.weights.s.unwrap_or(self.weights.sigma0 * time_scale(self.grid.t_final))
    }

    pub fn weight_params(&self) -> ks_control::Result<WeightParams> {
        WeightParams::new(self.base_s(), self.weights.lambda, self.grid.t_final)
    }

    pub fn params(&self, eps: f64) -> ks_control::Result<KsParams> {
        KsParams::new(self.physics.a, self.physics.b, eps, self.physics.m1, self.m2())
    }

    /// Canonical TOML of the fully resolved configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
