//! Run configuration: TOML text with a fixed set of sections, validated into
//! a [`RunConfig`] with defaults filled in.

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

use deom::bath::{DecompositionMethod, LorentzBath};
use deom::model::{epsilon_from_scheme, DqdParameters, ImpurityModel};
use deom::observables::default_grid;
use deom::solvers::{LinearMethod, SolverConfig};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Level,
    SingleDot,
    Dqd,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum MethodName {
    Pade,
    Prony,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum SolverName {
    Gmres,
    Damped,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    description: Option<String>,
    #[serde(default)]
    expensive: bool,
    workers: Option<usize>,
    model: RawModel,
    #[serde(default)]
    bath: Vec<RawBath>,
    #[serde(default)]
    decomposition: RawDecomposition,
    #[serde(default)]
    hierarchy: RawHierarchy,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    observables: RawObservables,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    variant: Vec<RawVariant>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: ModelKind,
    eps: Option<f64>,
    eps1: Option<f64>,
    eps2: Option<f64>,
    u: Option<f64>,
    u_c: Option<f64>,
    t_c: Option<f64>,
    n: Option<i32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBath {
    label: String,
    #[serde(default = "one")]
    delta: f64,
    width: f64,
    beta: f64,
    #[serde(default)]
    mu: f64,
    orbitals: Option<Vec<usize>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawDecomposition {
    method: Option<MethodName>,
    k: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawHierarchy {
    level: Option<usize>,
    memory_gb: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    method: Option<SolverName>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    omega_damp: Option<f64>,
    restart: Option<usize>,
    broadening: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawObservables {
    spectral: Option<Vec<usize>>,
    noise: Option<bool>,
    noise_weights: Option<[f64; 2]>,
    currents: Option<bool>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    min: Option<f64>,
    max: Option<f64>,
    points: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Clone, Default)]
#[serde(deny_unknown_fields)]
struct RawVariant {
    name: String,
    u: Option<f64>,
    u_c: Option<f64>,
    t_c: Option<f64>,
    n: Option<i32>,
    eps: Option<f64>,
    beta: Option<f64>,
    bias: Option<f64>,
}

/// Model parameters before variant overrides; energies in units of Δ.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub eps: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub u: f64,
    pub u_c: f64,
    pub t_c: f64,
    pub n: i32,
}

impl ModelSpec {
    pub fn build(&self) -> ImpurityModel {
        match self.kind {
            ModelKind::Level => ImpurityModel::Level { eps: self.eps.unwrap_or(0.0) },
            ModelKind::SingleDot => ImpurityModel::SingleDot {
                eps: self.eps.unwrap_or(-self.u / 2.0),
                u: self.u,
            },
            ModelKind::Dqd => {
                let scheme = epsilon_from_scheme(self.u, self.u_c, self.n);
                ImpurityModel::DoubleDot(DqdParameters {
                    eps1: self.eps1.unwrap_or(scheme),
                    eps2: self.eps2.unwrap_or(scheme),
                    u: self.u,
                    u_c: self.u_c,
                    t_c: self.t_c,
                    n: self.n,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub u: Option<f64>,
    pub u_c: Option<f64>,
    pub t_c: Option<f64>,
    pub n: Option<i32>,
    pub eps: Option<f64>,
    pub beta: Option<f64>,
    /// Symmetric bias: `μ_L = bias`, `μ_R = −bias`.
    pub bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionSpec {
    pub method: DecompositionMethod,
    /// Fixed modes per channel; `None` grows K until `tol` is met.
    pub k: Option<usize>,
    pub tol: f64,
    /// Whether `tol` is enforced for a fixed K.
    pub enforce_tol: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// Symmetric grid over `±max(2U, 4)`, refined near zero.
    Default,
    Uniform { min: f64, max: f64, points: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSpec {
    pub spectral: Vec<usize>,
    pub noise: bool,
    pub noise_weights: [f64; 2],
    pub currents: bool,
}

/// One concrete calculation after applying a variant.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: ImpurityModel,
    pub u: f64,
    pub baths: Vec<LorentzBath>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub description: Option<String>,
    pub expensive: bool,
    pub workers: Option<usize>,
    pub model: ModelSpec,
    pub baths: Vec<RawBathSpec>,
    pub decomposition: DecompositionSpec,
    pub level: usize,
    pub memory_budget: u128,
    pub solver: SolverConfig,
    pub observables: ObservableSpec,
    pub grid: GridSpec,
    pub out_dir: PathBuf,
    pub variants: Vec<Variant>,
}

/// Reservoir as declared; orbitals default to the model's lead orbitals.
#[derive(Debug, Clone, PartialEq)]
pub struct RawBathSpec {
    pub label: String,
    pub delta: f64,
    pub width: f64,
    pub beta: f64,
    pub mu: f64,
    pub orbitals: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn scenarios(&self) -> Vec<Scenario> {
        let base = Variant {
            name: String::new(),
            u: None,
            u_c: None,
            t_c: None,
            n: None,
            eps: None,
            beta: None,
            bias: None,
        };
        let variants = if self.variants.is_empty() { vec![base] } else { self.variants.clone() };
        variants.iter().map(|v| self.scenario(v)).collect()
    }

    fn scenario(&self, v: &Variant) -> Scenario {
        let mut m = self.model.clone();
        m.u = v.u.unwrap_or(m.u);
        m.u_c = v.u_c.unwrap_or(m.u_c);
        m.t_c = v.t_c.unwrap_or(m.t_c);
        m.n = v.n.unwrap_or(m.n);
        if v.eps.is_some() {
            m.eps = v.eps;
            m.eps1 = v.eps;
            m.eps2 = v.eps;
        }
        let model = m.build();
        let baths = self
            .baths
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let mu = match v.bias {
                    Some(bias) if i == 0 => bias,
                    Some(bias) if i == 1 => -bias,
                    _ => b.mu,
                };
                LorentzBath {
                    delta: b.delta,
                    width: b.width,
                    beta: v.beta.unwrap_or(b.beta),
                    mu,
                    label: b.label.clone(),
                    coupled_orbitals: b.orbitals.clone().unwrap_or_else(|| model.lead_orbitals(i)),
                }
            })
            .collect();
        Scenario {
            name: v.name.clone(),
            model,
            u: m.u,
            baths,
        }
    }

    pub fn omegas(&self, u: f64) -> Vec<f64> {
        match self.grid {
            GridSpec::Default => default_grid(u),
            GridSpec::Uniform { min, max, points } => {
                let h = (max - min) / (points - 1) as f64;
                (0..points).map(|i| min + h * i as f64).collect()
            }
        }
    }
}

/// 1-based line of `key` inside the `occurrence`-th `header` section, or of
/// the header itself when the key is absent. The top level has header "".
fn locate(text: &str, header: &str, occurrence: usize, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut seen = 0usize;
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') {
            current = line.to_string();
            if current == header {
                seen += 1;
                if seen == occurrence + 1 {
                    header_line = Some(i + 1);
                }
            }
            continue;
        }
        let in_target = if header.is_empty() { current.is_empty() } else { current == header && seen == occurrence + 1 };
        if let (true, Some(k)) = (in_target, key) {
            let name = line.split('=').next().unwrap_or("").trim();
            if name == k && line.contains('=') {
                return Some(i + 1);
            }
        }
    }
    header_line
}

struct Checker<'a> {
    text: &'a str,
}

impl Checker<'_> {
    fn err(&self, header: &str, occurrence: usize, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: locate(self.text, header, occurrence, Some(key)),
            message: message.into(),
        }
    }

    fn positive(&self, header: &str, occ: usize, key: &str, v: f64) -> Result<(), ConfigError> {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(self.err(header, occ, key, format!("{key} must be positive, got {v}")))
        }
    }

    fn finite(&self, header: &str, occ: usize, key: &str, v: Option<f64>) -> Result<(), ConfigError> {
        match v {
            Some(x) if !x.is_finite() => Err(self.err(header, occ, key, format!("{key} must be finite"))),
            _ => Ok(()),
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
        message: e.message().trim().to_string(),
    })?;
    let ck = Checker { text };

    let m = &raw.model;
    for (key, v) in [("eps", m.eps), ("eps1", m.eps1), ("eps2", m.eps2), ("u", m.u), ("u_c", m.u_c), ("t_c", m.t_c)] {
        ck.finite("[model]", 0, key, v)?;
    }
    let unused: &[(&str, bool)] = match m.kind {
        ModelKind::Level => &[
            ("u", m.u.is_some()),
            ("u_c", m.u_c.is_some()),
            ("t_c", m.t_c.is_some()),
            ("n", m.n.is_some()),
            ("eps1", m.eps1.is_some()),
            ("eps2", m.eps2.is_some()),
        ],
        ModelKind::SingleDot => &[
            ("u_c", m.u_c.is_some()),
            ("t_c", m.t_c.is_some()),
            ("n", m.n.is_some()),
            ("eps1", m.eps1.is_some()),
            ("eps2", m.eps2.is_some()),
        ],
        ModelKind::Dqd => &[("eps", m.eps.is_some())],
    };
    if let Some((key, _)) = unused.iter().find(|(_, set)| *set) {
        return Err(ck.err("[model]", 0, key, format!("key `{key}` does not apply to model kind {:?}", m.kind)));
    }
    if m.kind == ModelKind::Dqd {
        for key in ["u", "u_c"] {
            if (key == "u" && m.u.is_none()) || (key == "u_c" && m.u_c.is_none()) {
                return Err(ConfigError {
                    line: locate(text, "[model]", 0, None),
                    message: format!("model kind dqd requires `{key}`"),
                });
            }
        }
    }
    let model = ModelSpec {
        kind: m.kind,
        eps: m.eps,
        eps1: m.eps1,
        eps2: m.eps2,
        u: m.u.unwrap_or(0.0),
        u_c: m.u_c.unwrap_or(0.0),
        t_c: m.t_c.unwrap_or(0.0),
        n: m.n.unwrap_or(1),
    };
    let n_orb = model.build().n_orbitals();

    let mut labels = HashSet::new();
    let mut baths = Vec::new();
    for (i, b) in raw.bath.iter().enumerate() {
        ck.positive("[[bath]]", i, "delta", b.delta)?;
        ck.positive("[[bath]]", i, "width", b.width)?;
        ck.positive("[[bath]]", i, "beta", b.beta)?;
        ck.finite("[[bath]]", i, "mu", Some(b.mu))?;
        if b.label.is_empty() || !labels.insert(b.label.clone()) {
            return Err(ck.err("[[bath]]", i, "label", format!("bath label `{}` is empty or repeated", b.label)));
        }
        if let Some(orbs) = &b.orbitals {
            if orbs.is_empty() || orbs.iter().any(|&o| o >= n_orb) {
                return Err(ck.err("[[bath]]", i, "orbitals", format!("orbitals must be non-empty and below {n_orb}")));
            }
        }
        if m.kind == ModelKind::Dqd && i > 1 && b.orbitals.is_none() {
            return Err(ck.err("[[bath]]", i, "label", "a third double-dot reservoir needs explicit orbitals"));
        }
        baths.push(RawBathSpec {
            label: b.label.clone(),
            delta: b.delta,
            width: b.width,
            beta: b.beta,
            mu: b.mu,
            orbitals: b.orbitals.clone(),
        });
    }

    let d = &raw.decomposition;
    if d.k == Some(0) {
        return Err(ck.err("[decomposition]", 0, "k", "k must be at least 1"));
    }
    if let Some(t) = d.tol {
        if !(t > 0.0 && t <= 0.1) {
            return Err(ck.err("[decomposition]", 0, "tol", format!("tol must lie in (0, 0.1], got {t}")));
        }
    }
    let decomposition = DecompositionSpec {
        method: match d.method.unwrap_or(MethodName::Pade) {
            MethodName::Pade => DecompositionMethod::Pade,
            MethodName::Prony => DecompositionMethod::Prony,
        },
        k: d.k,
        tol: d.tol.unwrap_or(0.02),
        enforce_tol: d.k.is_none() || d.tol.is_some(),
    };

    let level = raw.hierarchy.level.unwrap_or(3);
    let memory_gb = raw.hierarchy.memory_gb.unwrap_or(8.0);
    ck.positive("[hierarchy]", 0, "memory_gb", memory_gb)?;

    let s = &raw.solver;
    let defaults = SolverConfig::default();
    let solver = SolverConfig {
        omega_damp: s.omega_damp,
        tol: s.tol.unwrap_or(defaults.tol),
        max_iter: s.max_iter.unwrap_or(defaults.max_iter),
        broadening: s.broadening.unwrap_or(0.0),
        method: match s.method.unwrap_or(SolverName::Gmres) {
            SolverName::Gmres => LinearMethod::Gmres { restart: s.restart.unwrap_or(40) },
            SolverName::Damped => LinearMethod::Damped,
        },
        ..defaults
    };
    if s.restart.is_some() && s.method == Some(SolverName::Damped) {
        return Err(ck.err("[solver]", 0, "restart", "restart only applies to method = \"gmres\""));
    }
    for (key, v) in [("tol", solver.tol), ("max_iter", solver.max_iter as f64)] {
        ck.positive("[solver]", 0, key, v)?;
    }
    if let Some(o) = s.omega_damp {
        if !(o >= 0.0 && o.is_finite()) {
            return Err(ck.err("[solver]", 0, "omega_damp", "omega_damp must be non-negative"));
        }
    }
    if !(solver.broadening >= 0.0 && solver.broadening.is_finite()) {
        return Err(ck.err("[solver]", 0, "broadening", "broadening must be non-negative"));
    }
    if s.restart == Some(0) {
        return Err(ck.err("[solver]", 0, "restart", "restart must be positive"));
    }

    let o = &raw.observables;
    let observables = ObservableSpec {
        spectral: o.spectral.clone().unwrap_or_else(|| vec![0]),
        noise: o.noise.unwrap_or(false),
        noise_weights: o.noise_weights.unwrap_or([0.5, 0.5]),
        currents: o.currents.unwrap_or(!baths.is_empty()),
    };
    if let Some(&bad) = observables.spectral.iter().find(|&&u| u >= n_orb) {
        return Err(ck.err("[observables]", 0, "spectral", format!("orbital {bad} does not exist (model has {n_orb})")));
    }
    if observables.noise && baths.len() < 2 {
        return Err(ck.err("[observables]", 0, "noise", "noise spectra need two reservoirs"));
    }
    if (observables.noise || observables.currents) && baths.is_empty() {
        return Err(ck.err("[observables]", 0, "currents", "currents need at least one reservoir"));
    }
    if (observables.noise || observables.currents) && level == 0 {
        return Err(ck.err("[hierarchy]", 0, "level", "transport observables need level >= 1"));
    }
    if baths.is_empty() && solver.broadening == 0.0 && !observables.spectral.is_empty() {
        return Err(ck.err("[solver]", 0, "broadening", "a run without reservoirs needs broadening > 0"));
    }

    let g = &raw.grid;
    let grid = match (g.min, g.max, g.points) {
        (None, None, None) => GridSpec::Default,
        (Some(min), Some(max), Some(points)) => {
            if !(min.is_finite() && max.is_finite() && min < max) {
                return Err(ck.err("[grid]", 0, "max", "grid needs min < max"));
            }
            if points < 2 {
                return Err(ck.err("[grid]", 0, "points", "grid needs at least 2 points"));
            }
            GridSpec::Uniform { min, max, points }
        }
        _ => {
            return Err(ConfigError {
                line: locate(text, "[grid]", 0, None),
                message: "grid needs all of min, max and points (or none for the default grid)".into(),
            })
        }
    };

    if raw.workers == Some(0) {
        return Err(ck.err("", 0, "workers", "workers must be at least 1"));
    }

    let mut names = HashSet::new();
    let mut variants = Vec::new();
    for (i, v) in raw.variant.iter().enumerate() {
        let ok_name = !v.name.is_empty() && v.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !ok_name || !names.insert(v.name.clone()) {
            return Err(ck.err("[[variant]]", i, "name", format!("variant name `{}` is invalid or repeated", v.name)));
        }
        if let Some(b) = v.beta {
            ck.positive("[[variant]]", i, "beta", b)?;
        }
        if v.bias.is_some() && baths.len() < 2 {
            return Err(ck.err("[[variant]]", i, "bias", "bias needs two reservoirs"));
        }
        let dqd_only = [("u_c", v.u_c.is_some()), ("t_c", v.t_c.is_some()), ("n", v.n.is_some())];
        if m.kind != ModelKind::Dqd {
            if let Some((key, _)) = dqd_only.iter().find(|(_, set)| *set) {
                return Err(ck.err("[[variant]]", i, key, format!("`{key}` only applies to the double dot")));
            }
        }
        for (key, x) in [("u", v.u), ("u_c", v.u_c), ("t_c", v.t_c), ("eps", v.eps), ("bias", v.bias)] {
            ck.finite("[[variant]]", i, key, x)?;
        }
        variants.push(Variant {
            name: v.name.clone(),
            u: v.u,
            u_c: v.u_c,
            t_c: v.t_c,
            n: v.n,
            eps: v.eps,
            beta: v.beta,
            bias: v.bias,
        });
    }

    Ok(RunConfig {
        description: raw.description,
        expensive: raw.expensive,
        workers: raw.workers,
        model,
        baths,
        decomposition,
        level,
        memory_budget: (memory_gb * 1024.0 * 1024.0 * 1024.0) as u128,
        solver,
        observables,
        grid,
        out_dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("out")),
        variants,
    })
}
