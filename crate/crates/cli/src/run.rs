//! Execution of `run` and `fit-bath`: decomposition, hierarchy, steady
//! state, observables, and the files they produce.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use deom::bath::{FitTarget, ModeTable};
use deom::hierarchy::{check_capacity, ddo_count, Generator};
use deom::model::build_fock_operators;
use deom::observables::{
    impurity_spectral_function, noise_spectra, resample_uniform, spectrum_derivative, steady_current, total_noise,
    SpectrumTable,
};
use deom::solvers::{generator_residual, solve_steady_state, LinearMethod};
use deom::DeomError;

use crate::config::{ConfigError, RunConfig, Scenario};

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Run(DeomError),
    Io(std::io::Error),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "config error: {}", e.message),
            Failure::Run(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<DeomError> for Failure {
    fn from(e: DeomError) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Run(e) => match e {
                DeomError::Capacity { .. } => 4,
                DeomError::NonConvergence { .. }
                | DeomError::Instability { .. }
                | DeomError::Fit { .. }
                | DeomError::Quadrature { .. }
                | DeomError::Singular { .. } => 3,
                DeomError::Invalid(_) | DeomError::Size(_) | DeomError::Shape(_) => 2,
                _ => 1,
            },
            Failure::Io(_) => 1,
        }
    }
}

/// Files are written with a `.partial` suffix and renamed once the whole run
/// has succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn partial_path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.partial"))
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let p = self.partial_path(name);
        fs::write(&p, bytes)?;
        self.files.push(self.dir.join(name));
        Ok(())
    }

    fn spectrum(&mut self, name: &str, t: &SpectrumTable) -> Result<(), Failure> {
        let mut buf = Vec::new();
        t.write_csv(&mut buf)?;
        self.write(name, &buf)?;
        Ok(())
    }

    fn commit(self) -> std::io::Result<Vec<PathBuf>> {
        for f in &self.files {
            let mut partial = f.clone().into_os_string();
            partial.push(".partial");
            fs::rename(&partial, f)?;
        }
        Ok(self.files)
    }
}

pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

fn fit_target(cfg: &RunConfig) -> FitTarget {
    match cfg.decomposition.k {
        Some(k) => FitTarget::Modes(k),
        None => FitTarget::Tolerance(cfg.decomposition.tol),
    }
}

fn mode_table(cfg: &RunConfig, sc: &Scenario) -> Result<ModeTable, Failure> {
    let table = ModeTable::build(&sc.baths, fit_target(cfg), cfg.decomposition.method)?;
    let err = table.fit_error.unwrap_or(0.0);
    if cfg.decomposition.k.is_some() {
        if cfg.decomposition.enforce_tol && err > cfg.decomposition.tol {
            return Err(DeomError::Fit {
                achieved: err,
                target: cfg.decomposition.tol,
            }
            .into());
        }
        if err > 0.02 {
            log::warn!("decomposition error {err:.3e} exceeds 2%");
        }
    }
    Ok(table)
}

fn prefix(sc: &Scenario) -> String {
    if sc.name.is_empty() {
        String::new()
    } else {
        format!("{}.", sc.name)
    }
}

fn describe(sc: &Scenario) -> String {
    let mut s = format!("{:?}", sc.model);
    for b in &sc.baths {
        let _ = write!(
            s,
            "; bath {}: delta={} width={} beta={} mu={} orbitals={:?}",
            b.label, b.delta, b.width, b.beta, b.mu, b.coupled_orbitals
        );
    }
    s
}

fn mode_csv(table: &ModeTable) -> Result<String, Failure> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

/// Smallest spacing of a grid, used to resample it uniformly.
fn uniform_points(omegas: &[f64]) -> usize {
    let h = omegas.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let span = omegas[omegas.len() - 1] - omegas[0];
    (span / h).round() as usize + 1
}

fn run_scenario(cfg: &RunConfig, sc: &Scenario, workers: usize, out: &mut Outputs, m: &mut String) -> Result<(), Failure> {
    let start = Instant::now();
    let pre = prefix(sc);
    let _ = writeln!(m, "\n[scenario {}]", if sc.name.is_empty() { "default" } else { &sc.name });
    let _ = writeln!(m, "parameters = {}", describe(sc));

    let table = mode_table(cfg, sc)?;
    let _ = writeln!(
        m,
        "decomposition = {:?}, K per channel {}, worst fit error {:.4e}",
        cfg.decomposition.method,
        table.k_per_channel.map_or("mixed".to_string(), |k| k.to_string()),
        table.fit_error.unwrap_or(0.0)
    );
    out.write(&format!("{pre}modes.csv"), mode_csv(&table)?.as_bytes())?;

    let ops = build_fock_operators(sc.model.n_orbitals())?;
    let h = sc.model.hamiltonian(&ops)?;
    let n_modes = table.len();
    let count = ddo_count(n_modes, cfg.level);
    let states = match cfg.solver.method {
        LinearMethod::Gmres { restart } => 4 + workers * (restart + 6),
        LinearMethod::Damped => 4 + workers * 4,
    };
    let _ = writeln!(m, "hierarchy = J {n_modes}, L {}, DDOs {count} (including the root)", cfg.level);
    check_capacity(n_modes, cfg.level, ops.dim, states, cfg.memory_budget)?;
    if cfg.expensive {
        log::warn!("expensive preset: {count} DDOs of size {0}x{0}", ops.dim);
    }

    let gen = Generator::new(&h, &ops, table.clone(), cfg.level)?;
    let ss = solve_steady_state(&gen, None, &cfg.solver)?;
    let _ = writeln!(
        m,
        "steady_state = {} sweeps, residual {:.3e}, generator residual {:.3e}",
        ss.convergence.iterations,
        ss.convergence.residual,
        generator_residual(&gen, &ss.state)
    );
    let mut hist = Vec::new();
    ss.convergence.write_history_csv(&mut hist)?;
    out.write(&format!("{pre}steady_history.csv"), &hist)?;
    let rho = gen.root_density(&ss.state);
    let occ: Vec<String> = (0..ops.n_orbitals)
        .map(|u| format!("{:.10}", (ops.number(u) * &rho).trace().re))
        .collect();
    let _ = writeln!(m, "occupations = [{}]", occ.join(", "));

    if cfg.observables.currents {
        for (alpha, b) in sc.baths.iter().enumerate() {
            let i = steady_current(&gen, &ss.state, alpha)?;
            let _ = writeln!(m, "current {} = {i:.12e}", b.label);
        }
    }

    let omegas = cfg.omegas(sc.u);
    let params = describe(sc);
    for &u in &cfg.observables.spectral {
        let t = impurity_spectral_function(&gen, &ss.state, &ops, u, u, &omegas, &cfg.solver)?.with_params(params.clone());
        let name = format!("{pre}A_{u}_{u}.csv");
        let _ = writeln!(
            m,
            "spectrum {name}: {} points, {} solves, {} iterations, max residual {:.3e}, integral {:.6}",
            omegas.len(),
            t.stats.solves,
            t.stats.iterations,
            t.stats.max_residual,
            t.integral()
        );
        out.spectrum(&name, &t)?;
    }

    if cfg.observables.noise {
        let s = noise_spectra(&gen, &ss.state, &[0, 1], &omegas, &cfg.solver)?;
        let (l, r) = (&sc.baths[0].label, &sc.baths[1].label);
        for (p, q, a, b) in [(0, 0, l, l), (1, 1, r, r), (0, 1, l, r)] {
            let t = s[p][q].clone().with_params(params.clone());
            out.spectrum(&format!("{pre}S_{a}_{b}.csv"), &t)?;
        }
        let [wa, wb] = cfg.observables.noise_weights;
        let total = total_noise(&s[0][0], &s[1][1], &s[0][1], wa, wb)?.with_params(params.clone());
        let st = s[0][0].stats;
        let _ = writeln!(
            m,
            "noise: {} solves, {} iterations, max residual {:.3e}, weights a={wa} b={wb}",
            st.solves, st.iterations, st.max_residual
        );
        out.spectrum(&format!("{pre}S_total.csv"), &total)?;
        let deriv = match spectrum_derivative(&total) {
            Ok(d) => d,
            Err(DeomError::NonUniformGrid) => {
                let n = uniform_points(&omegas);
                let _ = writeln!(m, "dS/dw computed after linear resampling onto {n} uniform points");
                spectrum_derivative(&resample_uniform(&total, n)?)?
            }
            Err(e) => return Err(e.into()),
        };
        out.spectrum(&format!("{pre}dSdw.csv"), &deriv)?;
    }
    let _ = writeln!(m, "wall_time_s = {:.3}", start.elapsed().as_secs_f64());
    Ok(())
}

fn header(cfg: &RunConfig, config_path: &str, workers: usize, command: &str) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "command = {command}");
    let _ = writeln!(m, "config = {config_path}");
    if let Some(d) = &cfg.description {
        let _ = writeln!(m, "description = {d}");
    }
    let _ = writeln!(m, "workers = {workers}");
    let _ = writeln!(m, "hierarchy level = {}", cfg.level);
    let _ = writeln!(
        m,
        "decomposition = {:?}, k {:?}, tol {}",
        cfg.decomposition.method, cfg.decomposition.k, cfg.decomposition.tol
    );
    let _ = writeln!(m, "solver = {:?}", cfg.solver);
    let _ = writeln!(m, "observables = {:?}", cfg.observables);
    let _ = writeln!(m, "grid = {:?}", cfg.grid);
    m
}

fn finish(out: Outputs, manifest: String, result: Result<(), Failure>, start: Instant) -> Result<RunSummary, Failure> {
    let mut manifest = manifest;
    let _ = writeln!(manifest, "\ntotal_wall_time_s = {:.3}", start.elapsed().as_secs_f64());
    match result {
        Ok(()) => {
            let _ = writeln!(manifest, "status = ok");
            let path = out.dir.join("manifest.txt");
            let dir = out.dir.clone();
            let files = out.commit()?;
            fs::write(&path, manifest)?;
            let _ = dir;
            Ok(RunSummary { files, manifest: path })
        }
        Err(e) => {
            let _ = writeln!(manifest, "status = failed (exit code {}): {e}", e.exit_code());
            if let Failure::Run(DeomError::NonConvergence { history, .. }) = &e {
                let tail: Vec<String> = history.iter().rev().take(10).rev().map(|r| format!("{r:.3e}")).collect();
                let _ = writeln!(manifest, "last residuals = [{}]", tail.join(", "));
            }
            fs::write(out.dir.join("manifest.txt.partial"), manifest)?;
            Err(e)
        }
    }
}

pub fn run(cfg: &RunConfig, config_path: &str, workers: usize) -> Result<RunSummary, Failure> {
    let start = Instant::now();
    let mut out = Outputs::new(&cfg.out_dir)?;
    let mut manifest = header(cfg, config_path, workers, "run");
    let mut result = Ok(());
    for sc in cfg.scenarios() {
        log::info!("scenario {}", if sc.name.is_empty() { "default" } else { &sc.name });
        if let Err(e) = run_scenario(cfg, &sc, workers, &mut out, &mut manifest) {
            result = Err(e);
            break;
        }
    }
    finish(out, manifest, result, start)
}

pub fn fit_bath(cfg: &RunConfig, config_path: &str, workers: usize) -> Result<RunSummary, Failure> {
    let start = Instant::now();
    let mut out = Outputs::new(&cfg.out_dir)?;
    let mut manifest = header(cfg, config_path, workers, "fit-bath");
    let mut result = Ok(());
    for sc in cfg.scenarios() {
        let r = (|| -> Result<(), Failure> {
            let table = mode_table(cfg, &sc)?;
            let _ = writeln!(manifest, "\n[scenario {}]", if sc.name.is_empty() { "default" } else { &sc.name });
            let _ = writeln!(manifest, "parameters = {}", describe(&sc));
            let _ = writeln!(
                manifest,
                "modes = {}, K per channel {}, worst fit error {:.4e}",
                table.len(),
                table.k_per_channel.map_or("mixed".to_string(), |k| k.to_string()),
                table.fit_error.unwrap_or(0.0)
            );
            out.write(&format!("{}modes.csv", prefix(&sc)), mode_csv(&table)?.as_bytes())?;
            Ok(())
        })();
        if let Err(e) = r {
            result = Err(e);
            break;
        }
    }
    finish(out, manifest, result, start)
}
