//! Lorentzian reservoirs: spectral density, correlation functions and their
//! exponential decomposition into dissipaton modes.
//!
//! The bath correlation function of sign `σ` is
//! `C^σ(t) = (1/π) ∫ dω J(ω−μ) e^{iσωt} / (1 + e^{σβ(ω−μ)})`
//! and is expanded as `Σ_k η_k e^{−γ_k t}` for `t ≥ 0`.

pub mod pade;
pub mod prony;
pub mod quadrature;

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::error::{DeomError, Result};
use crate::model::Sign;

pub use pade::FermiPade;

#[derive(Clone, Debug, PartialEq)]
pub struct LorentzBath {
    /// Coupling strength Δ.
    pub delta: f64,
    /// Bandwidth W.
    pub width: f64,
    pub beta: f64,
    pub mu: f64,
    pub label: String,
    pub coupled_orbitals: Vec<usize>,
}

impl LorentzBath {
    pub fn new(
        label: impl Into<String>,
        delta: f64,
        width: f64,
        beta: f64,
        mu: f64,
        coupled_orbitals: Vec<usize>,
    ) -> Result<Self> {
        let bath = LorentzBath {
            delta,
            width,
            beta,
            mu,
            label: label.into(),
            coupled_orbitals,
        };
        bath.validate()?;
        Ok(bath)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.delta) || !ok(self.width) || !ok(self.beta) {
            return Err(DeomError::Invalid(format!(
                "bath {}: delta, width and beta must be positive (got {}, {}, {})",
                self.label, self.delta, self.width, self.beta
            )));
        }
        if !self.mu.is_finite() {
            return Err(DeomError::Invalid(format!("bath {}: mu is not finite", self.label)));
        }
        Ok(())
    }

    /// Same bath with a different chemical potential.
    pub fn with_mu(&self, mu: f64) -> Self {
        LorentzBath { mu, ..self.clone() }
    }

    /// Sampling horizon used for fitting and error checks.
    pub fn fit_horizon(&self) -> f64 {
        10.0 / self.width.min(std::f64::consts::PI / self.beta)
    }
}

pub fn spectral_density(bath: &LorentzBath, omega: f64) -> f64 {
    let w2 = bath.width * bath.width;
    bath.delta * w2 / (omega * omega + w2)
}

/// Quadrature reference for `C^σ(t)`, `t ≥ 0`.
///
/// The Fermi factor is split into a step and an odd, exponentially decaying
/// remainder: the step part is done in closed form (exponential integrals),
/// the remainder by adaptive Gauss–Kronrod on a finite window.
pub fn reference_correlation(bath: &LorentzBath, sigma: Sign, t: f64) -> Result<C64> {
    if t < 0.0 {
        return Err(DeomError::Invalid(format!("t must be non-negative, got {t}")));
    }
    let (d, w, beta) = (bath.delta, bath.width, bath.beta);
    let step = C64::new(
        0.5 * d * w * (-w * t).exp(),
        -d * w * w / std::f64::consts::PI * quadrature::lorentz_sine_transform(t, w),
    );
    let upper = 50.0 / beta;
    let tol = 1e-12 * d * w;
    let rest = if t == 0.0 {
        C64::default()
    } else {
        quadrature::integrate(
            |om| {
                let fermi = if beta * om > 700.0 { 0.0 } else { 1.0 / (1.0 + (beta * om).exp()) };
                C64::new(spectral_density(bath, om) * (om * t).sin() * fermi, 0.0)
            },
            0.0,
            upper,
            tol,
        )? * C64::new(0.0, 2.0 / std::f64::consts::PI)
    };
    let phase = C64::new(0.0, sigma.value() * bath.mu * t).exp();
    Ok((step + rest) * phase)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecompositionMethod {
    /// Lorentzian pole plus Padé poles of the Fermi function.
    Pade,
    /// Matrix-pencil fit to the quadrature reference.
    Prony,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FitTarget {
    Modes(usize),
    Tolerance(f64),
}

/// One channel's expansion with its measured reconstruction error.
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// `(η_k, γ_k)` pairs.
    pub terms: Vec<(C64, C64)>,
    /// `sup_t |Σ η e^{-γt} − C(t)| / sup_t |C(t)|` on the check grid.
    pub rel_error: f64,
}

pub const FIT_GRID_POINTS: usize = 2000;
const MAX_PADE_MODES: usize = 60;
const MAX_PRONY_MODES: usize = 24;

/// Uniform sampling of the μ = 0 reference on `[0, t_max]`.
struct ReferenceGrid {
    dt: f64,
    values: Vec<C64>,
    peak: f64,
}

impl ReferenceGrid {
    fn new(bath: &LorentzBath) -> Result<Self> {
        let b0 = bath.with_mu(0.0);
        let dt = bath.fit_horizon() / (FIT_GRID_POINTS - 1) as f64;
        let values = (0..FIT_GRID_POINTS)
            .map(|i| reference_correlation(&b0, Sign::Plus, i as f64 * dt))
            .collect::<Result<Vec<_>>>()?;
        let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(ReferenceGrid { dt, values, peak })
    }

    fn error(&self, terms: &[(C64, C64)]) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (eval_terms(terms, i as f64 * self.dt) - v).norm())
            .fold(0.0, f64::max)
            / self.peak
    }
}

pub fn eval_terms(terms: &[(C64, C64)], t: f64) -> C64 {
    terms.iter().map(|(eta, g)| eta * (-g * t).exp()).sum()
}

/// μ = 0 terms (identical for both signs because J is even).
fn pade_terms(bath: &LorentzBath, n_modes: usize) -> Result<Vec<(C64, C64)>> {
    let (d, w, beta) = (bath.delta, bath.width, bath.beta);
    let pade = FermiPade::new(n_modes.saturating_sub(1));
    let f_pole = pade.fermi(C64::new(0.0, beta * w));
    let mut terms = vec![(f_pole * d * w, C64::new(w, 0.0))];
    for (xi, r) in pade.xi.iter().zip(&pade.weight) {
        let nu = xi / beta;
        if (nu - w).abs() < 1e-10 * w {
            return Err(DeomError::Invalid(
                "a Fermi pole coincides with the Lorentzian pole; change K".into(),
            ));
        }
        let j_im = d * w * w / (w * w - nu * nu);
        terms.push((C64::new(0.0, -2.0 * r / beta * j_im), C64::new(nu, 0.0)));
    }
    Ok(terms)
}

/// Best of several pencil sizes and sampling strides, judged on the full grid.
fn prony_terms(grid: &ReferenceGrid, n_modes: usize) -> Result<Vec<(C64, C64)>> {
    let mut best: Option<(f64, Vec<(C64, C64)>)> = None;
    let mut last_err = None;
    for stride in [1usize, 2, 4, 8] {
        let sub: Vec<C64> = grid.values.iter().step_by(stride).copied().collect();
        if sub.len() < 8 * n_modes {
            continue;
        }
        for pencil in [sub.len() / 3, sub.len() / 2, 4 * n_modes] {
            let attempt = prony::fit_rates(&sub, grid.dt * stride as f64, n_modes, Some(pencil))
                .and_then(|rates| {
                    let amps = prony::fit_amplitudes(&grid.values, grid.dt, &rates)?;
                    Ok(amps.into_iter().zip(rates).collect::<Vec<_>>())
                });
            match attempt {
                Ok(terms) => {
                    let err = grid.error(&terms);
                    if best.as_ref().map_or(true, |(e, _)| err < *e) {
                        best = Some((err, terms));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
    }
    match (best, last_err) {
        (Some((_, terms)), _) => Ok(terms),
        (None, Some(e)) => Err(e),
        (None, None) => Err(DeomError::Invalid(format!("too few samples for {n_modes} modes"))),
    }
}

fn decompose_zero_mu(
    bath: &LorentzBath,
    target: FitTarget,
    method: DecompositionMethod,
) -> Result<Decomposition> {
    let grid = ReferenceGrid::new(bath)?;
    let build = |k: usize| -> Result<Vec<(C64, C64)>> {
        match method {
            DecompositionMethod::Pade => pade_terms(bath, k),
            DecompositionMethod::Prony => prony_terms(&grid, k),
        }
    };
    match target {
        FitTarget::Modes(k) => {
            if k == 0 {
                return Err(DeomError::Invalid("need at least one mode".into()));
            }
            let terms = build(k)?;
            let rel_error = grid.error(&terms);
            Ok(Decomposition { terms, rel_error })
        }
        FitTarget::Tolerance(tol) => {
            if !(tol > 0.0 && tol <= 0.1) {
                return Err(DeomError::Invalid(format!("tolerance must lie in (0, 0.1], got {tol}")));
            }
            let cap = match method {
                DecompositionMethod::Pade => MAX_PADE_MODES,
                DecompositionMethod::Prony => MAX_PRONY_MODES,
            };
            let mut best = f64::INFINITY;
            for k in 1..=cap {
                let Ok(terms) = build(k) else { continue };
                let rel_error = grid.error(&terms);
                log::debug!("decomposition K={k}: rel error {rel_error:.3e}");
                if rel_error <= tol {
                    return Ok(Decomposition { terms, rel_error });
                }
                best = best.min(rel_error);
            }
            Err(DeomError::Fit {
                achieved: best,
                target: tol,
            })
        }
    }
}

/// Exponential expansion of `C^σ(t)` for the bath's own chemical potential.
pub fn decompose_correlation(
    bath: &LorentzBath,
    sigma: Sign,
    target: FitTarget,
    method: DecompositionMethod,
) -> Result<Decomposition> {
    let base = decompose_zero_mu(bath, target, method)?;
    let terms: Vec<(C64, C64)> = base
        .terms
        .iter()
        .map(|&(eta, g)| (eta, shift_rate(g, sigma, bath.mu)))
        .collect();
    let rel_error = if bath.mu == 0.0 {
        base.rel_error
    } else {
        shifted_error(bath, sigma, &terms)?
    };
    Ok(Decomposition { terms, rel_error })
}

fn shifted_error(bath: &LorentzBath, sigma: Sign, terms: &[(C64, C64)]) -> Result<f64> {
    let dt = bath.fit_horizon() / (FIT_GRID_POINTS - 1) as f64;
    let mut worst: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for i in 0..FIT_GRID_POINTS {
        let t = i as f64 * dt;
        let c = reference_correlation(bath, sigma, t)?;
        peak = peak.max(c.norm());
        worst = worst.max((eval_terms(terms, t) - c).norm());
    }
    Ok(worst / peak)
}

fn shift_rate(gamma: C64, sigma: Sign, mu: f64) -> C64 {
    gamma - C64::new(0.0, sigma.value() * mu)
}

/// One exponential term of one `(α, u, σ)` channel.
#[derive(Clone, Debug, PartialEq)]
pub struct DissipatonMode {
    /// Index of the reservoir in the bath list.
    pub alpha: usize,
    pub u: usize,
    pub sigma: Sign,
    pub eta: C64,
    pub gamma: C64,
    pub k: usize,
}

/// Shift every mode's rate by `−iσμ`; amplitudes are untouched.
pub fn shift_modes(modes: &[DissipatonMode], mu: f64) -> Vec<DissipatonMode> {
    modes
        .iter()
        .map(|m| DissipatonMode {
            gamma: shift_rate(m.gamma, m.sigma, mu),
            ..m.clone()
        })
        .collect()
}

/// Ordered list of dissipaton modes; its order is the hierarchy's mode order.
#[derive(Clone, Debug)]
pub struct ModeTable {
    pub modes: Vec<DissipatonMode>,
    pub labels: Vec<String>,
    pub k_per_channel: Option<usize>,
    conjugate: Vec<usize>,
    /// Worst reconstruction error over the fitted channels, if known.
    pub fit_error: Option<f64>,
}

impl ModeTable {
    /// Decompose every `(α, u, σ)` channel of the given reservoirs.
    pub fn build(baths: &[LorentzBath], target: FitTarget, method: DecompositionMethod) -> Result<Self> {
        let mut modes = Vec::new();
        let mut worst: f64 = 0.0;
        let mut k_uniform = None;
        for (alpha, bath) in baths.iter().enumerate() {
            bath.validate()?;
            let base = decompose_zero_mu(bath, target, method)?;
            worst = worst.max(base.rel_error);
            let terms = &base.terms;
            // σ = − uses the conjugate rate of each σ = + term; at μ = 0 both
            // channels are the same function, so the amplitude is the one
            // attached to the conjugate rate.
            let partner: Vec<usize> = terms
                .iter()
                .map(|(_, g)| {
                    (0..terms.len())
                        .min_by(|&a, &b| {
                            (terms[a].1 - g.conj())
                                .norm()
                                .total_cmp(&(terms[b].1 - g.conj()).norm())
                        })
                        .expect("non-empty")
                })
                .collect();
            match k_uniform {
                None => k_uniform = Some(Some(terms.len())),
                Some(Some(k)) if k != terms.len() => k_uniform = Some(None),
                _ => {}
            }
            for &u in &bath.coupled_orbitals {
                for sigma in [Sign::Minus, Sign::Plus] {
                    for (k, &(eta, g)) in terms.iter().enumerate() {
                        let (eta, g) = match sigma {
                            Sign::Plus => (eta, g),
                            Sign::Minus => (terms[partner[k]].0, g.conj()),
                        };
                        modes.push(DissipatonMode {
                            alpha,
                            u,
                            sigma,
                            eta,
                            gamma: shift_rate(g, sigma, bath.mu),
                            k,
                        });
                    }
                }
            }
        }
        let labels = baths.iter().map(|b| b.label.clone()).collect();
        let mut table = Self::from_modes(modes, labels, false)?;
        table.k_per_channel = k_uniform.flatten();
        table.fit_error = Some(worst);
        Ok(table)
    }

    /// Assemble a table from explicit modes. With `allow_undamped`, purely
    /// oscillating terms (`Re γ = 0`, e.g. discrete reservoir levels) are
    /// accepted; such tables are only meaningful for time propagation.
    pub fn from_modes(mut modes: Vec<DissipatonMode>, labels: Vec<String>, allow_undamped: bool) -> Result<Self> {
        for m in &modes {
            let ok = if allow_undamped { m.gamma.re >= 0.0 } else { m.gamma.re > 0.0 };
            if !ok || !m.gamma.is_finite() || !m.eta.is_finite() {
                return Err(DeomError::Invalid(format!(
                    "mode (alpha={}, u={}, k={}) has rate {} that does not decay",
                    m.alpha, m.u, m.k, m.gamma
                )));
            }
            if m.alpha >= labels.len() {
                return Err(DeomError::Invalid(format!("mode refers to unknown reservoir {}", m.alpha)));
            }
        }
        modes.sort_by(|a, b| (a.alpha, a.u, a.sigma, a.k).cmp(&(b.alpha, b.u, b.sigma, b.k)));
        let key = |m: &DissipatonMode| (m.alpha, m.u, m.sigma, m.k);
        for w in modes.windows(2) {
            if key(&w[0]) == key(&w[1]) {
                return Err(DeomError::Invalid(format!("duplicate mode {:?}", key(&w[0]))));
            }
        }
        let conjugate = modes
            .iter()
            .map(|m| {
                let want = (m.alpha, m.u, m.sigma.flip(), m.k);
                modes
                    .binary_search_by(|x| key(x).cmp(&want))
                    .map_err(|_| DeomError::Invalid(format!("mode {:?} has no conjugate partner", key(m))))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModeTable {
            modes,
            labels,
            k_per_channel: None,
            conjugate,
            fit_error: None,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Index of the mode with the same `(α, u, k)` and opposite sign.
    pub fn conjugate(&self, j: usize) -> usize {
        self.conjugate[j]
    }

    pub fn modes_of(&self, alpha: usize) -> impl Iterator<Item = usize> + '_ {
        self.modes
            .iter()
            .enumerate()
            .filter(move |(_, m)| m.alpha == alpha)
            .map(|(j, _)| j)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["alpha", "u", "sigma", "k", "re_eta", "im_eta", "re_gamma", "im_gamma"])?;
        for m in &self.modes {
            wr.write_record([
                self.labels[m.alpha].clone(),
                m.u.to_string(),
                format!("{}", m.sigma.value() as i32),
                m.k.to_string(),
                format!("{:.16e}", m.eta.re),
                format!("{:.16e}", m.eta.im),
                format!("{:.16e}", m.gamma.re),
                format!("{:.16e}", m.gamma.im),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut labels: Vec<String> = Vec::new();
        let mut modes = Vec::new();
        let bad = |what: &str| DeomError::Invalid(format!("mode table: bad {what}"));
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != 8 {
                return Err(bad("column count"));
            }
            let label = rec[0].to_string();
            let alpha = match labels.iter().position(|l| *l == label) {
                Some(i) => i,
                None => {
                    labels.push(label);
                    labels.len() - 1
                }
            };
            let num = |i: usize| rec[i].trim().parse::<f64>().map_err(|_| bad("number"));
            let sigma = rec[2]
                .trim()
                .parse::<i32>()
                .ok()
                .and_then(Sign::from_value)
                .ok_or_else(|| bad("sigma"))?;
            modes.push(DissipatonMode {
                alpha,
                u: rec[1].trim().parse().map_err(|_| bad("orbital"))?,
                sigma,
                k: rec[3].trim().parse().map_err(|_| bad("k"))?,
                eta: C64::new(num(4)?, num(5)?),
                gamma: C64::new(num(6)?, num(7)?),
            });
        }
        Self::from_modes(modes, labels, true)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
