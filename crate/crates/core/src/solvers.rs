//! Time propagation, steady states and frequency-domain solves on a
//! [`Generator`].
//!
//! With the generator split as `G = −D + O` (`D` block diagonal, `O` the tier
//! couplings) both stationary problems are written as damped fixed points
//! `(D + Ω − iω) X' = b + Ω X + O X`, inverted exactly in the eigenbasis of
//! `H_S`. A restarted GMRES on the same operator is available as a second
//! method.

use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{DeomError, Result};
use crate::hierarchy::{Generator, HierarchyState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinearMethod {
    Damped,
    Gmres { restart: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Stability factor Ω; `None` picks [`default_omega`].
    pub omega_damp: Option<f64>,
    /// Relative residual target.
    pub tol: f64,
    pub max_iter: usize,
    /// Lorentzian broadening η of frequency responses, `ω → ω + iη`.
    pub broadening: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Method for frequency-domain solves; steady states always use the
    /// damped iteration.
    pub method: LinearMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            omega_damp: None,
            tol: 1e-8,
            max_iter: 20_000,
            broadening: 0.0,
            dt: 0.01,
            t_final: 50.0,
            method: LinearMethod::Gmres { restart: 40 },
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(o) = self.omega_damp {
            if !(o >= 0.0) {
                return Err(DeomError::Invalid(format!("omega_damp must be non-negative, got {o}")));
            }
        }
        if !(self.broadening >= 0.0 && self.broadening.is_finite()) {
            return Err(DeomError::Invalid(format!("broadening must be non-negative, got {}", self.broadening)));
        }
        if !(self.tol > 0.0) || !(self.dt > 0.0) || self.max_iter == 0 {
            return Err(DeomError::Invalid("tol, dt and max_iter must be positive".into()));
        }
        if let LinearMethod::Gmres { restart } = self.method {
            if restart == 0 {
                return Err(DeomError::Invalid("GMRES restart length must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Sum of the `L` largest `Re γ_j`: the largest damping found at tier `L`.
pub fn default_omega(gen: &Generator) -> f64 {
    let mut re: Vec<f64> = gen.modes.modes.iter().map(|m| m.gamma.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    let s: f64 = re.iter().take(gen.index.level).sum();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

fn omega_of(gen: &Generator, cfg: &SolverConfig) -> f64 {
    cfg.omega_damp.unwrap_or_else(|| default_omega(gen))
}

/// Classic fourth-order Runge–Kutta.
pub fn propagate(gen: &Generator, state: &HierarchyState, dt: f64, n_steps: usize) -> Result<HierarchyState> {
    propagate_observed(gen, state, dt, n_steps, |_, _| {})
}

/// Like [`propagate`], calling `observe(step, state)` before the first step
/// and after every step.
pub fn propagate_observed<F: FnMut(usize, &HierarchyState)>(
    gen: &Generator,
    state: &HierarchyState,
    dt: f64,
    n_steps: usize,
    mut observe: F,
) -> Result<HierarchyState> {
    let mut x = state.clone();
    let start = x.norm().max(f64::MIN_POSITIVE);
    let mut k1 = x.zeros_like();
    let mut k2 = x.zeros_like();
    let mut k3 = x.zeros_like();
    let mut k4 = x.zeros_like();
    let mut tmp = x.zeros_like();
    observe(0, &x);
    let h = C64::new(dt, 0.0);
    for step in 1..=n_steps {
        gen.apply(&x, &mut k1);
        combine(&mut tmp, &x, &k1, 0.5 * dt);
        gen.apply(&tmp, &mut k2);
        combine(&mut tmp, &x, &k2, 0.5 * dt);
        gen.apply(&tmp, &mut k3);
        combine(&mut tmp, &x, &k3, dt);
        gen.apply(&tmp, &mut k4);
        x.data
            .par_iter_mut()
            .zip(k1.data.par_iter())
            .zip(k2.data.par_iter())
            .zip(k3.data.par_iter().zip(k4.data.par_iter()))
            .for_each(|(((v, a), b), (c, d))| *v += h / 6.0 * (a + 2.0 * b + 2.0 * c + d));
        let n = x.norm();
        if !n.is_finite() || n > 1e6 * start {
            return Err(DeomError::Instability { step });
        }
        observe(step, &x);
    }
    Ok(x)
}

fn combine(out: &mut HierarchyState, x: &HierarchyState, k: &HierarchyState, h: f64) {
    out.odd = x.odd;
    out.data
        .par_iter_mut()
        .zip(x.data.par_iter().zip(k.data.par_iter()))
        .for_each(|(o, (a, b))| *o = a + b * h);
}

/// Outcome of an iterative solve.
#[derive(Clone, Debug)]
pub struct Convergence {
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
    pub history: Vec<f64>,
}

impl Convergence {
    pub fn write_history_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["iteration", "residual"])?;
        for (i, r) in self.history.iter().enumerate() {
            wr.write_record([(i + 1).to_string(), format!("{r:.6e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub state: HierarchyState,
    pub convergence: Convergence,
}

/// One damped sweep: returns `x' = (D + Ω − iω)^{-1}(b + Ω x + O x)`.
fn damped_sweep(gen: &Generator, x: &HierarchyState, rhs: Option<&HierarchyState>, shift: C64, damp: f64, out: &mut HierarchyState) {
    let dim = gen.dim;
    out.odd = x.odd;
    out.data
        .par_chunks_mut(dim * dim)
        .enumerate()
        .for_each(|(slot, blk)| {
            let xb = x.block(slot);
            match rhs {
                Some(b) => {
                    for ((o, xv), bv) in blk.iter_mut().zip(xb).zip(b.block(slot)) {
                        *o = bv + xv * damp;
                    }
                }
                None => {
                    for (o, xv) in blk.iter_mut().zip(xb) {
                        *o = xv * damp;
                    }
                }
            }
            gen.coupling_into(slot, x, blk);
            for a in 0..dim {
                for b in 0..dim {
                    blk[a * dim + b] /= gen.diagonal(slot, a, b) + (shift + damp);
                }
            }
        });
}

/// `‖(D + Ω − iω)(x − x')‖`, which equals the residual of `x`.
fn sweep_residual(gen: &Generator, x: &HierarchyState, next: &HierarchyState, shift: C64, damp: f64) -> f64 {
    let dim = gen.dim;
    (0..gen.n_ddos())
        .into_par_iter()
        .map(|slot| {
            let (xb, nb) = (x.block(slot), next.block(slot));
            let mut s = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    let k = a * dim + b;
                    s += ((gen.diagonal(slot, a, b) + (shift + damp)) * (xb[k] - nb[k])).norm_sqr();
                }
            }
            s
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
        .sqrt()
}

/// Stationary solution `G ρ = 0` with unit root trace.
///
/// Stops once `‖G ρ‖ < tol · ‖ρ‖`.
pub fn solve_steady_state(gen: &Generator, init: Option<&HierarchyState>, cfg: &SolverConfig) -> Result<SteadyState> {
    cfg.validate()?;
    let damp = omega_of(gen, cfg);
    if damp <= 0.0 {
        return Err(DeomError::Invalid("steady-state iteration needs a positive stability factor".into()));
    }
    let mut x = match init {
        Some(s) => s.clone(),
        None => {
            let mut s = gen.zero_state(false);
            let d = gen.dim;
            for a in 0..d {
                s.block_mut(0)[a * d + a] = C64::new(1.0 / d as f64, 0.0);
            }
            s
        }
    };
    normalize_root(&mut x)?;
    let mut next = x.zeros_like();
    let mut history = Vec::new();
    for it in 1..=cfg.max_iter {
        damped_sweep(gen, &x, None, C64::default(), damp, &mut next);
        let res = sweep_residual(gen, &x, &next, C64::default(), damp) / x.norm();
        history.push(res);
        if it % 200 == 0 {
            log::debug!("steady state sweep {it}: residual {res:.3e}");
        }
        if !res.is_finite() {
            break;
        }
        if res < cfg.tol {
            log::info!("steady state converged after {it} sweeps (residual {res:.3e})");
            return Ok(SteadyState {
                state: x,
                convergence: Convergence {
                    iterations: it,
                    residual: res,
                    history,
                },
            });
        }
        std::mem::swap(&mut x, &mut next);
        if normalize_root(&mut x).is_err() {
            break;
        }
    }
    Err(DeomError::NonConvergence {
        iterations: history.len(),
        residual: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

fn normalize_root(x: &mut HierarchyState) -> Result<()> {
    let tr = x.root_trace();
    if tr.norm() < 1e-300 || !tr.is_finite() {
        return Err(DeomError::Invalid("root DDO has vanishing trace".into()));
    }
    x.scale(1.0 / tr);
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FrequencyResponse {
    pub omega: f64,
    pub x: HierarchyState,
    pub rhs_label: String,
    pub convergence: Convergence,
}

/// Solve `(−G − iω + η) X = rhs`, i.e. `X = ∫_0^∞ e^{iωt} e^{Gt} rhs dt`.
pub fn solve_frequency_response(
    gen: &Generator,
    rhs: &HierarchyState,
    omega: f64,
    cfg: &SolverConfig,
    warm: Option<&HierarchyState>,
) -> Result<FrequencyResponse> {
    cfg.validate()?;
    let label = String::new();
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 {
        return Ok(FrequencyResponse {
            omega,
            x: rhs.zeros_like(),
            rhs_label: label,
            convergence: Convergence {
                iterations: 0,
                residual: 0.0,
                history: vec![],
            },
        });
    }
    if gen.is_decoupled() && cfg.broadening == 0.0 {
        let e = &gen.basis.energies;
        let d = gen.dim;
        for a in 0..d {
            for b in 0..d {
                let z = C64::new(0.0, e[a] - e[b] - omega);
                if z.norm() < 1e-12 && rhs.block(0)[a * d + b].norm() > 0.0 {
                    return Err(DeomError::Singular { omega });
                }
            }
        }
    }
    let damp = omega_of(gen, cfg);
    let shift = C64::new(cfg.broadening, -omega);
    let mut x = match warm {
        Some(w) => w.clone(),
        None => rhs.zeros_like(),
    };
    x.odd = rhs.odd;
    let conv = match cfg.method {
        LinearMethod::Damped => damped_linear(gen, rhs, shift, damp, cfg, &mut x)?,
        LinearMethod::Gmres { restart } => gmres(gen, rhs, shift, damp, restart, cfg, &mut x)?,
    };
    Ok(FrequencyResponse {
        omega,
        x,
        rhs_label: label,
        convergence: conv,
    })
}

fn damped_linear(
    gen: &Generator,
    rhs: &HierarchyState,
    shift: C64,
    damp: f64,
    cfg: &SolverConfig,
    x: &mut HierarchyState,
) -> Result<Convergence> {
    let rn = rhs.norm();
    let mut next = x.zeros_like();
    let mut history = Vec::new();
    for it in 1..=cfg.max_iter {
        damped_sweep(gen, x, Some(rhs), shift, damp, &mut next);
        let res = sweep_residual(gen, x, &next, shift, damp) / rn;
        history.push(res);
        if !res.is_finite() {
            break;
        }
        if res < cfg.tol {
            return Ok(Convergence {
                iterations: it,
                residual: res,
                history,
            });
        }
        std::mem::swap(x, &mut next);
    }
    Err(DeomError::NonConvergence {
        iterations: history.len(),
        residual: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// `out = (−G + shift) x`
fn apply_shifted(gen: &Generator, x: &HierarchyState, shift: C64, out: &mut HierarchyState) {
    gen.apply(x, out);
    let s = shift;
    out.data
        .par_iter_mut()
        .zip(x.data.par_iter())
        .for_each(|(o, v)| *o = -*o + s * v);
}

/// `out = (D + Ω + shift)^{-1} x`
fn precondition(gen: &Generator, x: &HierarchyState, shift: C64, damp: f64, out: &mut HierarchyState) {
    let dim = gen.dim;
    out.odd = x.odd;
    out.data
        .par_chunks_mut(dim * dim)
        .enumerate()
        .for_each(|(slot, blk)| {
            let xb = x.block(slot);
            for a in 0..dim {
                for b in 0..dim {
                    let k = a * dim + b;
                    blk[k] = xb[k] / (gen.diagonal(slot, a, b) + (shift + damp));
                }
            }
        });
}

fn dot(a: &HierarchyState, b: &HierarchyState) -> C64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x.conj() * y).sum()
}

/// Right-preconditioned restarted GMRES.
fn gmres(
    gen: &Generator,
    rhs: &HierarchyState,
    shift: C64,
    damp: f64,
    restart: usize,
    cfg: &SolverConfig,
    x: &mut HierarchyState,
) -> Result<Convergence> {
    let rn = rhs.norm();
    let mut history = Vec::new();
    let mut work = x.zeros_like();
    let mut z = x.zeros_like();
    let mut total = 0;
    while total < cfg.max_iter {
        // r = rhs − A x
        apply_shifted(gen, x, shift, &mut work);
        let mut r = rhs.clone();
        r.axpy(C64::new(-1.0, 0.0), &work);
        let beta = r.norm();
        let rel = beta / rn;
        if rel < cfg.tol {
            if history.is_empty() {
                history.push(rel);
            }
            return Ok(Convergence {
                iterations: total,
                residual: rel,
                history,
            });
        }
        r.scale(C64::new(1.0 / beta, 0.0));
        let mut basis = vec![r];
        let mut h = vec![vec![C64::default(); restart]; restart + 1];
        let mut cs = vec![C64::default(); restart];
        let mut sn = vec![C64::default(); restart];
        let mut g = vec![C64::default(); restart + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..restart {
            precondition(gen, &basis[k], shift, damp, &mut z);
            apply_shifted(gen, &z, shift, &mut work);
            let mut w = work.clone();
            for (i, v) in basis.iter().enumerate() {
                let hik = dot(v, &w);
                h[i][k] = hik;
                w.axpy(-hik, v);
            }
            let wn = w.norm();
            h[k + 1][k] = C64::new(wn, 0.0);
            for i in 0..k {
                let t = cs[i].conj() * h[i][k] + sn[i].conj() * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let (a, b) = (h[k][k], h[k + 1][k]);
            let den = (a.norm_sqr() + b.norm_sqr()).sqrt();
            if den == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = a / den;
            sn[k] = b / den;
            h[k][k] = C64::new(den, 0.0);
            h[k + 1][k] = C64::default();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            k_used = k + 1;
            total += 1;
            let rel = g[k + 1].norm() / rn;
            history.push(rel);
            if rel < cfg.tol || wn == 0.0 || total >= cfg.max_iter {
                break;
            }
            w.scale(C64::new(1.0 / wn, 0.0));
            basis.push(w);
        }
        // back substitution and update x += P^{-1} V y
        let mut y = vec![C64::default(); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut update = x.zeros_like();
        for (yi, v) in y.iter().zip(&basis) {
            update.axpy(*yi, v);
        }
        precondition(gen, &update, shift, damp, &mut z);
        x.axpy(C64::new(1.0, 0.0), &z);
        log::debug!("gmres cycle done after {total} inner steps, estimate {:.3e}", history.last().copied().unwrap_or(f64::NAN));
    }
    apply_shifted(gen, x, shift, &mut work);
    let mut r = rhs.clone();
    r.axpy(C64::new(-1.0, 0.0), &work);
    let rel = r.norm() / rn;
    if rel < cfg.tol {
        return Ok(Convergence {
            iterations: total,
            residual: rel,
            history,
        });
    }
    Err(DeomError::NonConvergence {
        iterations: total,
        residual: rel,
        history,
    })
}

/// Relative generator residual `‖G x‖ / ‖x‖`.
pub fn generator_residual(gen: &Generator, x: &HierarchyState) -> f64 {
    let mut out = x.zeros_like();
    gen.apply(x, &mut out);
    out.norm() / x.norm()
}
