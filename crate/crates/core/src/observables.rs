//! Correlation functions, spectra, currents and noise built on the solvers.
//!
//! `Ĉ_AB(ω) = (1/π) ∫_0^∞ dt e^{iωt} ⟨A(t) B(0)⟩` is obtained from the
//! frequency response seeded with `B ρ`.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{DeomError, Result};
use crate::hierarchy::{Generator, HierarchyState};
use crate::linalg;
use crate::model::{FockOperatorSet, Sign};
use crate::solvers::{solve_frequency_response, SolverConfig};

/// Consecutive frequencies solved in sequence with warm starts; chunks run
/// in parallel. Fixed so results do not depend on the worker count.
const SWEEP_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumKind {
    ImpurityA,
    NoiseS,
    NoiseDsDw,
}

impl SpectrumKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectrumKind::ImpurityA => "impurity_A",
            SpectrumKind::NoiseS => "noise_S",
            SpectrumKind::NoiseDsDw => "noise_dSdw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "impurity_A" => Some(SpectrumKind::ImpurityA),
            "noise_S" => Some(SpectrumKind::NoiseS),
            "noise_dSdw" => Some(SpectrumKind::NoiseDsDw),
            _ => None,
        }
    }
}

impl fmt::Display for SpectrumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumTable {
    pub kind: SpectrumKind,
    pub labels: String,
    pub params: String,
    pub omegas: Vec<f64>,
    pub values: Vec<C64>,
    /// Whether the imaginary part is meaningful (cross-lead noise).
    pub complex: bool,
    /// Frequency solves behind the values; empty for derived tables.
    pub stats: SweepStats,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SweepStats {
    pub solves: usize,
    pub iterations: usize,
    pub max_residual: f64,
}

impl SweepStats {
    fn record(&mut self, c: &crate::solvers::Convergence) {
        self.solves += 1;
        self.iterations += c.iterations;
        self.max_residual = self.max_residual.max(c.residual);
    }

    pub fn merge(&mut self, other: &SweepStats) {
        self.solves += other.solves;
        self.iterations += other.iterations;
        self.max_residual = self.max_residual.max(other.max_residual);
    }
}

impl SpectrumTable {
    pub fn new(kind: SpectrumKind, labels: impl Into<String>, omegas: Vec<f64>, values: Vec<C64>, complex: bool) -> Result<Self> {
        if omegas.len() != values.len() {
            return Err(DeomError::GridMismatch);
        }
        if omegas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DeomError::Invalid("frequency grid must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DeomError::Invalid("spectrum has non-finite values".into()));
        }
        Ok(SpectrumTable {
            kind,
            labels: labels.into(),
            params: String::new(),
            omegas,
            values,
            complex,
            stats: SweepStats::default(),
        })
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn with_params(mut self, params: impl Into<String>) -> Self {
        self.params = params.into();
        self
    }

    /// Trapezoid integral of the real part.
    pub fn integral(&self) -> f64 {
        self.omegas
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(w, v)| 0.5 * (w[1] - w[0]) * (v[0].re + v[1].re))
            .sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# kind={}, labels={}, params={}", self.kind, self.labels, self.params)?;
        if self.complex {
            writeln!(w, "omega,value,value_imag")?;
            for (o, v) in self.omegas.iter().zip(&self.values) {
                writeln!(w, "{o:.16e},{:.16e},{:.16e}", v.re, v.im)?;
            }
        } else {
            writeln!(w, "omega,value")?;
            for (o, v) in self.omegas.iter().zip(&self.values) {
                writeln!(w, "{o:.16e},{:.16e}", v.re)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let bad = |m: &str| DeomError::Invalid(format!("spectrum table: {m}"));
        let header = lines.next().ok_or_else(|| bad("empty file"))??;
        let meta = header.strip_prefix("# ").ok_or_else(|| bad("missing comment header"))?;
        let field = |key: &str| -> Option<String> {
            let start = meta.find(&format!("{key}="))? + key.len() + 1;
            let rest = &meta[start..];
            let end = [", labels=", ", params="]
                .iter()
                .filter_map(|sep| rest.find(sep))
                .min()
                .unwrap_or(rest.len());
            Some(rest[..end].to_string())
        };
        let kind = field("kind").and_then(|k| SpectrumKind::parse(&k)).ok_or_else(|| bad("unknown kind"))?;
        let labels = field("labels").unwrap_or_default();
        let params = field("params").unwrap_or_default();
        let columns = lines.next().ok_or_else(|| bad("missing column row"))??;
        let complex = columns.trim() == "omega,value,value_imag";
        let mut omegas = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad number"))?;
            match (complex, nums.as_slice()) {
                (false, [o, v]) => {
                    omegas.push(*o);
                    values.push(C64::new(*v, 0.0));
                }
                (true, [o, v, i]) => {
                    omegas.push(*o);
                    values.push(C64::new(*v, *i));
                }
                _ => return Err(bad("wrong column count")),
            }
        }
        Ok(Self::new(kind, labels, omegas, values, complex)?.with_params(params))
    }
}

/// `+1` for even, `−1` for odd operators (original Fock basis).
fn operator_parity(b: &DMatrix<C64>) -> Result<bool> {
    let mut even = false;
    let mut odd = false;
    for r in 0..b.nrows() {
        for c in 0..b.ncols() {
            if b[(r, c)].norm() > 0.0 {
                if (r.count_ones() + c.count_ones()) % 2 == 0 {
                    even = true;
                } else {
                    odd = true;
                }
            }
        }
    }
    if even && odd {
        return Err(DeomError::Invalid("operator mixes fermion parities".into()));
    }
    Ok(odd)
}

/// Hierarchy representation of `B ρ` (left) or `ρ B` (right) for a system
/// operator `B` given in the original Fock basis.
pub fn seed_correlation_rhs(gen: &Generator, state: &HierarchyState, b: &DMatrix<C64>, side: Side) -> Result<HierarchyState> {
    if b.nrows() != gen.dim || b.ncols() != gen.dim {
        return Err(DeomError::Shape(format!("operator must be {0}x{0}", gen.dim)));
    }
    let odd = operator_parity(b)?;
    let be = gen.to_eigen(b);
    let mut out = state.zeros_like();
    out.odd = state.odd ^ odd;
    let dim = gen.dim;
    out.data
        .par_chunks_mut(dim * dim)
        .enumerate()
        .for_each(|(slot, blk)| {
            let x = linalg::block_to_matrix(state.block(slot), dim);
            let y = match side {
                Side::Left => {
                    let flip = odd && gen.index.indices[slot].tier() % 2 == 1;
                    let m = &be * x;
                    if flip {
                        -m
                    } else {
                        m
                    }
                }
                Side::Right => x * &be,
            };
            blk.copy_from_slice(&linalg::matrix_to_block(&y));
        });
    Ok(out)
}

/// Solve the frequency response for every ω (parallel over chunks, warm
/// started within a chunk) and map each solution through `reduce`.
fn sweep<T: Send, F: Fn(&HierarchyState) -> T + Sync>(
    gen: &Generator,
    rhs: &HierarchyState,
    omegas: &[f64],
    cfg: &SolverConfig,
    label: &str,
    reduce: F,
) -> Result<(Vec<T>, SweepStats)> {
    let chunks: Vec<Result<(Vec<T>, SweepStats)>> = omegas
        .par_chunks(SWEEP_CHUNK)
        .map(|chunk| {
            let mut warm: Option<HierarchyState> = None;
            let mut out = Vec::with_capacity(chunk.len());
            let mut stats = SweepStats::default();
            for &w in chunk {
                let resp = solve_frequency_response(gen, rhs, w, cfg, warm.as_ref())?;
                log::debug!(
                    "{label}: omega={w:.4} iterations={} residual={:.2e}",
                    resp.convergence.iterations,
                    resp.convergence.residual
                );
                stats.record(&resp.convergence);
                out.push(reduce(&resp.x));
                warm = Some(resp.x);
            }
            Ok((out, stats))
        })
        .collect();
    let mut all = Vec::with_capacity(omegas.len());
    let mut stats = SweepStats::default();
    for c in chunks {
        let (v, st) = c?;
        all.extend(v);
        stats.merge(&st);
    }
    Ok((all, stats))
}

fn trace_with(op_e: &DMatrix<C64>, x: &HierarchyState) -> C64 {
    (op_e * x.root()).trace()
}

/// `Ĉ_AB(ω)` on a grid, operators in the original Fock basis.
pub fn correlation(
    gen: &Generator,
    state: &HierarchyState,
    a: &DMatrix<C64>,
    b: &DMatrix<C64>,
    omegas: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<C64>> {
    Ok(correlation_with_stats(gen, state, a, b, omegas, cfg)?.0)
}

pub fn correlation_with_stats(
    gen: &Generator,
    state: &HierarchyState,
    a: &DMatrix<C64>,
    b: &DMatrix<C64>,
    omegas: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<C64>, SweepStats)> {
    let rhs = seed_correlation_rhs(gen, state, b, Side::Left)?;
    let ae = gen.to_eigen(a);
    sweep(gen, &rhs, omegas, cfg, "correlation", |x| trace_with(&ae, x) / std::f64::consts::PI)
}

/// `A_{uu'}(ω) = Re Ĉ_{a_u, a_{u'}†}(ω) + Re Ĉ_{a_{u'}†, a_u}(−ω)`.
pub fn impurity_spectral_function(
    gen: &Generator,
    state: &HierarchyState,
    ops: &FockOperatorSet,
    u: usize,
    u2: usize,
    omegas: &[f64],
    cfg: &SolverConfig,
) -> Result<SpectrumTable> {
    if u >= ops.n_orbitals || u2 >= ops.n_orbitals {
        return Err(DeomError::Invalid(format!("orbital index out of range: ({u}, {u2})")));
    }
    let a = ops.dense(u, Sign::Minus);
    let ad = ops.dense(u2, Sign::Plus);
    let neg: Vec<f64> = omegas.iter().rev().map(|w| -w).collect();
    let (particle, mut stats) = correlation_with_stats(gen, state, &a, &ad, omegas, cfg)?;
    let (mut hole, st) = correlation_with_stats(gen, state, &ad, &a, &neg, cfg)?;
    stats.merge(&st);
    hole.reverse();
    let values = particle.iter().zip(&hole).map(|(p, h)| C64::new(p.re + h.re, 0.0)).collect();
    let mut table = SpectrumTable::new(SpectrumKind::ImpurityA, format!("({u},{u2})"), omegas.to_vec(), values, false)?;
    table.stats = stats;
    Ok(table)
}

/// `Tr[Î_α X]` from the tier-1 DDOs of lead `alpha`.
pub fn current_contraction(gen: &Generator, x: &HierarchyState, alpha: usize) -> C64 {
    let i = C64::new(0.0, 1.0);
    gen.modes
        .modes_of(alpha)
        .map(|j| {
            let slot = gen.index.neighbor(0, j).expect("tier one is always present for L >= 1");
            let y = x.block(slot);
            let mut tr = C64::default();
            for &(r, c, v) in &gen.op_conj(j).entries {
                tr += v * y[c * gen.dim + r];
            }
            i * gen.modes.modes[j].sigma.value() * tr
        })
        .sum()
}

/// Steady current `⟨Î_α⟩`, positive when charge flows from lead `alpha`
/// into the system.
pub fn steady_current(gen: &Generator, state: &HierarchyState, alpha: usize) -> Result<f64> {
    check_lead(gen, alpha)?;
    let tr = state.root_trace();
    Ok((current_contraction(gen, state, alpha) / tr).re)
}

fn check_lead(gen: &Generator, alpha: usize) -> Result<()> {
    if alpha >= gen.modes.labels.len() {
        return Err(DeomError::Invalid(format!("unknown lead index {alpha}")));
    }
    if gen.index.level == 0 {
        return Err(DeomError::Invalid("currents need truncation level L >= 1".into()));
    }
    Ok(())
}

/// Hierarchy representation of `Î_α X`.
pub fn current_insertion(gen: &Generator, x: &HierarchyState, alpha: usize) -> HierarchyState {
    let mut out = x.zeros_like();
    let dim = gen.dim;
    let lead_modes: Vec<usize> = gen.modes.modes_of(alpha).collect();
    out.data
        .par_chunks_mut(dim * dim)
        .enumerate()
        .for_each(|(slot, blk)| {
            let idx = gen.index.indices[slot];
            for &j in &lead_modes {
                let Some(nb) = gen.index.neighbor(slot, j) else { continue };
                let s = idx.sign_after(j);
                let sigma = gen.modes.modes[j].sigma.value();
                let y = x.block(nb);
                if idx.contains(j) {
                    let coef = C64::new(0.0, -sigma * s) * gen.eta(j);
                    gen.op_same(j).left_mul_add(coef, y, blk);
                } else {
                    gen.op_conj(j).left_mul_add(C64::new(0.0, sigma * s), y, blk);
                }
            }
        });
    out
}

/// Seed `δÎ_α ρ` for current-fluctuation correlations.
pub fn seed_current_fluctuation(gen: &Generator, state: &HierarchyState, alpha: usize) -> Result<HierarchyState> {
    check_lead(gen, alpha)?;
    let mut rho = state.clone();
    rho.scale(1.0 / state.root_trace());
    let mean = current_contraction(gen, &rho, alpha).re;
    let mut seeded = current_insertion(gen, &rho, alpha);
    seeded.axpy(C64::new(-mean, 0.0), &rho);
    Ok(seeded)
}

/// Symmetrized noise spectra for every ordered pair of the given leads:
/// `S_{αα'}(ω) = ½[Ĉ_{αα'}(ω) + Ĉ_{α'α}(ω)* + Ĉ_{α'α}(−ω) + Ĉ_{αα'}(−ω)*]`,
/// with `Ĉ_{αα'}` the correlation of `δÎ_α(t)` and `δÎ_{α'}(0)`.
/// Entry `[p][q]` holds the spectrum of `(leads[p], leads[q])`.
pub fn noise_spectra(
    gen: &Generator,
    state: &HierarchyState,
    leads: &[usize],
    omegas: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<Vec<SpectrumTable>>> {
    let n = leads.len();
    let mut both: Vec<f64> = omegas.iter().flat_map(|&w| [w + 0.0, -w + 0.0]).collect();
    both.sort_by(f64::total_cmp);
    both.dedup();
    let pos = |w: f64| both.binary_search_by(|x| x.total_cmp(&(w + 0.0))).expect("grid point present");
    // c[q][p][k]: Ĉ_{leads[p], leads[q]}(both[k])
    let mut c = Vec::with_capacity(n);
    let mut stats = SweepStats::default();
    for &aq in leads {
        let rhs = seed_current_fluctuation(gen, state, aq)?;
        let (per_w, st) = sweep(gen, &rhs, &both, cfg, "noise", |x| {
            leads
                .iter()
                .map(|&ap| current_contraction(gen, x, ap) / std::f64::consts::PI)
                .collect::<Vec<C64>>()
        })?;
        stats.merge(&st);
        c.push(per_w);
    }
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let mut row = Vec::with_capacity(n);
        for q in 0..n {
            let values = omegas
                .iter()
                .map(|&w| {
                    let (kp, km) = (pos(w), pos(-w));
                    let c_pq = |k: usize| c[q][k][p];
                    let c_qp = |k: usize| c[p][k][q];
                    0.5 * (c_pq(kp) + c_qp(kp).conj() + c_qp(km) + c_pq(km).conj())
                })
                .collect();
            let labels = format!("({},{})", gen.modes.labels[leads[p]], gen.modes.labels[leads[q]]);
            let mut table = SpectrumTable::new(SpectrumKind::NoiseS, labels, omegas.to_vec(), values, p != q)?;
            table.stats = stats;
            row.push(table);
        }
        out.push(row);
    }
    Ok(out)
}

/// `S_{αα'}(ω)` for one pair of leads.
pub fn noise_spectrum(
    gen: &Generator,
    state: &HierarchyState,
    alpha: usize,
    alpha2: usize,
    omegas: &[f64],
    cfg: &SolverConfig,
) -> Result<SpectrumTable> {
    if alpha == alpha2 {
        let mut s = noise_spectra(gen, state, &[alpha], omegas, cfg)?;
        return Ok(s.remove(0).remove(0));
    }
    let mut s = noise_spectra(gen, state, &[alpha, alpha2], omegas, cfg)?;
    Ok(s.remove(0).remove(1))
}

/// `S = a² S_LL + b² S_RR − 2ab Re S_LR`.
pub fn total_noise(s_ll: &SpectrumTable, s_rr: &SpectrumTable, s_lr: &SpectrumTable, a: f64, b: f64) -> Result<SpectrumTable> {
    if s_ll.omegas != s_rr.omegas || s_ll.omegas != s_lr.omegas {
        return Err(DeomError::GridMismatch);
    }
    let values = s_ll
        .values
        .iter()
        .zip(&s_rr.values)
        .zip(&s_lr.values)
        .map(|((ll, rr), lr)| C64::new(a * a * ll.re + b * b * rr.re - 2.0 * a * b * lr.re, 0.0))
        .collect();
    Ok(SpectrumTable::new(SpectrumKind::NoiseS, format!("total(a={a},b={b})"), s_ll.omegas.clone(), values, false)?
        .with_params(s_ll.params.clone()))
}

/// `dS/dω` by central differences (one-sided at the ends).
pub fn spectrum_derivative(table: &SpectrumTable) -> Result<SpectrumTable> {
    let w = &table.omegas;
    let n = w.len();
    if n < 2 {
        return Err(DeomError::Invalid("need at least two grid points".into()));
    }
    let h = (w[n - 1] - w[0]) / (n - 1) as f64;
    if w.windows(2).any(|p| ((p[1] - p[0]) - h).abs() > 1e-9 * h.abs().max(1.0)) {
        return Err(DeomError::NonUniformGrid);
    }
    let v = &table.values;
    let d: Vec<C64> = (0..n)
        .map(|i| match i {
            0 => (v[1] - v[0]) / h,
            i if i == n - 1 => (v[n - 1] - v[n - 2]) / h,
            i => (v[i + 1] - v[i - 1]) / (2.0 * h),
        })
        .collect();
    Ok(SpectrumTable::new(SpectrumKind::NoiseDsDw, table.labels.clone(), w.clone(), d, table.complex)?.with_params(table.params.clone()))
}

/// Linear interpolation onto `n` uniform points spanning the same range.
pub fn resample_uniform(table: &SpectrumTable, n: usize) -> Result<SpectrumTable> {
    let w = &table.omegas;
    if n < 2 || w.len() < 2 {
        return Err(DeomError::Invalid("resampling needs at least two points".into()));
    }
    let (lo, hi) = (w[0], w[w.len() - 1]);
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let values = grid
        .iter()
        .map(|&x| {
            let k = w.partition_point(|&p| p <= x).clamp(1, w.len() - 1);
            let t = (x - w[k - 1]) / (w[k] - w[k - 1]);
            table.values[k - 1] * (1.0 - t) + table.values[k] * t
        })
        .collect();
    Ok(SpectrumTable::new(table.kind, table.labels.clone(), grid, values, table.complex)?.with_params(table.params.clone()))
}

/// 401 points (symmetric, including ω = 0) over `[−2U, 2U]` (at least `[−4, 4]`), with step `1/20`
/// inside `[−2, 2]`; energies in units of Δ.
pub fn default_grid(u: f64) -> Vec<f64> {
    let edge = (2.0 * u.abs()).max(4.0);
    let inner: Vec<f64> = (-40..=40).map(|i| i as f64 / 20.0).collect();
    let outer_each = (401 - inner.len()) / 2;
    let mut grid = Vec::with_capacity(401);
    let step = (edge - 2.0) / outer_each as f64;
    for i in 0..outer_each {
        grid.push(-edge + i as f64 * step);
    }
    grid.extend(&inner);
    for i in 1..=outer_each {
        grid.push(2.0 + i as f64 * step);
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(values: Vec<f64>, omegas: Vec<f64>) -> SpectrumTable {
        let v = values.into_iter().map(|x| C64::new(x, 0.0)).collect();
        SpectrumTable::new(SpectrumKind::NoiseS, "t", omegas, v, false).unwrap()
    }

    fn uniform(n: usize) -> Vec<f64> {
        (0..n).map(|i| -1.0 + 0.1 * i as f64).collect()
    }

    #[test]
    fn derivative_of_constant_and_ramp() {
        let w = uniform(21);
        let d = spectrum_derivative(&table(vec![3.0; 21], w.clone())).unwrap();
        assert!(d.values.iter().all(|v| v.norm() == 0.0));
        assert_eq!(d.kind, SpectrumKind::NoiseDsDw);
        let ramp = table(w.iter().map(|x| 2.5 * x).collect(), w.clone());
        let d = spectrum_derivative(&ramp).unwrap();
        assert!(d.values.iter().all(|v| (v.re - 2.5).abs() < 1e-12));
    }

    #[test]
    fn derivative_peaks_at_a_step() {
        let w = uniform(41);
        let step = table(w.iter().map(|x| (x * 30.0).tanh()).collect(), w.clone());
        let d = spectrum_derivative(&step).unwrap();
        let k = (0..41).max_by(|&a, &b| d.values[a].re.total_cmp(&d.values[b].re)).unwrap();
        assert!(w[k].abs() < 1e-9);
    }

    #[test]
    fn derivative_rejects_nonuniform_grid() {
        let t = table(vec![0.0, 1.0, 2.0], vec![0.0, 0.1, 0.3]);
        assert!(matches!(spectrum_derivative(&t), Err(DeomError::NonUniformGrid)));
        let r = resample_uniform(&t, 4).unwrap();
        assert!(spectrum_derivative(&r).is_ok());
    }

    #[test]
    fn total_noise_examples() {
        let w = uniform(5);
        let s = table(vec![1.3; 5], w.clone());
        let t = total_noise(&s, &s, &s, 0.5, 0.5).unwrap();
        assert!(t.values.iter().all(|v| v.norm() < 1e-15));
        let zero = table(vec![0.0; 5], w.clone());
        let ll = table(vec![2.0; 5], w.clone());
        let rr = table(vec![4.0; 5], w.clone());
        let t = total_noise(&ll, &rr, &zero, 0.5, 0.5).unwrap();
        assert!(t.values.iter().all(|v| (v.re - 1.5).abs() < 1e-15));
        let other = table(vec![0.0; 4], uniform(4));
        assert!(matches!(total_noise(&ll, &rr, &other, 0.5, 0.5), Err(DeomError::GridMismatch)));
    }

    #[test]
    fn csv_round_trip() {
        let w = uniform(7);
        let v = w.iter().map(|x| C64::new(x.sin(), x * 0.3)).collect();
        let t = SpectrumTable::new(SpectrumKind::NoiseS, "(L,R)", w, v, true).unwrap().with_params("beta=10");
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = SpectrumTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid(12.0);
        assert_eq!(g.len(), 401);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!((g[0] + 24.0).abs() < 1e-12 && (g[400] - 24.0).abs() < 1e-12);
        assert!(g.iter().any(|&x| x == 0.0));
        for (a, b) in g.iter().zip(g.iter().rev()) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn parity_detection() {
        let ops = crate::model::build_fock_operators(2).unwrap();
        assert!(operator_parity(ops.annihilator(1)).unwrap());
        assert!(!operator_parity(&ops.number(0)).unwrap());
        let mixed = ops.number(0) + ops.annihilator(0);
        assert!(operator_parity(&mixed).is_err());
    }
}
