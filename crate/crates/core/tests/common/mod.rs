//! Independent reference solutions shared by the integration tests.
#![allow(dead_code)]

use deom::bath::{DissipatonMode, ModeTable};
use deom::model::{build_fock_operators, FockOperatorSet, Sign};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

/// One discrete reservoir level coupled to system orbital `u`.
#[derive(Clone, Copy, Debug)]
pub struct Level {
    pub lead: usize,
    pub u: usize,
    pub eps: f64,
    pub t: f64,
    pub occupation: f64,
}

/// Impurity plus a handful of discrete reservoir levels, solved exactly.
pub struct FockOracle {
    pub n_sys: usize,
    pub ops: FockOperatorSet,
    pub levels: Vec<Level>,
    pub h: DMatrix<C64>,
    energies: Vec<f64>,
    vectors: DMatrix<C64>,
}

impl FockOracle {
    pub fn new(h_s: &DMatrix<C64>, n_sys: usize, levels: Vec<Level>) -> Self {
        let n = n_sys + levels.len();
        let ops = build_fock_operators(n).unwrap();
        let dim = ops.dim;
        let ds = 1usize << n_sys;
        let mut h = DMatrix::<C64>::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                if r >> n_sys == c >> n_sys {
                    h[(r, c)] = h_s[(r & (ds - 1), c & (ds - 1))];
                }
            }
        }
        for (k, l) in levels.iter().enumerate() {
            let c = ops.annihilator(n_sys + k);
            let a = ops.annihilator(l.u);
            h += ops.creator(n_sys + k) * c * C64::new(l.eps, 0.0);
            h += (a.adjoint() * c + c.adjoint() * a) * C64::new(l.t, 0.0);
        }
        let eig = SymmetricEigen::new(h.clone());
        FockOracle {
            n_sys,
            ops,
            levels,
            h,
            energies: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.ops.dim
    }

    /// System operator embedded in the full space (system orbitals come first
    /// in the Jordan–Wigner order, so no string reaches the reservoir).
    pub fn embed(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let ds = 1usize << self.n_sys;
        DMatrix::from_fn(self.dim(), self.dim(), |r, c| {
            if r >> self.n_sys == c >> self.n_sys {
                m[(r & (ds - 1), c & (ds - 1))]
            } else {
                C64::default()
            }
        })
    }

    pub fn product_state(&self, rho_s: &DMatrix<C64>) -> DMatrix<C64> {
        let ds = 1usize << self.n_sys;
        DMatrix::from_fn(self.dim(), self.dim(), |r, c| {
            let (br, bc) = (r >> self.n_sys, c >> self.n_sys);
            if br != bc {
                return C64::default();
            }
            let p: f64 = self
                .levels
                .iter()
                .enumerate()
                .map(|(k, l)| if br >> k & 1 == 1 { l.occupation } else { 1.0 - l.occupation })
                .product();
            rho_s[(r & (ds - 1), c & (ds - 1))] * p
        })
    }

    pub fn evolve(&self, x: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
        let phase = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            self.energies.iter().map(|e| C64::new(0.0, -e * t).exp()),
        ));
        let u = &self.vectors * phase * self.vectors.adjoint();
        &u * x * u.adjoint()
    }

    pub fn reduce(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let ds = 1usize << self.n_sys;
        let nb = self.dim() / ds;
        DMatrix::from_fn(ds, ds, |s, t| (0..nb).map(|b| x[(s | b << self.n_sys, t | b << self.n_sys)]).sum())
    }

    /// `Î_α = −i Σ (a† F − F† a)` over the levels of lead `alpha`.
    pub fn current_operator(&self, alpha: usize) -> DMatrix<C64> {
        let mut f_part = DMatrix::<C64>::zeros(self.dim(), self.dim());
        for (k, l) in self.levels.iter().enumerate() {
            if l.lead != alpha {
                continue;
            }
            let c = self.ops.annihilator(self.n_sys + k);
            f_part += self.ops.creator(l.u) * c * C64::new(l.t, 0.0);
        }
        (&f_part - f_part.adjoint()) * C64::new(0.0, -1.0)
    }

    /// Dissipaton modes reproducing the reservoir exactly: each level gives
    /// `C^+(t) = t² f e^{iεt}` and `C^-(t) = t² (1−f) e^{−iεt}`.
    pub fn mode_table(&self, n_leads: usize) -> ModeTable {
        let mut modes = Vec::new();
        let mut counter = vec![0usize; 64];
        for l in &self.levels {
            let key = l.lead * 8 + l.u;
            let k = counter[key];
            counter[key] += 1;
            let t2 = l.t * l.t;
            modes.push(DissipatonMode {
                alpha: l.lead,
                u: l.u,
                sigma: Sign::Plus,
                eta: C64::new(t2 * l.occupation, 0.0),
                gamma: C64::new(0.0, -l.eps),
                k,
            });
            modes.push(DissipatonMode {
                alpha: l.lead,
                u: l.u,
                sigma: Sign::Minus,
                eta: C64::new(t2 * (1.0 - l.occupation), 0.0),
                gamma: C64::new(0.0, l.eps),
                k,
            });
        }
        let labels = (0..n_leads).map(|i| format!("lead{i}")).collect();
        ModeTable::from_modes(modes, labels, true).unwrap()
    }
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn fermi(beta: f64, x: f64) -> f64 {
    let y = beta * x;
    if y > 0.0 {
        let e = (-y).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + y.exp())
    }
}

/// Lorentzian hybridization `Σ(ω) = Σ_α Δ_α W_α / (ω − μ_α + i W_α)` of a
/// reservoir with `J(ω) = Δ W² / ((ω−μ)² + W²)`.
pub fn lorentz_self_energy(omega: f64, leads: &[(f64, f64, f64)]) -> C64 {
    leads
        .iter()
        .map(|&(delta, w, mu)| delta * w / C64::new(omega - mu, w))
        .sum()
}

/// Spectral function `−Im G / π` of a single level `eps`.
pub fn resonant_level_spectrum(omega: f64, eps: f64, leads: &[(f64, f64, f64)]) -> f64 {
    let g = 1.0 / (omega - eps - lorentz_self_energy(omega, leads));
    -g.im / std::f64::consts::PI
}

pub fn lorentz_j(omega: f64, delta: f64, w: f64) -> f64 {
    delta * w * w / (omega * omega + w * w)
}

/// Landauer current out of the left reservoir for one spinless level.
pub fn landauer_current(eps: f64, left: (f64, f64, f64), right: (f64, f64, f64), beta: f64) -> f64 {
    let f = |om: f64| {
        let jl = lorentz_j(om - left.2, left.0, left.1);
        let jr = lorentz_j(om - right.2, right.0, right.1);
        let g = 1.0 / (om - eps - lorentz_self_energy(om, &[left, right]));
        4.0 * jl * jr * g.norm_sqr() * (fermi(beta, om - left.2) - fermi(beta, om - right.2))
    };
    simpson(f, -400.0, 400.0, 400_000) / (2.0 * std::f64::consts::PI)
}

pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}
