//! Impurity Fock space, Jordan–Wigner fermion operators and model Hamiltonians.
//!
//! Spin-orbitals are ordered site-major then spin: `(1↑, 1↓, 2↑, 2↓, …)`.
//! A Fock basis state is the integer whose bit `u` is the occupation of
//! orbital `u`; all fermionic signs are taken relative to that order.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{DeomError, Result};

pub const MAX_ORBITALS: usize = 8;

/// Creation (`+`) or annihilation (`-`) branch of a fermion operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Minus => Sign::Plus,
            Sign::Plus => Sign::Minus,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Minus => -1.0,
            Sign::Plus => 1.0,
        }
    }

    pub fn from_value(v: i32) -> Option<Sign> {
        match v {
            -1 => Some(Sign::Minus),
            1 => Some(Sign::Plus),
            _ => None,
        }
    }
}

/// Sparse form of a single fermion operator: every basis ket maps to at most
/// one ket with a ±1 sign, and the map is injective.
#[derive(Clone, Debug)]
pub struct FermionOp {
    /// `(row, col, sign)` with `op[row, col] = sign`.
    pub entries: Vec<(usize, usize, f64)>,
}

impl FermionOp {
    pub fn adjoint(&self) -> FermionOp {
        FermionOp {
            entries: self.entries.iter().map(|&(r, c, s)| (c, r, s)).collect(),
        }
    }

    pub fn to_dense(&self, dim: usize) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(dim, dim);
        for &(r, c, s) in &self.entries {
            m[(r, c)] = C64::new(s, 0.0);
        }
        m
    }

    /// `out += coef * (op · y)` for row-major `dim × dim` blocks.
    #[inline]
    pub fn left_mul_add(&self, coef: C64, y: &[C64], out: &mut [C64], dim: usize) {
        for &(r, k, s) in &self.entries {
            let c = coef * s;
            let src = &y[k * dim..(k + 1) * dim];
            let dst = &mut out[r * dim..(r + 1) * dim];
            for (d, v) in dst.iter_mut().zip(src) {
                *d += c * v;
            }
        }
    }

    /// `out += coef * (y · op)` for row-major `dim × dim` blocks.
    #[inline]
    pub fn right_mul_add(&self, coef: C64, y: &[C64], out: &mut [C64], dim: usize) {
        for &(r, k, s) in &self.entries {
            let c = coef * s;
            for i in 0..dim {
                out[i * dim + k] += c * y[i * dim + r];
            }
        }
    }
}

/// Annihilation operators of every spin-orbital on the impurity Fock space.
#[derive(Clone, Debug)]
pub struct FockOperatorSet {
    pub n_orbitals: usize,
    pub dim: usize,
    pub annihilators: Vec<DMatrix<C64>>,
    sparse: Vec<FermionOp>,
}

impl FockOperatorSet {
    pub fn annihilator(&self, u: usize) -> &DMatrix<C64> {
        &self.annihilators[u]
    }

    pub fn creator(&self, u: usize) -> DMatrix<C64> {
        self.annihilators[u].adjoint()
    }

    /// `a_u` for [`Sign::Minus`], `a_u†` for [`Sign::Plus`].
    pub fn sparse(&self, u: usize, sign: Sign) -> FermionOp {
        match sign {
            Sign::Minus => self.sparse[u].clone(),
            Sign::Plus => self.sparse[u].adjoint(),
        }
    }

    pub fn dense(&self, u: usize, sign: Sign) -> DMatrix<C64> {
        match sign {
            Sign::Minus => self.annihilators[u].clone(),
            Sign::Plus => self.creator(u),
        }
    }

    pub fn number(&self, u: usize) -> DMatrix<C64> {
        self.creator(u) * &self.annihilators[u]
    }

    pub fn total_number(&self) -> DMatrix<C64> {
        (0..self.n_orbitals).fold(DMatrix::zeros(self.dim, self.dim), |acc, u| {
            acc + self.number(u)
        })
    }

    pub fn identity(&self) -> DMatrix<C64> {
        DMatrix::identity(self.dim, self.dim)
    }
}

pub fn build_fock_operators(n_orbitals: usize) -> Result<FockOperatorSet> {
    if n_orbitals == 0 || n_orbitals > MAX_ORBITALS {
        return Err(DeomError::Size(format!(
            "n_orbitals must lie in 1..={MAX_ORBITALS}, got {n_orbitals}"
        )));
    }
    let dim = 1usize << n_orbitals;
    let mut sparse = Vec::with_capacity(n_orbitals);
    for u in 0..n_orbitals {
        let bit = 1usize << u;
        let below = bit - 1;
        let entries = (0..dim)
            .filter(|b| b & bit != 0)
            .map(|b| {
                let sign = if (b & below).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                (b ^ bit, b, sign)
            })
            .collect();
        sparse.push(FermionOp { entries });
    }
    let annihilators = sparse.iter().map(|op| op.to_dense(dim)).collect();
    Ok(FockOperatorSet {
        n_orbitals,
        dim,
        annihilators,
        sparse,
    })
}

/// Orbital index of `(site, spin)` with spin 0 = ↑ and 1 = ↓.
pub fn orbital(site: usize, spin: usize) -> usize {
    2 * site + spin
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DqdParameters {
    pub eps1: f64,
    pub eps2: f64,
    pub u: f64,
    pub u_c: f64,
    pub t_c: f64,
    pub n: i32,
}

impl DqdParameters {
    /// Parameters with both on-site energies taken from the filling scheme.
    pub fn with_scheme(u: f64, u_c: f64, t_c: f64, n: i32) -> Self {
        let eps = epsilon_from_scheme(u, u_c, n);
        DqdParameters {
            eps1: eps,
            eps2: eps,
            u,
            u_c,
            t_c,
            n,
        }
    }
}

/// On-site energy `-(U + 2 N U_C) / 2` that puts `N + 1` electrons on the
/// double dot at equilibrium.
pub fn epsilon_from_scheme(u: f64, u_c: f64, n: i32) -> f64 {
    -(u + 2.0 * n as f64 * u_c) / 2.0
}

fn require_orbitals(ops: &FockOperatorSet, n: usize) -> Result<()> {
    if ops.n_orbitals != n {
        return Err(DeomError::Shape(format!(
            "expected {n} spin-orbitals, operator set has {}",
            ops.n_orbitals
        )));
    }
    Ok(())
}

pub fn build_dqd_hamiltonian(p: &DqdParameters, ops: &FockOperatorSet) -> Result<DMatrix<C64>> {
    require_orbitals(ops, 4)?;
    let n = |site, spin| ops.number(orbital(site, spin));
    let n1 = n(0, 0) + n(0, 1);
    let n2 = n(1, 0) + n(1, 1);
    let mut h = &n1 * C64::from(p.eps1) + &n2 * C64::from(p.eps2);
    for site in 0..2 {
        h += n(site, 0) * n(site, 1) * C64::from(p.u);
    }
    h += &n1 * &n2 * C64::from(p.u_c);
    for spin in 0..2 {
        let a1 = ops.annihilator(orbital(0, spin));
        let a2 = ops.annihilator(orbital(1, spin));
        let hop = a1.adjoint() * a2 + a2.adjoint() * a1;
        h += hop * C64::from(p.t_c);
    }
    Ok(h)
}

/// Anderson single dot: `ε (n↑ + n↓) + U n↑ n↓`.
pub fn build_single_dot_hamiltonian(eps: f64, u: f64, ops: &FockOperatorSet) -> Result<DMatrix<C64>> {
    require_orbitals(ops, 2)?;
    let up = ops.number(0);
    let dn = ops.number(1);
    Ok((&up + &dn) * C64::from(eps) + up * dn * C64::from(u))
}

/// Spinless resonant level: `ε n`.
pub fn build_level_hamiltonian(eps: f64, ops: &FockOperatorSet) -> Result<DMatrix<C64>> {
    require_orbitals(ops, 1)?;
    Ok(ops.number(0) * C64::from(eps))
}

/// Impurity models the solver knows how to build.
#[derive(Clone, Debug, PartialEq)]
pub enum ImpurityModel {
    /// One spinless orbital.
    Level { eps: f64 },
    /// One site with spin.
    SingleDot { eps: f64, u: f64 },
    DoubleDot(DqdParameters),
}

impl ImpurityModel {
    pub fn n_orbitals(&self) -> usize {
        match self {
            ImpurityModel::Level { .. } => 1,
            ImpurityModel::SingleDot { .. } => 2,
            ImpurityModel::DoubleDot(_) => 4,
        }
    }

    pub fn hamiltonian(&self, ops: &FockOperatorSet) -> Result<DMatrix<C64>> {
        match self {
            ImpurityModel::Level { eps } => build_level_hamiltonian(*eps, ops),
            ImpurityModel::SingleDot { eps, u } => build_single_dot_hamiltonian(*eps, *u, ops),
            ImpurityModel::DoubleDot(p) => build_dqd_hamiltonian(p, ops),
        }
    }

    /// Orbitals the left (`lead = 0`) or right (`lead = 1`) reservoir couples to.
    /// For the double dot the left lead couples to dot 1, the right to dot 2.
    pub fn lead_orbitals(&self, lead: usize) -> Vec<usize> {
        match self {
            ImpurityModel::Level { .. } => vec![0],
            ImpurityModel::SingleDot { .. } => vec![0, 1],
            ImpurityModel::DoubleDot(_) => {
                let site = lead.min(1);
                vec![orbital(site, 0), orbital(site, 1)]
            }
        }
    }
}
