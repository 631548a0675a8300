//! Truncated dissipaton hierarchy: index enumeration, state storage and the
//! equation-of-motion generator.
//!
//! Each DDO is labelled by a fermionic occupation bit-set over the global mode
//! order of a [`ModeTable`]. Blocks are `dim × dim` row-major slices stored in
//! the eigenbasis of `H_S`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::bath::{DecompositionMethod, FitTarget, LorentzBath, ModeTable};
use crate::error::{DeomError, Result};
use crate::linalg::{self, EigenBasis, SparseOp};
use crate::model::{build_fock_operators, FockOperatorSet, ImpurityModel};

pub const MAX_MODES: usize = 64;
const NONE: u32 = u32::MAX;

/// Number of DDOs with at most `level` occupied modes out of `n_modes`.
pub fn ddo_count(n_modes: usize, level: usize) -> u128 {
    let mut total: u128 = 1;
    let mut binom: u128 = 1;
    for l in 1..=level.min(n_modes) {
        binom = binom * (n_modes - l + 1) as u128 / l as u128;
        total += binom;
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HierarchyIndex {
    pub bits: u64,
}

impl HierarchyIndex {
    pub const ROOT: HierarchyIndex = HierarchyIndex { bits: 0 };

    pub fn from_modes(modes: &[usize]) -> Self {
        HierarchyIndex {
            bits: modes.iter().fold(0, |b, &j| b | (1u64 << j)),
        }
    }

    pub fn tier(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn contains(self, j: usize) -> bool {
        self.bits >> j & 1 == 1
    }

    /// Occupied modes up to and including `j`.
    pub fn theta(self, j: usize) -> usize {
        let mask = if j >= 63 { u64::MAX } else { (1u64 << (j + 1)) - 1 };
        (self.bits & mask).count_ones() as usize
    }

    pub fn modes(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&j| self.bits >> j & 1 == 1)
    }

    /// `(−1)` to the number of occupied modes after `j`.
    pub fn sign_after(self, j: usize) -> f64 {
        let after = if j >= 63 { 0 } else { (self.bits >> (j + 1)).count_ones() };
        if after % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// All indices with at most `level` occupied modes, ordered by tier and then
/// lexicographically by their sorted mode lists.
pub fn enumerate_indices(n_modes: usize, level: usize) -> Result<Vec<HierarchyIndex>> {
    if n_modes > MAX_MODES {
        return Err(DeomError::Size(format!("at most {MAX_MODES} modes are supported, got {n_modes}")));
    }
    let count = ddo_count(n_modes, level);
    if count > usize::MAX as u128 / 2 {
        return Err(DeomError::Capacity {
            count,
            budget: usize::MAX as u128 / 2,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    out.push(HierarchyIndex::ROOT);
    let mut combo = Vec::new();
    for tier in 1..=level.min(n_modes) {
        combo.clear();
        combo.extend(0..tier);
        loop {
            out.push(HierarchyIndex::from_modes(&combo));
            // advance to the next combination in lexicographic order
            let mut i = tier;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if combo[i] < n_modes - tier + i {
                    combo[i] += 1;
                    for k in i + 1..tier {
                        combo[k] = combo[k - 1] + 1;
                    }
                    i = usize::MAX;
                    break;
                }
            }
            if i != usize::MAX {
                break;
            }
        }
    }
    Ok(out)
}

/// Bytes needed for one hierarchy state plus its neighbour table.
pub fn estimated_bytes(n_modes: usize, level: usize, dim: usize, states: usize) -> u128 {
    let count = ddo_count(n_modes, level);
    count * (16 * (dim * dim) as u128 * states as u128 + 4 * n_modes as u128 + 16)
}

/// Fail with a capacity error when `states` hierarchy states would not fit
/// in `budget_bytes`.
pub fn check_capacity(n_modes: usize, level: usize, dim: usize, states: usize, budget_bytes: u128) -> Result<()> {
    let need = estimated_bytes(n_modes, level, dim, states);
    if need > budget_bytes {
        let per_ddo = need / ddo_count(n_modes, level).max(1);
        return Err(DeomError::Capacity {
            count: ddo_count(n_modes, level),
            budget: budget_bytes / per_ddo.max(1),
        });
    }
    Ok(())
}

/// Enumerated indices with slot lookup and the precomputed neighbour table.
#[derive(Debug)]
pub struct IndexSet {
    pub n_modes: usize,
    pub level: usize,
    pub indices: Vec<HierarchyIndex>,
    slot_of: HashMap<u64, usize>,
    /// `neighbors[slot * n_modes + j]`: slot of the index with mode `j`
    /// toggled, or `NONE` above the truncation level.
    neighbors: Vec<u32>,
}

impl IndexSet {
    pub fn new(n_modes: usize, level: usize) -> Result<Self> {
        let indices = enumerate_indices(n_modes, level)?;
        if indices.len() >= NONE as usize {
            return Err(DeomError::Capacity {
                count: indices.len() as u128,
                budget: NONE as u128 - 1,
            });
        }
        let slot_of: HashMap<u64, usize> = indices.iter().enumerate().map(|(s, i)| (i.bits, s)).collect();
        let mut neighbors = vec![NONE; indices.len() * n_modes];
        for (s, idx) in indices.iter().enumerate() {
            for j in 0..n_modes {
                let other = idx.bits ^ (1u64 << j);
                if let Some(&t) = slot_of.get(&other) {
                    neighbors[s * n_modes + j] = t as u32;
                }
            }
        }
        Ok(IndexSet {
            n_modes,
            level,
            indices,
            slot_of,
            neighbors,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn slot(&self, idx: HierarchyIndex) -> Option<usize> {
        self.slot_of.get(&idx.bits).copied()
    }

    pub fn neighbor(&self, slot: usize, j: usize) -> Option<usize> {
        match self.neighbors[slot * self.n_modes + j] {
            NONE => None,
            t => Some(t as usize),
        }
    }

    pub fn tier_slots(&self, tier: usize) -> std::ops::Range<usize> {
        let start = self.indices.partition_point(|i| i.tier() < tier);
        let end = self.indices.partition_point(|i| i.tier() <= tier);
        start..end
    }
}

/// The full collection of DDOs.
///
/// `odd` marks states representing an operator of odd fermion parity (for
/// example `a† ρ`); it changes the sign of right-acting couplings.
#[derive(Clone, Debug)]
pub struct HierarchyState {
    pub index: Arc<IndexSet>,
    pub dim: usize,
    pub odd: bool,
    pub data: Vec<C64>,
}

impl HierarchyState {
    pub fn zeros(index: Arc<IndexSet>, dim: usize, odd: bool) -> Self {
        let n = index.len() * dim * dim;
        HierarchyState {
            index,
            dim,
            odd,
            data: vec![C64::default(); n],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.index.clone(), self.dim, self.odd)
    }

    pub fn block_len(&self) -> usize {
        self.dim * self.dim
    }

    pub fn block(&self, slot: usize) -> &[C64] {
        let b = self.block_len();
        &self.data[slot * b..(slot + 1) * b]
    }

    pub fn block_mut(&mut self, slot: usize) -> &mut [C64] {
        let b = self.block_len();
        &mut self.data[slot * b..(slot + 1) * b]
    }

    pub fn root(&self) -> DMatrix<C64> {
        linalg::block_to_matrix(self.block(0), self.dim)
    }

    pub fn root_trace(&self) -> C64 {
        linalg::trace(self.block(0), self.dim)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: C64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s · other`
    pub fn axpy(&mut self, s: C64, other: &HierarchyState) {
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += s * b);
    }

    pub fn block_norm(&self, slot: usize) -> f64 {
        self.block(slot).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Binary snapshot: `J, L, dim, count` as little-endian u64, then every
    /// block's real/imaginary pairs as little-endian f64.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        for v in [self.index.n_modes, self.index.level, self.dim, self.index.len()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for z in &self.data {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a snapshot written for the same index set.
    pub fn read_snapshot<R: Read>(mut r: R, index: Arc<IndexSet>, odd: bool) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut header = [0usize; 4];
        for h in header.iter_mut() {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word) as usize;
        }
        let [j, l, dim, count] = header;
        if j != index.n_modes || l != index.level || count != index.len() {
            return Err(DeomError::Shape(format!(
                "snapshot has J={j}, L={l}, count={count}; expected J={}, L={}, count={}",
                index.n_modes,
                index.level,
                index.len()
            )));
        }
        let mut state = Self::zeros(index, dim, odd);
        for z in state.data.iter_mut() {
            r.read_exact(&mut word)?;
            let re = f64::from_le_bytes(word);
            r.read_exact(&mut word)?;
            *z = C64::new(re, f64::from_le_bytes(word));
        }
        Ok(state)
    }
}

/// Right-hand side of the hierarchy equations for one impurity model and
/// mode table.
#[derive(Debug)]
pub struct Generator {
    pub index: Arc<IndexSet>,
    pub basis: EigenBasis,
    pub modes: ModeTable,
    pub dim: usize,
    /// `a_u^{σ_j}` in the eigenbasis.
    op_same: Vec<SparseOp>,
    /// `a_u^{σ̄_j}` in the eigenbasis.
    op_conj: Vec<SparseOp>,
    eta: Vec<C64>,
    /// `(η_{j̄})*`
    eta_bar_conj: Vec<C64>,
    gamma_sum: Vec<C64>,
}

impl Generator {
    pub fn new(h_s: &DMatrix<C64>, ops: &FockOperatorSet, modes: ModeTable, level: usize) -> Result<Self> {
        if h_s.nrows() != ops.dim || h_s.ncols() != ops.dim {
            return Err(DeomError::Shape(format!(
                "Hamiltonian is {}x{}, Fock space has dimension {}",
                h_s.nrows(),
                h_s.ncols(),
                ops.dim
            )));
        }
        if let Some(m) = modes.modes.iter().find(|m| m.u >= ops.n_orbitals) {
            return Err(DeomError::Shape(format!("mode couples to orbital {} outside the system", m.u)));
        }
        let index = Arc::new(IndexSet::new(modes.len(), level)?);
        Self::with_index(h_s, ops, modes, index)
    }

    /// Decompose the reservoirs and build the generator for an impurity model.
    pub fn from_model(
        model: &ImpurityModel,
        baths: &[LorentzBath],
        target: FitTarget,
        method: DecompositionMethod,
        level: usize,
    ) -> Result<(FockOperatorSet, Self)> {
        let ops = build_fock_operators(model.n_orbitals())?;
        let h = model.hamiltonian(&ops)?;
        let table = ModeTable::build(baths, target, method)?;
        let gen = Self::new(&h, &ops, table, level)?;
        Ok((ops, gen))
    }

    pub fn with_index(
        h_s: &DMatrix<C64>,
        ops: &FockOperatorSet,
        modes: ModeTable,
        index: Arc<IndexSet>,
    ) -> Result<Self> {
        if index.n_modes != modes.len() {
            return Err(DeomError::Shape("index set and mode table disagree on J".into()));
        }
        let basis = EigenBasis::new(h_s)?;
        let to_sparse = |m: DMatrix<C64>| SparseOp::from_dense(&basis.to_eigen(&m), 1e-14);
        let op_same = modes.modes.iter().map(|m| to_sparse(ops.dense(m.u, m.sigma))).collect();
        let op_conj = modes.modes.iter().map(|m| to_sparse(ops.dense(m.u, m.sigma.flip()))).collect();
        let eta: Vec<C64> = modes.modes.iter().map(|m| m.eta).collect();
        let eta_bar_conj = (0..modes.len()).map(|j| eta[modes.conjugate(j)].conj()).collect();
        let gamma_sum = index
            .indices
            .iter()
            .map(|i| i.modes().map(|j| modes.modes[j].gamma).sum())
            .collect();
        Ok(Generator {
            dim: ops.dim,
            index,
            basis,
            modes,
            op_same,
            op_conj,
            eta,
            eta_bar_conj,
            gamma_sum,
        })
    }

    pub fn n_ddos(&self) -> usize {
        self.index.len()
    }

    pub fn zero_state(&self, odd: bool) -> HierarchyState {
        HierarchyState::zeros(self.index.clone(), self.dim, odd)
    }

    /// Product state: the given system density matrix (original basis) at
    /// the root, all higher tiers empty.
    pub fn product_state(&self, rho_s: &DMatrix<C64>) -> HierarchyState {
        let mut s = self.zero_state(false);
        let b = linalg::matrix_to_block(&self.basis.to_eigen(rho_s));
        s.block_mut(0).copy_from_slice(&b);
        s
    }

    /// Total decay rate `Σ_{j∈n} γ_j` of a slot.
    pub fn gamma_sum(&self, slot: usize) -> C64 {
        self.gamma_sum[slot]
    }

    /// Diagonal part `i(E_a − E_b) + Σ γ` at matrix entry `(a, b)`.
    pub fn diagonal(&self, slot: usize, a: usize, b: usize) -> C64 {
        let e = &self.basis.energies;
        C64::new(0.0, e[a] - e[b]) + self.gamma_sum[slot]
    }

    /// True when no mode couples to the system.
    pub fn is_decoupled(&self) -> bool {
        self.modes.is_empty() || self.eta.iter().chain(&self.eta_bar_conj).all(|e| e.norm() == 0.0)
    }

    /// `out = G x` where `dx/dt = G x`.
    pub fn apply(&self, x: &HierarchyState, out: &mut HierarchyState) {
        self.apply_parts(x, out, true);
    }

    /// Only the tier-coupling terms of the generator.
    pub fn apply_coupling(&self, x: &HierarchyState, out: &mut HierarchyState) {
        self.apply_parts(x, out, false);
    }

    fn apply_parts(&self, x: &HierarchyState, out: &mut HierarchyState, with_diagonal: bool) {
        assert_eq!(x.data.len(), out.data.len(), "state size mismatch");
        out.odd = x.odd;
        let bl = self.dim * self.dim;
        out.data
            .par_chunks_mut(bl)
            .enumerate()
            .for_each(|(slot, blk)| {
                blk.iter_mut().for_each(|v| *v = C64::default());
                if with_diagonal {
                    let xb = x.block(slot);
                    for a in 0..self.dim {
                        for b in 0..self.dim {
                            blk[a * self.dim + b] = -self.diagonal(slot, a, b) * xb[a * self.dim + b];
                        }
                    }
                }
                self.coupling_into(slot, x, blk);
            });
    }

    /// Add the tier-coupling contributions to output slot `slot`.
    pub fn coupling_into(&self, slot: usize, x: &HierarchyState, blk: &mut [C64]) {
        let idx = self.index.indices[slot];
        let tier = idx.tier();
        let parity = x.odd as usize;
        let minus_i = C64::new(0.0, -1.0);
        for j in 0..self.index.n_modes {
            let Some(nb) = self.index.neighbor(slot, j) else { continue };
            let s = idx.sign_after(j);
            let y = x.block(nb);
            if idx.contains(j) {
                let rs = if (tier - 1 + parity) % 2 == 0 { 1.0 } else { -1.0 };
                self.op_same[j].left_mul_add(minus_i * s * self.eta[j], y, blk);
                self.op_same[j].right_mul_add(-minus_i * s * rs * self.eta_bar_conj[j], y, blk);
            } else {
                let rs = if (tier + 1 + parity) % 2 == 0 { 1.0 } else { -1.0 };
                self.op_conj[j].left_mul_add(minus_i * s, y, blk);
                self.op_conj[j].right_mul_add(minus_i * s * rs, y, blk);
            }
        }
    }

    /// Operator given in the original Fock basis, converted to the eigenbasis.
    pub fn to_eigen(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        self.basis.to_eigen(m)
    }

    pub fn to_original(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        self.basis.to_original(m)
    }

    /// Root block in the original Fock basis.
    pub fn root_density(&self, state: &HierarchyState) -> DMatrix<C64> {
        self.basis.to_original(&state.root())
    }

    pub(crate) fn op_same(&self, j: usize) -> &SparseOp {
        &self.op_same[j]
    }

    pub(crate) fn op_conj(&self, j: usize) -> &SparseOp {
        &self.op_conj[j]
    }

    pub(crate) fn eta(&self, j: usize) -> C64 {
        self.eta[j]
    }
}
