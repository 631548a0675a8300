//! Small dense/sparse helpers for operators on the impurity Fock space.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{DeomError, Result};

/// Entry list of a `dim × dim` complex matrix. Blocks it acts on are stored
/// row-major as flat slices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseOp {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    pub fn from_dense(m: &DMatrix<C64>, cutoff: f64) -> Self {
        let dim = m.nrows();
        let mut entries = Vec::new();
        for r in 0..dim {
            for c in 0..dim {
                let v = m[(r, c)];
                if v.norm() > cutoff {
                    entries.push((r, c, v));
                }
            }
        }
        SparseOp { dim, entries }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `out += coef · M x`
    #[inline]
    pub fn left_mul_add(&self, coef: C64, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for &(r, c, v) in &self.entries {
            let f = coef * v;
            let src = &x[c * d..(c + 1) * d];
            let dst = &mut out[r * d..(r + 1) * d];
            for (o, s) in dst.iter_mut().zip(src) {
                *o += f * s;
            }
        }
    }

    /// `out += coef · x M`
    #[inline]
    pub fn right_mul_add(&self, coef: C64, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for &(r, c, v) in &self.entries {
            let f = coef * v;
            for row in 0..d {
                out[row * d + c] += f * x[row * d + r];
            }
        }
    }
}

/// Eigenbasis of a Hermitian matrix, diagonalized separately on each
/// connected component of its sparsity graph so that symmetry sectors are
/// never mixed by degenerate eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    pub energies: Vec<f64>,
    /// Columns are eigenvectors in the original basis.
    pub vectors: DMatrix<C64>,
}

impl EigenBasis {
    pub fn new(h: &DMatrix<C64>) -> Result<Self> {
        let dim = h.nrows();
        if h.ncols() != dim {
            return Err(DeomError::Shape("Hamiltonian must be square".into()));
        }
        let scale = h.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let herm = (h - h.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if herm > 1e-12 * scale.max(1.0) {
            return Err(DeomError::Invalid(format!("Hamiltonian is not Hermitian (defect {herm:.2e})")));
        }
        let mut parent: Vec<usize> = (0..dim).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for r in 0..dim {
            for c in 0..r {
                if h[(r, c)].norm() > 0.0 {
                    let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                    parent[a] = b;
                }
            }
        }
        let mut components: Vec<Vec<usize>> = Vec::new();
        let mut root_of = vec![usize::MAX; dim];
        for i in 0..dim {
            let r = find(&mut parent, i);
            if root_of[r] == usize::MAX {
                root_of[r] = components.len();
                components.push(Vec::new());
            }
            components[root_of[r]].push(i);
        }
        let mut energies = vec![0.0; dim];
        let mut vectors = DMatrix::zeros(dim, dim);
        for comp in components {
            let n = comp.len();
            let sub = DMatrix::from_fn(n, n, |a, b| h[(comp[a], comp[b])]);
            let eig = SymmetricEigen::new(sub);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            // eigenvector k of the component occupies the column of the k-th
            // basis state of that component
            for (slot, &k) in order.iter().enumerate() {
                let col = comp[slot];
                energies[col] = eig.eigenvalues[k];
                for (a, &row) in comp.iter().enumerate() {
                    vectors[(row, col)] = eig.eigenvectors[(a, k)];
                }
            }
        }
        Ok(EigenBasis { energies, vectors })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `V† M V`
    pub fn to_eigen(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        self.vectors.adjoint() * m * &self.vectors
    }

    /// `V M V†`
    pub fn to_original(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        &self.vectors * m * self.vectors.adjoint()
    }
}

pub fn block_to_matrix(block: &[C64], dim: usize) -> DMatrix<C64> {
    DMatrix::from_row_slice(dim, dim, block)
}

pub fn matrix_to_block(m: &DMatrix<C64>) -> Vec<C64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            out.push(m[(r, c)]);
        }
    }
    out
}

pub fn trace(block: &[C64], dim: usize) -> C64 {
    (0..dim).map(|i| block[i * dim + i]).sum()
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}
