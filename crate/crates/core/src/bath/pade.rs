//! Padé pole expansion of the Fermi function,
//! `1/(1+e^x) ≈ 1/2 − Σ_m 2 r_m x / (x² + ξ_m²)`,
//! obtained from the truncated continued fraction of `tanh`.

use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Clone, Debug, PartialEq)]
pub struct FermiPade {
    /// Pole positions `ξ_m > 0` (in units of `βω`), ascending.
    pub xi: Vec<f64>,
    /// Residue weights `r_m`.
    pub weight: Vec<f64>,
}

impl FermiPade {
    /// `n_poles` pole pairs from the depth-`2 n_poles` continued fraction.
    pub fn new(n_poles: usize) -> Self {
        if n_poles == 0 {
            return FermiPade {
                xi: vec![],
                weight: vec![],
            };
        }
        let m = 2 * n_poles;
        let mut t = DMatrix::<f64>::zeros(m, m);
        for k in 1..m {
            let off = 1.0 / (((2 * k - 1) * (2 * k + 1)) as f64).sqrt();
            t[(k - 1, k)] = off;
            t[(k, k - 1)] = off;
        }
        let eig = SymmetricEigen::new(t);
        let mut s: Vec<f64> = eig
            .eigenvalues
            .iter()
            .filter(|&&l| l > 0.0)
            .map(|&l| 1.0 / l)
            .collect();
        s.sort_by(f64::total_cmp);
        s.truncate(n_poles);

        let mut xi = Vec::with_capacity(n_poles);
        let mut weight = Vec::with_capacity(n_poles);
        for sm in s {
            let u0 = -sm * sm;
            let (a, _, _, db) = convergents(m, u0);
            weight.push(a / (2.0 * db));
            xi.push(2.0 * sm);
        }
        FermiPade { xi, weight }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// Approximant evaluated at complex `x`.
    pub fn fermi(&self, x: num_complex::Complex64) -> num_complex::Complex64 {
        let mut f = num_complex::Complex64::new(0.5, 0.0);
        for (xi, r) in self.xi.iter().zip(&self.weight) {
            f -= 2.0 * r * x / (x * x + xi * xi);
        }
        f
    }
}

/// Numerator/denominator of `1/(1 + u/(3 + u/(5 + …)))` at depth `m`, with
/// their `u`-derivatives: `(A, A', B, B')`.
fn convergents(m: usize, u: f64) -> (f64, f64, f64, f64) {
    let (mut a_prev, mut a) = (1.0, 0.0);
    let (mut da_prev, mut da) = (0.0, 0.0);
    let (mut b_prev, mut b) = (0.0, 1.0);
    let (mut db_prev, mut db) = (0.0, 0.0);
    for k in 1..=m {
        let bk = (2 * k - 1) as f64;
        let (ak, dak) = if k == 1 { (1.0, 0.0) } else { (u, 1.0) };
        let a_new = bk * a + ak * a_prev;
        let da_new = bk * da + ak * da_prev + dak * a_prev;
        let b_new = bk * b + ak * b_prev;
        let db_new = bk * db + ak * db_prev + dak * b_prev;
        a_prev = a;
        a = a_new;
        da_prev = da;
        da = da_new;
        b_prev = b;
        b = b_new;
        db_prev = db;
        db = db_new;
    }
    (a, da, b, db)
}
