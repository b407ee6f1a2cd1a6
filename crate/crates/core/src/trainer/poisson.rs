//! Finite-difference reference for `-Δu = 1` on the L-shaped domain.
//!
//! Five-point stencil on the uniform 201 x 201 grid over `[-1,1]^2`, zero
//! Dirichlet data on the outline, solved directly with a banded Cholesky
//! factorization. Nodes in the removed quadrant hold 0.

use std::sync::OnceLock;

use crate::separable::FactorizedBatch;

/// Nodes per axis of the reference grid.
pub const POISSON_NODES: usize = 201;

/// The reference grid and nodal values (first axis slowest), computed once.
pub fn poisson_reference() -> &'static (FactorizedBatch, Vec<f64>) {
    static CACHE: OnceLock<(FactorizedBatch, Vec<f64>)> = OnceLock::new();
    CACHE.get_or_init(|| {
        let batch = FactorizedBatch::uniform(&[(-1.0, 1.0); 2], &[POISSON_NODES; 2]).expect("valid grid");
        (batch, solve_lshape(POISSON_NODES))
    })
}

/// Solves on an `n x n` node grid; returns values indexed `i * n + j` with
/// `i` the x index and `j` the y index.
pub fn solve_lshape(n: usize) -> Vec<f64> {
    assert!(n >= 5 && n % 2 == 1, "grid needs an odd node count so x = 0 is a node");
    let h = 2.0 / (n - 1) as f64;
    let mid = (n - 1) / 2;
    let unknown = |i: usize, j: usize| i > 0 && j > 0 && i < n - 1 && j < n - 1 && !(i >= mid && j >= mid);
    // Unknowns numbered with x fastest so vertical neighbours are at most one row apart.
    let mut index = vec![usize::MAX; n * n];
    let mut nodes = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if unknown(i, j) {
                index[i * n + j] = nodes.len();
                nodes.push((i, j));
            }
        }
    }
    let size = nodes.len();
    let mut band = 0;
    for &(i, j) in &nodes {
        let k = index[i * n + j];
        if unknown(i, j - 1) {
            band = band.max(k - index[i * n + j - 1]);
        }
    }
    let mut mat = BandedSpd::zeros(size, band);
    for &(i, j) in &nodes {
        let k = index[i * n + j];
        mat.set(k, k, 4.0);
        for (ni, nj) in [(i - 1, j), (i, j - 1)] {
            if unknown(ni, nj) {
                mat.set(k, index[ni * n + nj], -1.0);
            }
        }
    }
    mat.factor();
    let mut rhs = vec![h * h; size];
    mat.solve(&mut rhs);
    let mut out = vec![0.0; n * n];
    for (k, &(i, j)) in nodes.iter().enumerate() {
        out[i * n + j] = rhs[k];
    }
    out
}

/// Lower band of a symmetric positive definite matrix, row-major with
/// `data[k * (b + 1) + (k - l)]` holding entry `(k, l)` for `k - b <= l <= k`.
struct BandedSpd {
    n: usize,
    b: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    fn zeros(n: usize, b: usize) -> Self {
        Self {
            n,
            b,
            data: vec![0.0; n * (b + 1)],
        }
    }

    fn at(&self, k: usize, l: usize) -> f64 {
        self.data[k * (self.b + 1) + (k - l)]
    }

    fn set(&mut self, k: usize, l: usize, v: f64) {
        self.data[k * (self.b + 1) + (k - l)] = v;
    }

    /// In-place Cholesky `A = L L^T`.
    fn factor(&mut self) {
        let b = self.b;
        for k in 0..self.n {
            let k0 = k.saturating_sub(b);
            for l in k0..=k {
                let q0 = k0.max(l.saturating_sub(b));
                let mut sum = self.at(k, l);
                for q in q0..l {
                    sum -= self.at(k, q) * self.at(l, q);
                }
                let v = if l == k { sum.sqrt() } else { sum / self.at(l, l) };
                self.set(k, l, v);
            }
        }
    }

    /// Solves `L L^T x = rhs` in place.
    fn solve(&self, rhs: &mut [f64]) {
        let b = self.b;
        for k in 0..self.n {
            let mut s = rhs[k];
            for l in k.saturating_sub(b)..k {
                s -= self.at(k, l) * rhs[l];
            }
            rhs[k] = s / self.at(k, k);
        }
        for k in (0..self.n).rev() {
            let mut s = rhs[k];
            for l in k + 1..(k + b + 1).min(self.n) {
                s -= self.at(l, k) * rhs[l];
            }
            rhs[k] = s / self.at(k, k);
        }
    }
}
