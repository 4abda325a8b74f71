//! Zero-Dirichlet solves of the 5-point operator by the type-I sine transform.
//!
//! With ghost sites held at zero, the 5-point Laplacian on an `n x n`
//! cell-centered grid is diagonalized by `sin(pi k (i + 1) / (n + 1))`,
//! `k = 1..=n`, with eigenvalues `-(4 / h^2) sin^2(pi k / (2 (n + 1)))` per
//! axis. Both the Poisson problem and the IMEX Helmholtz problem
//! `(I - c lap) x = f` are diagonal in that basis.

use crate::fft::FftPlan;
use crate::grid::Grid;
use crate::par::for_each_chunk;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)] // shadowed by inherent methods once std is linked
use num_traits::Float;

#[derive(Debug, Clone)]
pub struct DirichletSolver {
    grid: Grid,
    plan: FftPlan,
    /// Per-axis eigenvalues of the 1-D second difference.
    eig: Vec<f64>,
}

impl DirichletSolver {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n();
        let h = grid.spacing();
        let eig = (1..=n)
            .map(|k| {
                let s = (PI * k as f64 / (2.0 * (n + 1) as f64)).sin();
                -4.0 * s * s / (h * h)
            })
            .collect();
        Self { grid, plan: FftPlan::new(2 * (n + 1)), eig }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Eigenvalue of the 2-D 5-point operator for mode `(kx, ky)`, 1-based.
    pub fn eigenvalue(&self, kx: usize, ky: usize) -> f64 {
        self.eig[kx - 1] + self.eig[ky - 1]
    }

    /// In-place unnormalized DST-I along every row of a row-major `n x n`
    /// array. Rows are transformed two at a time through one complex FFT.
    fn dst_rows(&self, a: &mut [f64]) {
        let n = self.grid.n();
        let big = 2 * (n + 1);
        let plan = &self.plan;
        for_each_chunk(a, 2 * n, |_, rows| {
            let mut buf = vec![Complex64::new(0.0, 0.0); big];
            let mut scratch = Vec::new();
            let (r0, r1) = rows.split_at_mut(n);
            let have_second = !r1.is_empty();
            for j in 0..n {
                let b = if have_second { r1[j] } else { 0.0 };
                let v = Complex64::new(r0[j], b);
                buf[j + 1] = v;
                buf[big - 1 - j] = -v;
            }
            plan.forward(&mut buf, &mut scratch);
            for k in 0..n {
                let y = buf[k + 1];
                r0[k] = -0.5 * y.im;
                if have_second {
                    r1[k] = 0.5 * y.re;
                }
            }
        });
    }

    fn transpose(&self, a: &mut [f64]) {
        let n = self.grid.n();
        for j in 0..n {
            for i in j + 1..n {
                a.swap(j * n + i, i * n + j);
            }
        }
    }

    /// Forward 2-D sine coefficients (unnormalized).
    fn forward2(&self, a: &mut [f64]) {
        self.dst_rows(a);
        self.transpose(a);
        self.dst_rows(a);
        self.transpose(a);
    }

    fn apply_diagonal<F: Fn(f64) -> f64>(&self, rhs: &[f64], symbol: F) -> Vec<f64> {
        let n = self.grid.n();
        assert_eq!(rhs.len(), n * n);
        let mut a = rhs.to_vec();
        self.forward2(&mut a);
        let norm = {
            let s = 2.0 / (n + 1) as f64;
            s * s
        };
        for ky in 0..n {
            for kx in 0..n {
                let lam = self.eig[kx] + self.eig[ky];
                a[ky * n + kx] *= symbol(lam) * norm;
            }
        }
        self.forward2(&mut a);
        a
    }

    /// Solves `lap x = rhs` with zero ghost values.
    pub fn solve_poisson(&self, rhs: &[f64]) -> Vec<f64> {
        self.apply_diagonal(rhs, |lam| 1.0 / lam)
    }

    /// Solves `(I - c lap) x = rhs` with zero ghost values, `c >= 0`.
    pub fn solve_helmholtz(&self, rhs: &[f64], c: f64) -> Vec<f64> {
        self.apply_diagonal(rhs, |lam| 1.0 / (1.0 - c * lam))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{laplacian, Field};

    #[test]
    fn solve_then_apply_is_identity() {
        for &n in &[16usize, 30, 64] {
            let g = Grid::new(n, 2.5).unwrap();
            let rhs: Vec<f64> = (0..n * n).map(|k| ((k * 7919) % 113) as f64 / 113.0 - 0.5).collect();
            let s = DirichletSolver::new(g);
            let x = s.solve_poisson(&rhs);
            let f = Field::scalar_from_values(g, x).unwrap();
            let back = laplacian(&f);
            for (a, b) in back.values().iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-10, "n = {n}");
            }
        }
    }

    #[test]
    fn eigenmode_solve_exact() {
        let g = Grid::new(32, 1.0).unwrap();
        let n = g.n();
        let s = DirichletSolver::new(g);
        let (kx, ky) = (4usize, 9usize);
        let mode: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = ((k % n) as f64 + 1.0, (k / n) as f64 + 1.0);
                (PI * kx as f64 * i / (n + 1) as f64).sin() * (PI * ky as f64 * j / (n + 1) as f64).sin()
            })
            .collect();
        let lam = s.eigenvalue(kx, ky);
        let x = s.solve_poisson(&mode);
        for (a, b) in x.iter().zip(&mode) {
            assert!((a * lam - b).abs() < 1e-12);
        }
        let c = 0.37;
        let y = s.solve_helmholtz(&mode, c);
        for (a, b) in y.iter().zip(&mode) {
            assert!((a * (1.0 - c * lam) - b).abs() < 1e-12);
        }
    }
}
