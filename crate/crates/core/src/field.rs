//! Discrete calculus on the truncated plane.
//!
//! Fields carry a constant `boundary` value that stands in for every ghost
//! site outside the grid, so the 5-point and central stencils are total.

use crate::grid::{Grid, Point};
use crate::linalg::{dist_sq, norm_sq};
use crate::par::for_each_chunk;
use crate::sum::{pairwise_sum, pairwise_sum_by};
use crate::targets::{covariant_hessian, Target};
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods once std is linked
use num_traits::Float;

/// An `m`-component real field on a [`Grid`], row-major, component-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    comps: usize,
    data: Vec<f64>,
    boundary: Vec<f64>,
}

impl Field {
    /// Field equal to its boundary value everywhere.
    pub fn constant(grid: Grid, boundary: &[f64]) -> Self {
        let comps = boundary.len();
        let mut data = Vec::with_capacity(grid.len() * comps);
        for _ in 0..grid.len() {
            data.extend_from_slice(boundary);
        }
        Self { grid, comps, data, boundary: boundary.to_vec() }
    }

    pub fn zeros(grid: Grid, comps: usize) -> Self {
        Self::constant(grid, &vec![0.0; comps])
    }

    pub fn from_fn<F>(grid: Grid, boundary: &[f64], f: F) -> Self
    where
        F: Fn(Point, &mut [f64]),
    {
        let mut out = Self::constant(grid, boundary);
        let m = out.comps;
        for (k, site) in out.data.chunks_mut(m).enumerate() {
            f(grid.point_of(k), site);
        }
        out
    }

    pub fn from_values(grid: Grid, comps: usize, data: Vec<f64>, boundary: &[f64]) -> Result<Self> {
        if comps == 0 || boundary.len() != comps {
            return Err(Error::ShapeMismatch(format!(
                "boundary has {} components, field declares {comps}",
                boundary.len()
            )));
        }
        if data.len() != grid.len() * comps {
            return Err(Error::ShapeMismatch(format!("expected {} values, got {}", grid.len() * comps, data.len())));
        }
        let out = Self { grid, comps, data, boundary: boundary.to_vec() };
        out.check_finite()?;
        Ok(out)
    }

    pub fn scalar_from_values(grid: Grid, data: Vec<f64>) -> Result<Self> {
        Self::from_values(grid, 1, data, &[0.0])
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn comps(&self) -> usize {
        self.comps
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn boundary(&self) -> &[f64] {
        &self.boundary
    }

    pub fn set_boundary(&mut self, boundary: &[f64]) {
        assert_eq!(boundary.len(), self.comps);
        self.boundary.copy_from_slice(boundary);
    }

    #[inline]
    pub fn site(&self, k: usize) -> &[f64] {
        &self.data[k * self.comps..(k + 1) * self.comps]
    }

    #[inline]
    pub fn site_mut(&mut self, k: usize) -> &mut [f64] {
        let m = self.comps;
        &mut self.data[k * m..(k + 1) * m]
    }

    /// Value at `(i, j)` with the ghost convention outside the grid.
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> &[f64] {
        let n = self.grid.n() as isize;
        if i < 0 || j < 0 || i >= n || j >= n {
            &self.boundary
        } else {
            self.site(self.grid.index(i as usize, j as usize))
        }
    }

    pub fn sites(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.comps)
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            let k = pos / self.comps;
            let n = self.grid.n();
            return Err(Error::NonFinite { i: k % n, j: k / n });
        }
        Ok(())
    }

    /// `a * self + b * other`, boundary values combined the same way.
    pub fn combine(&self, a: f64, other: &Field, b: f64) -> Field {
        assert_eq!(self.data.len(), other.data.len());
        let mut out = self.clone();
        for (o, (x, y)) in out.data.iter_mut().zip(self.data.iter().zip(&other.data)) {
            *o = a * x + b * y;
        }
        for (o, (x, y)) in out.boundary.iter_mut().zip(self.boundary.iter().zip(&other.boundary)) {
            *o = a * x + b * y;
        }
        out
    }

    /// One component as a scalar field (ghost value taken from the boundary).
    pub fn component(&self, c: usize) -> Field {
        let data = self.sites().map(|s| s[c]).collect();
        Field { grid: self.grid, comps: 1, data, boundary: vec![self.boundary[c]] }
    }

    /// Largest site-wise Euclidean distance between two fields.
    pub fn max_distance(&self, other: &Field) -> f64 {
        self.sites().zip(other.sites()).map(|(a, b)| dist_sq(a, b)).fold(0.0, f64::max).sqrt()
    }
}

/// 5-point Laplacian with ghost sites equal to the boundary value.
pub fn laplacian(f: &Field) -> Field {
    let grid = *f.grid();
    let n = grid.n();
    let m = f.comps();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let mut out = Field::zeros(grid, m);
    out.set_boundary(&vec![0.0; m]);
    for_each_chunk(out.values_mut(), n * m, |j, row| {
        let j = j as isize;
        for i in 0..n {
            let ii = i as isize;
            let c = f.at(ii, j);
            let (l, r, d, u) = (f.at(ii - 1, j), f.at(ii + 1, j), f.at(ii, j - 1), f.at(ii, j + 1));
            for k in 0..m {
                row[i * m + k] = (l[k] + r[k] + d[k] + u[k] - 4.0 * c[k]) * inv_h2;
            }
        }
    });
    out
}

/// Central-difference gradient `(d/dx f, d/dy f)`.
pub fn gradient(f: &Field) -> (Field, Field) {
    let grid = *f.grid();
    let n = grid.n();
    let m = f.comps();
    let inv_2h = 0.5 / grid.spacing();
    let mut dx = Field::zeros(grid, m);
    let mut dy = Field::zeros(grid, m);
    for_each_chunk(dx.values_mut(), n * m, |j, row| {
        let j = j as isize;
        for i in 0..n {
            let ii = i as isize;
            let (l, r) = (f.at(ii - 1, j), f.at(ii + 1, j));
            for k in 0..m {
                row[i * m + k] = (r[k] - l[k]) * inv_2h;
            }
        }
    });
    for_each_chunk(dy.values_mut(), n * m, |j, row| {
        let j = j as isize;
        for i in 0..n {
            let ii = i as isize;
            let (d, u) = (f.at(ii, j - 1), f.at(ii, j + 1));
            for k in 0..m {
                row[i * m + k] = (u[k] - d[k]) * inv_2h;
            }
        }
    });
    (dx, dy)
}

/// Midpoint-rule integral `h^2 * sum` of a scalar field (pairwise reduction).
pub fn integrate(f: &Field) -> f64 {
    debug_assert_eq!(f.comps(), 1);
    let h = f.grid().spacing();
    h * h * pairwise_sum(f.values())
}

/// Midpoint-rule integral of per-site values.
pub fn integrate_sites(grid: &Grid, values: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), grid.len());
    grid.spacing() * grid.spacing() * pairwise_sum(values)
}

/// Squared central-difference gradient `|d_x u|^2 + |d_y u|^2` per site.
pub fn central_grad_sq(u: &Field) -> Vec<f64> {
    let (dx, dy) = gradient(u);
    dx.sites().zip(dy.sites()).map(|(a, b)| norm_sq(a) + norm_sq(b)).collect()
}

/// Edge form of `|grad u|^2` per site: `(1 / 2h^2) * sum over the four
/// neighbours of |u_nbr - u|^2`, ghosts included.
///
/// For unit-length fields with a unit-length ghost this is exactly
/// `-<lap u, u>`, which makes the literal sphere right-hand side agree with
/// the projected one.
pub fn edge_grad_sq(u: &Field) -> Vec<f64> {
    let grid = *u.grid();
    let n = grid.n();
    let inv = 0.5 / (grid.spacing() * grid.spacing());
    let mut out = vec![0.0; grid.len()];
    for_each_chunk(&mut out, n, |j, row| {
        let j = j as isize;
        for (i, o) in row.iter_mut().enumerate() {
            let ii = i as isize;
            let c = u.at(ii, j);
            *o = inv
                * (dist_sq(u.at(ii - 1, j), c)
                    + dist_sq(u.at(ii + 1, j), c)
                    + dist_sq(u.at(ii, j - 1), c)
                    + dist_sq(u.at(ii, j + 1), c));
        }
    });
    out
}

/// Site density of the discrete Dirichlet energy `E = 1/2 * sum over
/// interior edges |du|^2 / h^2 * h^2`: each interior edge is split evenly
/// between its two sites, so `h^2 * sum(density)` is the energy of the map on
/// the box. Edges to ghost sites are left out; see [`boundary_jump_energy`].
pub fn energy_density(u: &Field) -> Field {
    let grid = *u.grid();
    let n = grid.n();
    let inv = 1.0 / (grid.spacing() * grid.spacing());
    let mut out = Field::zeros(grid, 1);
    for_each_chunk(out.values_mut(), n, |j, row| {
        let last = n as isize - 1;
        let j = j as isize;
        for (i, o) in row.iter_mut().enumerate() {
            let ii = i as isize;
            let c = u.at(ii, j);
            let mut e = 0.0;
            for (ni, nj) in [(ii - 1, j), (ii + 1, j), (ii, j - 1), (ii, j + 1)] {
                let ghost = ni < 0 || nj < 0 || ni > last || nj > last;
                if !ghost {
                    e += 0.25 * dist_sq(u.at(ni, nj), c);
                }
            }
            *o = e * inv;
        }
    });
    out
}

/// Discrete Dirichlet energy `1/2 * integral |grad u|^2` over the box.
pub fn dirichlet_energy(u: &Field) -> f64 {
    integrate(&energy_density(u))
}

/// `1/2 * sum |u - boundary|^2` over the edges from boundary sites to ghost
/// sites. Zero when the field matches its far-field constant at the edge.
pub fn boundary_jump_energy(u: &Field) -> f64 {
    let n = u.grid().n();
    let b = u.boundary();
    let mut terms = Vec::with_capacity(4 * n);
    for t in 0..n {
        for k in [u.grid().index(t, 0), u.grid().index(t, n - 1), u.grid().index(0, t), u.grid().index(n - 1, t)] {
            terms.push(0.5 * dist_sq(u.site(k), b));
        }
    }
    pairwise_sum(&terms)
}

/// Energy whose gradient is exactly minus the 5-point Laplacian with the
/// constant ghost: [`dirichlet_energy`] plus [`boundary_jump_energy`]. The
/// time steppers dissipate this functional.
pub fn flow_energy(u: &Field) -> f64 {
    dirichlet_energy(u) + boundary_jump_energy(u)
}

/// `integral |grad u|^4` with the edge form of `|grad u|^2`.
pub fn l4_gradient_norm4(u: &Field) -> f64 {
    let g = edge_grad_sq(u);
    let grid = u.grid();
    grid.spacing() * grid.spacing() * pairwise_sum_by(g.len(), &|k| g[k] * g[k])
}

const BALL_SLACK: f64 = 1e-12;

#[inline]
fn in_ball(p: Point, center: Point, radius: f64) -> bool {
    let dx = p.x - center.x;
    let dy = p.y - center.y;
    dx * dx + dy * dy <= radius * radius * (1.0 + BALL_SLACK)
}

/// Energy in the closed ball `B(center, radius)`: `h^2` times the sum of the
/// energy density over sites in the ball.
pub fn local_energy(u: &Field, center: Point, radius: f64) -> f64 {
    local_sum(&energy_density(u), center, radius)
}

/// `h^2 * sum` of a scalar site field over the sites in a ball. Terms are
/// added in row-major order, which keeps the result monotone in the radius.
pub fn local_sum(density: &Field, center: Point, radius: f64) -> f64 {
    let grid = density.grid();
    let h = grid.spacing();
    let n = grid.n();
    let span = (radius / h).ceil() as isize + 1;
    let (ci, cj) = grid.nearest_site(center);
    let lo = |c: usize| (c as isize - span).max(0) as usize;
    let hi = |c: usize| ((c as isize + span) as usize).min(n - 1);
    let mut s = 0.0;
    for j in lo(cj)..=hi(cj) {
        for i in lo(ci)..=hi(ci) {
            if in_ball(grid.point(i, j), center, radius) {
                s += density.values()[grid.index(i, j)];
            }
        }
    }
    s * h * h
}

/// Result of a sup-over-centers local energy scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupLocal {
    pub value: f64,
    pub center: Point,
    pub site: (usize, usize),
}

/// Maximum of the local energy over centers on the `stride`-subsampled site
/// lattice. Ties resolve to the lowest row-major site.
pub fn sup_local_energy(u: &Field, radius: f64, stride: usize) -> SupLocal {
    sup_local_sum(&energy_density(u), radius, stride)
}

/// [`sup_local_energy`] for a precomputed density. Row prefix sums make each
/// center cost one lookup per row of the ball.
pub fn sup_local_sum(density: &Field, radius: f64, stride: usize) -> SupLocal {
    let stride = stride.max(1);
    let grid = *density.grid();
    let n = grid.n();
    let h = grid.spacing();
    let vals = density.values();
    let mut prefix = vec![0.0; n * (n + 1)];
    for j in 0..n {
        let base = j * (n + 1);
        for i in 0..n {
            prefix[base + i + 1] = prefix[base + i] + vals[j * n + i];
        }
    }
    let r_sites = radius / h;
    let r2 = r_sites * r_sites * (1.0 + BALL_SLACK);
    let span = r_sites.floor() as isize;
    let half_widths: Vec<isize> = (0..=span)
        .map(|dj| {
            let rem = r2 - (dj * dj) as f64;
            if rem < 0.0 {
                -1
            } else {
                let mut w = rem.sqrt().floor() as isize;
                while ((w + 1) * (w + 1)) as f64 <= rem {
                    w += 1;
                }
                while w >= 0 && (w * w) as f64 > rem {
                    w -= 1;
                }
                w
            }
        })
        .collect();
    let mut best = SupLocal { value: f64::NEG_INFINITY, center: grid.point(0, 0), site: (0, 0) };
    let nn = n as isize;
    for cj in (0..n).step_by(stride) {
        for ci in (0..n).step_by(stride) {
            let mut s = 0.0;
            for dj in -span..=span {
                let j = cj as isize + dj;
                if j < 0 || j >= nn {
                    continue;
                }
                let w = half_widths[dj.unsigned_abs()];
                if w < 0 {
                    continue;
                }
                let i0 = (ci as isize - w).max(0) as usize;
                let i1 = ((ci as isize + w).min(nn - 1) + 1) as usize;
                let base = j as usize * (n + 1);
                s += prefix[base + i1] - prefix[base + i0];
            }
            let s = s * h * h;
            if s > best.value {
                best = SupLocal { value: s, center: grid.point(ci, cj), site: (ci, cj) };
            }
        }
    }
    best
}

/// Outcome of a pointwise Kato inequality check `|grad |grad u|| <= |Hess u|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KatoReport {
    pub checked_sites: usize,
    pub violation_count: usize,
    /// Largest positive excess `|grad |grad u|| - |Hess u|` over checked sites.
    pub max_violation: f64,
    /// Discretization slack used for counting, `h * max |grad u|^3`.
    pub slack: f64,
}

/// Sites with `|grad u|` below this are skipped.
pub const KATO_DELTA: f64 = 1e-6;

/// Compares `|grad |grad u||` against the covariant Hessian norm site-wise.
pub fn kato_audit(u: &Field, target: Target) -> KatoReport {
    let grid = *u.grid();
    let h = grid.spacing();
    let g: Vec<f64> = central_grad_sq(u).into_iter().map(|v| v.sqrt()).collect();
    let gfield = Field::from_values(grid, 1, g, &[0.0]).expect("finite gradient");
    let (gx, gy) = gradient(&gfield);
    let hess = covariant_hessian(u, target);
    let gmax = gfield.values().iter().fold(0.0f64, |a, &b| a.max(b));
    let slack = h * gmax * gmax * gmax;
    let mut rep = KatoReport { checked_sites: 0, violation_count: 0, max_violation: 0.0, slack };
    let n = grid.n();
    for k in 0..grid.len() {
        let (i, j) = (k % n, k / n);
        if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
            continue;
        }
        if gfield.values()[k] <= KATO_DELTA {
            continue;
        }
        rep.checked_sites += 1;
        let lhs = (gx.values()[k].powi(2) + gy.values()[k].powi(2)).sqrt();
        let rhs = hess.norm_at(k);
        let excess = lhs - rhs;
        if excess > rep.max_violation {
            rep.max_violation = excess;
        }
        if excess > slack {
            rep.violation_count += 1;
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn grid(n: usize, l: f64) -> Grid {
        Grid::new(n, l).unwrap()
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let f = Field::constant(grid(32, 2.0), &[0.3, -1.0, 2.0]);
        assert!(laplacian(&f).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_discrete_eigenmode() {
        let g = grid(64, 3.0);
        let n = g.n();
        let h = g.spacing();
        let (kx, ky) = (3usize, 5usize);
        let ax = kx as f64 * PI / (n + 1) as f64;
        let ay = ky as f64 * PI / (n + 1) as f64;
        let f = Field::from_fn(g, &[0.0], |p, out| {
            let i = g.fractional(p.x) + 1.0;
            let j = g.fractional(p.y) + 1.0;
            out[0] = (ax * i).sin() * (ay * j).sin();
        });
        let ev = -(4.0 / (h * h)) * ((ax / 2.0).sin().powi(2) + (ay / 2.0).sin().powi(2));
        let lap = laplacian(&f);
        for (a, b) in lap.values().iter().zip(f.values()) {
            assert!((a - ev * b).abs() < 1e-10 * ev.abs());
        }
    }

    #[test]
    fn laplacian_exact_on_quadratic() {
        let g = grid(32, 4.0);
        let f = Field::from_fn(g, &[0.0], |p, o| o[0] = p.x * p.x);
        let lap = laplacian(&f);
        for j in 2..30 {
            for i in 2..30 {
                let v = lap.values()[g.index(i, j)];
                assert!((v - 2.0).abs() < 1e-12 * 2.0, "{v}");
            }
        }
    }

    #[test]
    fn gradient_exact_on_affine() {
        let g = grid(32, 4.0);
        let f = Field::from_fn(g, &[0.0], |p, o| o[0] = 3.0 * p.x - 2.0 * p.y);
        let (dx, dy) = gradient(&f);
        for j in 1..31 {
            for i in 1..31 {
                let k = g.index(i, j);
                assert!((dx.values()[k] - 3.0).abs() < 1e-12);
                assert!((dy.values()[k] + 2.0).abs() < 1e-12);
            }
        }
        let c = Field::constant(g, &[1.5]);
        let (cx, cy) = gradient(&c);
        assert!(cx.values().iter().chain(cy.values()).all(|&v| v == 0.0));
    }

    #[test]
    fn integrate_area_and_gaussian() {
        let g = grid(64, 16.0);
        let one = Field::constant(g, &[1.0]);
        assert_eq!(integrate(&one), 1024.0);
        let g = grid(256, 16.0);
        let gauss = Field::from_fn(g, &[0.0], |p, o| o[0] = (-(p.x * p.x + p.y * p.y)).exp());
        assert!((integrate(&gauss) - PI).abs() < 1e-6 * PI);
    }

    #[test]
    fn integration_by_parts_for_compact_fields() {
        let g = grid(48, 3.0);
        let bump = |p: Point, a: f64| {
            let r2 = p.x * p.x + p.y * p.y;
            if r2 < 4.0 {
                let s = 1.0 - r2 / 4.0;
                s * s * s * (1.0 + a * p.x)
            } else {
                0.0
            }
        };
        let f = Field::from_fn(g, &[0.0], |p, o| o[0] = bump(p, 0.3));
        let gg = Field::from_fn(g, &[0.0], |p, o| o[0] = bump(p, -0.7) * p.y);
        let lap = laplacian(&gg);
        let lhs: f64 = f.values().iter().zip(lap.values()).map(|(a, b)| a * b).sum();
        // forward-difference Dirichlet form
        let n = g.n();
        let h = g.spacing();
        let mut rhs = 0.0;
        for j in 0..n as isize {
            for i in 0..n as isize {
                let c = f.at(i, j)[0];
                let d = gg.at(i, j)[0];
                rhs += (f.at(i + 1, j)[0] - c) * (gg.at(i + 1, j)[0] - d);
                rhs += (f.at(i, j + 1)[0] - c) * (gg.at(i, j + 1)[0] - d);
            }
        }
        let lhs = lhs * h * h;
        assert!((lhs + rhs).abs() < 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn local_energy_of_constant_is_zero() {
        let f = Field::constant(grid(32, 2.0), &[0.0, 0.0, 1.0]);
        assert_eq!(local_energy(&f, Point::ORIGIN, 1.0), 0.0);
        let s = sup_local_energy(&f, 1.0, 1);
        assert_eq!(s.value, 0.0);
        assert_eq!(s.site, (0, 0));
    }

    #[test]
    fn sup_local_matches_direct_at_sites() {
        let g = grid(32, 4.0);
        let f = Field::from_fn(g, &[0.0, 0.0], |p, o| {
            o[0] = (-(p.x - 1.0).powi(2) - p.y * p.y).exp();
            o[1] = (p.x * p.y * 0.3).sin() * (-(p.x * p.x + p.y * p.y) / 4.0).exp();
        });
        let dens = energy_density(&f);
        for &r in &[0.25, 0.6, 1.0, 2.2] {
            let s = sup_local_sum(&dens, r, 1);
            let direct = local_sum(&dens, s.center, r);
            assert!((s.value - direct).abs() < 1e-12 * direct.max(1e-30));
            for k in (0..g.len()).step_by(37) {
                assert!(local_sum(&dens, g.point_of(k), r) <= s.value * (1.0 + 1e-12));
            }
        }
    }
}
