//! Coulomb-gauge diagnostics for sphere-valued fields.
//!
//! The connection is built as a lattice gauge field: on every edge `p -> q`
//! the frame at `q` is carried back to `p` by the minimal rotation taking
//! `u_q` to `u_p`, and the link angle `omega` is the angle of the carried
//! `e1` in the frame at `p`. Then `A = omega / h` approximates `<d e1, e2>`
//! at the edge midpoint, and rotating the frame by `theta` changes the link
//! by exactly `theta_q - theta_p`. The staggered divergence of the links can
//! therefore be removed exactly by one zero-Dirichlet Poisson solve.
//!
//! Complex notation: `phi_j = <d_j u, e1> + i <d_j u, e2>`, `a_j = i A_j`,
//! `z = alpha - i beta`, `kappa = 1`.

use crate::field::{gradient, Field};
use crate::grid::Grid;
use crate::linalg::{cross, dot, norm};
use crate::poisson::DirichletSolver;
use crate::sum::pairwise_sum_by;
use crate::targets::{SpinField, Target};
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)] // shadowed by inherent methods once std is linked
use num_traits::Float;

pub const MASK_THRESHOLD: f64 = 1e-3;
pub const MAX_MASKED_FRACTION: f64 = 0.01;
pub const COULOMB_REL_TOL: f64 = 1e-6;
pub const KAPPA: f64 = 1.0;

/// Reference directions tried in order by [`build_frame_auto`].
pub const REFERENCE_AXES: [[f64; 3]; 6] =
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];

/// Orthonormal tangent frame `(e1, e2 = u x e1)`; masked sites carry zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    e1: Field,
    e2: Field,
    mask: Vec<bool>,
    ghost: [[f64; 3]; 2],
    reference: [f64; 3],
}

impl Frame {
    pub fn e1(&self) -> &Field {
        &self.e1
    }

    pub fn e2(&self) -> &Field {
        &self.e2
    }

    /// `true` where the frame is undefined.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn reference(&self) -> [f64; 3] {
        self.reference
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn masked_fraction(&self) -> f64 {
        self.masked_count() as f64 / self.mask.len() as f64
    }

    fn frame_at(&self, i: isize, j: isize) -> (&[f64], &[f64]) {
        let n = self.e1.grid().n() as isize;
        if i < 0 || j < 0 || i >= n || j >= n {
            (&self.ghost[0], &self.ghost[1])
        } else {
            let k = self.e1.grid().index(i as usize, j as usize);
            (self.e1.site(k), self.e2.site(k))
        }
    }

    /// Rotates the frame at each site by `theta[k]`; the far-field frame is kept.
    pub fn rotate(&self, theta: &[f64]) -> Frame {
        let mut out = self.clone();
        for (k, &th) in theta.iter().enumerate() {
            let (c, s) = (th.cos(), th.sin());
            let a: [f64; 3] = self.e1.site(k).try_into().expect("3 components");
            let b: [f64; 3] = self.e2.site(k).try_into().expect("3 components");
            for q in 0..3 {
                out.e1.site_mut(k)[q] = c * a[q] + s * b[q];
                out.e2.site_mut(k)[q] = -s * a[q] + c * b[q];
            }
        }
        out
    }

    /// Rotates every site and the far-field frame by the same angle.
    pub fn rotate_constant(&self, theta: f64) -> Frame {
        let mut out = self.rotate(&vec![theta; self.mask.len()]);
        let (c, s) = (theta.cos(), theta.sin());
        let [a, b] = self.ghost;
        for q in 0..3 {
            out.ghost[0][q] = c * a[q] + s * b[q];
            out.ghost[1][q] = -s * a[q] + c * b[q];
        }
        out
    }
}

fn frame_vectors(y: &[f64], reference: &[f64; 3]) -> Option<([f64; 3], [f64; 3])> {
    let c = dot(reference, y);
    let p = [reference[0] - c * y[0], reference[1] - c * y[1], reference[2] - c * y[2]];
    let r = norm(&p);
    if r < MASK_THRESHOLD {
        return None;
    }
    let e1 = [p[0] / r, p[1] / r, p[2] / r];
    Some((e1, cross(y, &e1)))
}

/// `e1 = P_u(reference) / |P_u(reference)|`, masked where `|P_u(reference)| < 1e-3`.
pub fn build_frame(u: &SpinField, reference: [f64; 3]) -> Result<Frame> {
    if u.target() != Target::Sphere {
        return Err(Error::Unsupported("gauge diagnostics are sphere-only".into()));
    }
    let rn = norm(&reference);
    if !(rn > 0.0) {
        return Err(Error::InvalidParameter("zero reference vector".into()));
    }
    let reference = [reference[0] / rn, reference[1] / rn, reference[2] / rn];
    let ghost = frame_vectors(u.boundary(), &reference).ok_or_else(|| {
        Error::Gauge("reference is parallel to the far-field value; the frame degenerates at infinity".into())
    })?;
    let grid = *u.grid();
    let mut e1 = Field::zeros(grid, 3);
    let mut e2 = Field::zeros(grid, 3);
    let mut mask = vec![false; grid.len()];
    for (k, y) in u.field().sites().enumerate() {
        match frame_vectors(y, &reference) {
            Some((a, b)) => {
                e1.site_mut(k).copy_from_slice(&a);
                e2.site_mut(k).copy_from_slice(&b);
            }
            None => mask[k] = true,
        }
    }
    let frame = Frame { e1, e2, mask, ghost: [ghost.0, ghost.1], reference };
    let fraction = frame.masked_fraction();
    if fraction > MAX_MASKED_FRACTION {
        return Err(Error::DegenerateFrame { fraction });
    }
    Ok(frame)
}

/// Tries [`REFERENCE_AXES`] in order and returns the first admissible frame
/// with the fewest masked sites among those tried up to the first mask-free one.
pub fn build_frame_auto(u: &SpinField) -> Result<Frame> {
    let mut best: Option<Frame> = None;
    let mut last_err = None;
    for r in REFERENCE_AXES {
        match build_frame(u, r) {
            Ok(f) => {
                if f.masked_count() == 0 {
                    return Ok(f);
                }
                if best.as_ref().is_none_or(|b| f.masked_count() < b.masked_count()) {
                    best = Some(f);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::Gauge("no admissible reference".into())))
}

/// Link angles divided by `h`. `x[j (n+1) + i]` sits on the edge from site
/// `(i-1, j)` to `(i, j)`; `y[i (n+1) + j]` on the edge from `(i, j-1)` to
/// `(i, j)`. Indices `0` and `n` are edges to ghost sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Links {
    n: usize,
    h: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Links {
    #[inline]
    pub fn x_at(&self, i: usize, j: usize) -> f64 {
        self.x[j * (self.n + 1) + i]
    }

    #[inline]
    pub fn y_at(&self, i: usize, j: usize) -> f64 {
        self.y[i * (self.n + 1) + j]
    }

    /// Staggered divergence per site.
    pub fn divergence(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                d[j * n + i] = (self.x_at(i + 1, j) - self.x_at(i, j) + self.y_at(i, j + 1) - self.y_at(i, j)) / self.h;
            }
        }
        d
    }

    /// Site values: average of the two links meeting the site along each axis.
    pub fn site_average(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut a1 = vec![0.0; n * n];
        let mut a2 = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                a1[j * n + i] = 0.5 * (self.x_at(i, j) + self.x_at(i + 1, j));
                a2[j * n + i] = 0.5 * (self.y_at(i, j) + self.y_at(i, j + 1));
            }
        }
        (a1, a2)
    }
}

/// `R v` for the minimal rotation `R` taking unit `a` to unit `c`.
fn rotate_minimal(a: &[f64], c: &[f64], v: &[f64]) -> [f64; 3] {
    let w = cross(a, c);
    let cosp = dot(a, c);
    let wv = cross(&w, v);
    let wwv = cross(&w, &wv);
    let s = 1.0 / (1.0 + cosp);
    [v[0] + wv[0] + s * wwv[0], v[1] + wv[1] + s * wwv[1], v[2] + wv[2] + s * wwv[2]]
}

fn link_angle(up: &[f64], fp: (&[f64], &[f64]), uq: &[f64], fq: (&[f64], &[f64])) -> f64 {
    let t = rotate_minimal(uq, up, fq.0);
    dot(&t, fp.1).atan2(dot(&t, fp.0))
}

pub fn links(frame: &Frame, u: &SpinField) -> Links {
    let grid = *u.grid();
    let n = grid.n();
    let h = grid.spacing();
    let uf = u.field();
    let mut x = vec![0.0; (n + 1) * n];
    let mut y = vec![0.0; (n + 1) * n];
    for j in 0..n as isize {
        for i in 0..=n as isize {
            let (p, q) = ((i - 1, j), (i, j));
            x[j as usize * (n + 1) + i as usize] =
                link_angle(uf.at(p.0, p.1), frame.frame_at(p.0, p.1), uf.at(q.0, q.1), frame.frame_at(q.0, q.1)) / h;
        }
    }
    for i in 0..n as isize {
        for j in 0..=n as isize {
            let (p, q) = ((i, j - 1), (i, j));
            y[i as usize * (n + 1) + j as usize] =
                link_angle(uf.at(p.0, p.1), frame.frame_at(p.0, p.1), uf.at(q.0, q.1), frame.frame_at(q.0, q.1)) / h;
        }
    }
    Links { n, h, x, y }
}

fn l2(grid: &Grid, v: &[f64]) -> f64 {
    let h = grid.spacing();
    (h * h * pairwise_sum_by(v.len(), &|k| v[k] * v[k])).sqrt()
}

fn l2_pair(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let h = grid.spacing();
    (h * h * pairwise_sum_by(a.len(), &|k| a[k] * a[k] + b[k] * b[k])).sqrt()
}

fn l2_complex(grid: &Grid, a: &[Complex64], b: &[Complex64]) -> f64 {
    let h = grid.spacing();
    (h * h * pairwise_sum_by(a.len(), &|k| a[k].norm_sqr() + b[k].norm_sqr())).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoulombReport {
    /// Rotation angle applied at each site.
    pub theta: Vec<f64>,
    /// `||div A||_{L^2}` before and after.
    pub div_before: f64,
    pub div_after: f64,
    /// `||A||_{L^2}` of the site-averaged connection after fixing.
    pub a_l2: f64,
}

impl CoulombReport {
    pub fn relative_divergence(&self) -> f64 {
        if self.a_l2 == 0.0 {
            0.0
        } else {
            self.div_after / self.a_l2
        }
    }
}

/// Lattice degree: signed solid angles of the two triangles of every
/// plaquette, ghost ring included, over `4 pi`. An integer up to rounding
/// whenever neighbouring values are not antipodal.
pub fn lattice_degree(u: &SpinField) -> f64 {
    let n = u.grid().n() as isize;
    let f = u.field();
    let omega = |a: &[f64], b: &[f64], c: &[f64]| {
        let num = dot(a, &cross(b, c));
        let den = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
        2.0 * num.atan2(den)
    };
    let side = (n + 1) as usize;
    let total = pairwise_sum_by(side * side, &|k| {
        let (i, j) = ((k % side) as isize - 1, (k / side) as isize - 1);
        let (a, b, c, d) = (f.at(i, j), f.at(i + 1, j), f.at(i + 1, j + 1), f.at(i, j + 1));
        omega(a, b, c) + omega(a, c, d)
    });
    total / (4.0 * core::f64::consts::PI)
}

/// Rotates the frame by `theta` solving `lap theta = -div A` with zero
/// Dirichlet data, so the staggered divergence of the new links vanishes.
pub fn coulomb_fix(frame: &Frame, u: &SpinField) -> Result<(Frame, CoulombReport)> {
    let masked = frame.masked_count();
    if masked > 0 {
        return Err(Error::Gauge(format!("{masked} masked sites: no smooth global frame, Coulomb gauge undefined")));
    }
    let degree = lattice_degree(u);
    if degree.abs() > 0.5 {
        return Err(Error::Gauge(format!("map of degree {degree:.0}: no global frame, Coulomb gauge undefined")));
    }
    let grid = *u.grid();
    let before = links(frame, u);
    let div = before.divergence();
    let solver = DirichletSolver::new(grid);
    let rhs: Vec<f64> = div.iter().map(|d| -d).collect();
    let theta = solver.solve_poisson(&rhs);
    let fixed = frame.rotate(&theta);
    let after = links(&fixed, u);
    let div_after = l2(&grid, &after.divergence());
    let (a1, a2) = after.site_average();
    let rep = CoulombReport { theta, div_before: l2(&grid, &div), div_after, a_l2: l2_pair(&grid, &a1, &a2) };
    if rep.div_after > COULOMB_REL_TOL * rep.a_l2 + 1e-12 {
        return Err(Error::Gauge(format!(
            "Coulomb condition failed: ||div A|| = {:.3e}, ||A|| = {:.3e}",
            rep.div_after, rep.a_l2
        )));
    }
    Ok((fixed, rep))
}

/// Second snapshot for time differences: `phi_t` is built from
/// `(u - other) / dt`. A negative `dt` gives a forward difference.
#[derive(Debug, Clone, Copy)]
pub struct TimeDifference<'a> {
    pub other: &'a SpinField,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeData {
    grid: Grid,
    pub phi1: Vec<Complex64>,
    pub phi2: Vec<Complex64>,
    pub phit: Option<Vec<Complex64>>,
    /// `A_j` with `a_j = i A_j`, site averages of the frame links.
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    /// `A_t` from the Poisson equation, present with `phit`.
    pub at: Option<Vec<f64>>,
    /// `|P(u) d_1 u|^2 + |P(u) d_2 u|^2` with central differences.
    pub grad_sq: Vec<f64>,
    /// Frame-free `Im(phi_1 conj phi_2) = -<u, d_1 u x d_2 u>`.
    pub im12: Vec<f64>,
    pub mask: Vec<bool>,
    pub links: Links,
    pub kappa: f64,
}

impl GaugeData {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Staggered divergence norm of the frame connection, absolute and relative.
    pub fn divergence_l2(&self) -> (f64, f64) {
        let d = l2(&self.grid, &self.links.divergence());
        let a = l2_pair(&self.grid, &self.a1, &self.a2);
        (d, if a == 0.0 { 0.0 } else { d / a })
    }

    /// `1/2 integral (|phi_1|^2 + |phi_2|^2)`.
    pub fn energy(&self) -> f64 {
        let h = self.grid.spacing();
        0.5 * h * h * pairwise_sum_by(self.phi1.len(), &|k| self.phi1[k].norm_sqr() + self.phi2[k].norm_sqr())
    }
}

fn project_into(frame: &Frame, k: usize, v: &[f64]) -> Complex64 {
    Complex64::new(dot(v, frame.e1.site(k)), dot(v, frame.e2.site(k)))
}

/// Central difference of a scalar site array with zero ghosts.
fn cdiff<T>(v: &[T], n: usize, h: f64, i: usize, j: usize, axis: usize) -> T
where
    T: Copy + Default + core::ops::Sub<Output = T> + core::ops::Mul<f64, Output = T>,
{
    let get = |ii: isize, jj: isize| -> T {
        if ii < 0 || jj < 0 || ii >= n as isize || jj >= n as isize {
            T::default()
        } else {
            v[jj as usize * n + ii as usize]
        }
    };
    let (i, j) = (i as isize, j as isize);
    let (p, m) = if axis == 0 { (get(i + 1, j), get(i - 1, j)) } else { (get(i, j + 1), get(i, j - 1)) };
    (p - m) * (0.5 / h)
}

fn lap5<T>(v: &[T], n: usize, h: f64, i: usize, j: usize) -> T
where
    T: Copy + Default + core::ops::Add<Output = T> + core::ops::Sub<Output = T> + core::ops::Mul<f64, Output = T>,
{
    let get = |ii: isize, jj: isize| -> T {
        if ii < 0 || jj < 0 || ii >= n as isize || jj >= n as isize {
            T::default()
        } else {
            v[jj as usize * n + ii as usize]
        }
    };
    let (ii, jj) = (i as isize, j as isize);
    let c = get(ii, jj);
    (get(ii + 1, jj) + get(ii - 1, jj) + get(ii, jj + 1) + get(ii, jj - 1) - c * 4.0) * (1.0 / (h * h))
}

/// Differential fields, frame connection and, with a time partner, `phi_t`
/// and `A_t`.
pub fn differential_fields(frame: &Frame, u: &SpinField, time: Option<TimeDifference<'_>>) -> Result<GaugeData> {
    if u.target() != Target::Sphere {
        return Err(Error::Unsupported("gauge diagnostics are sphere-only".into()));
    }
    let grid = *u.grid();
    let n2 = grid.len();
    let (dx, dy) = gradient(u.field());
    let mut phi1 = vec![Complex64::new(0.0, 0.0); n2];
    let mut phi2 = vec![Complex64::new(0.0, 0.0); n2];
    let mut grad_sq = vec![0.0; n2];
    let mut im12 = vec![0.0; n2];
    let uf = u.field();
    for k in 0..n2 {
        let y = uf.site(k);
        let px = tangent(y, dx.site(k));
        let py = tangent(y, dy.site(k));
        grad_sq[k] = dot(&px, &px) + dot(&py, &py);
        im12[k] = -dot(y, &cross(&px, &py));
        if !frame.mask[k] {
            phi1[k] = project_into(frame, k, &px);
            phi2[k] = project_into(frame, k, &py);
        }
    }
    let lk = links(frame, u);
    let (a1, a2) = lk.site_average();
    let mut data = GaugeData {
        grid,
        phi1,
        phi2,
        phit: None,
        a1,
        a2,
        at: None,
        grad_sq,
        im12,
        mask: frame.mask.clone(),
        links: lk,
        kappa: KAPPA,
    };
    if let Some(td) = time {
        if td.other.grid() != u.grid() || !(td.dt != 0.0 && td.dt.is_finite()) {
            return Err(Error::InvalidParameter("time partner must share the grid and have dt != 0".into()));
        }
        let mut phit = vec![Complex64::new(0.0, 0.0); n2];
        for (k, p) in phit.iter_mut().enumerate() {
            if frame.mask[k] {
                continue;
            }
            let y = uf.site(k);
            let o = td.other.field().site(k);
            let v = [(y[0] - o[0]) / td.dt, (y[1] - o[1]) / td.dt, (y[2] - o[2]) / td.dt];
            *p = project_into(frame, k, &tangent(y, &v));
        }
        data.phit = Some(phit);
        data.at = Some(solve_at(&data));
    }
    Ok(data)
}

fn tangent(y: &[f64], v: &[f64]) -> [f64; 3] {
    let c = dot(v, y);
    [v[0] - c * y[0], v[1] - c * y[1], v[2] - c * y[2]]
}

/// `lap A_t = -d_i (kappa Im(phi_t conj phi_i))`.
fn solve_at(g: &GaugeData) -> Vec<f64> {
    let phit = g.phit.as_ref().expect("phi_t present");
    let n = g.grid.n();
    let h = g.grid.spacing();
    let f1: Vec<f64> = (0..n * n).map(|k| g.kappa * (phit[k] * g.phi1[k].conj()).im).collect();
    let f2: Vec<f64> = (0..n * n).map(|k| g.kappa * (phit[k] * g.phi2[k].conj()).im).collect();
    let mut rhs = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            rhs[j * n + i] = -(cdiff(&f1, n, h, i, j, 0) + cdiff(&f2, n, h, i, j, 1));
        }
    }
    DirichletSolver::new(g.grid).solve_poisson(&rhs)
}

/// Connection from the curvature equations with zero Dirichlet data:
/// `lap A_1 = d_2 (kappa Im(phi_2 conj phi_1))`,
/// `lap A_2 = d_1 (kappa Im(phi_1 conj phi_2))`, and `A_t` when available.
/// Uses only gauge-invariant products, so it is defined for any frame.
pub fn poisson_connection(g: &GaugeData) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let n = g.grid.n();
    let h = g.grid.spacing();
    let f: Vec<f64> = g.im12.iter().map(|v| g.kappa * v).collect();
    let mut r1 = vec![0.0; n * n];
    let mut r2 = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            r1[j * n + i] = -cdiff(&f, n, h, i, j, 1);
            r2[j * n + i] = cdiff(&f, n, h, i, j, 0);
        }
    }
    let solver = DirichletSolver::new(g.grid);
    (solver.solve_poisson(&r1), solver.solve_poisson(&r2), g.at.clone())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurlReport {
    pub l2: f64,
    pub max: f64,
}

/// Residual of `(d_1 + a_1) phi_2 - (d_2 + a_2) phi_1` on sites whose stencil
/// avoids masked sites.
pub fn curl_identity_residual(g: &GaugeData) -> CurlReport {
    let n = g.grid.n();
    let h = g.grid.spacing();
    let i_unit = Complex64::new(0.0, 1.0);
    let mut res = vec![0.0; n * n];
    let mut max = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            if stencil_masked(&g.mask, n, i, j) {
                continue;
            }
            let k = j * n + i;
            let r = cdiff(&g.phi2, n, h, i, j, 0) + i_unit * g.a1[k] * g.phi2[k]
                - cdiff(&g.phi1, n, h, i, j, 1)
                - i_unit * g.a2[k] * g.phi1[k];
            res[k] = r.norm();
            max = max.max(res[k]);
        }
    }
    CurlReport { l2: l2(&g.grid, &res), max }
}

fn stencil_masked(mask: &[bool], n: usize, i: usize, j: usize) -> bool {
    let at = |ii: isize, jj: isize| {
        ii >= 0 && jj >= 0 && ii < n as isize && jj < n as isize && mask[jj as usize * n + ii as usize]
    };
    let (i, j) = (i as isize, j as isize);
    at(i, j) || at(i + 1, j) || at(i - 1, j) || at(i, j + 1) || at(i, j - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionLpReport {
    pub p: f64,
    /// `||A||_{L^p}` of the Poisson connection.
    pub lhs: f64,
    /// `|| |grad u|^2 ||_{L^{p*}}`, `1/p* = 1/p + 1/2`.
    pub rhs: f64,
    pub ratio: f64,
    /// `||A_t||_{L^p}` against `|| |phi_t| |grad u| ||_{L^{p*}}` when `phi_t` exists.
    pub time: Option<(f64, f64, f64)>,
}

fn lp(grid: &Grid, v: &[f64], p: f64) -> f64 {
    let h = grid.spacing();
    (h * h * pairwise_sum_by(v.len(), &|k| v[k].abs().powf(p))).powf(1.0 / p)
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Empirical constant in `||a_j||_{L^p} <~ ||phi_k phi_j||_{L^{p*}}`.
pub fn connection_lp_audit(g: &GaugeData, p: f64) -> Result<ConnectionLpReport> {
    if !(p > 2.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p = {p} must lie in (2, inf)")));
    }
    let ps = 1.0 / (1.0 / p + 0.5);
    let (a1, a2, at) = poisson_connection(g);
    let amag: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| x.hypot(*y)).collect();
    let lhs = lp(&g.grid, &amag, p);
    let rhs = lp(&g.grid, &g.grad_sq, ps);
    let time = match (&at, &g.phit) {
        (Some(at), Some(phit)) => {
            let prod: Vec<f64> = phit.iter().zip(&g.grad_sq).map(|(f, s)| f.norm() * s.sqrt()).collect();
            let (l, r) = (lp(&g.grid, at, p), lp(&g.grid, &prod, ps));
            Some((l, r, ratio(l, r)))
        }
        _ => None,
    };
    Ok(ConnectionLpReport { p, lhs, rhs, ratio: ratio(lhs, rhs), time })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlReport {
    pub l2: f64,
    /// Residual relative to `||d_t phi||_{L^2}`.
    pub relative: f64,
}

/// Residual of the gauged evolution
/// `d_t phi_j + a_t phi_j = z (D_k D_k phi_j + i kappa Im(phi_j conj phi_k) phi_k)`
/// with `D_k D_k = lap + 2 a_k d_k + (d_k a_k) + a_k a_k`, forward difference
/// in time. `gk` must carry `phi_t` (and so `A_t`).
pub fn ginzburg_landau_residual(gk: &GaugeData, gk1: &GaugeData, dt: f64, alpha: f64, beta: f64) -> Result<GlReport> {
    if gk.mask != gk1.mask {
        return Err(Error::Gauge("frames are not continuously chosen: masks differ".into()));
    }
    if gk.grid != gk1.grid || !(dt > 0.0) {
        return Err(Error::InvalidParameter("snapshots must share the grid and dt > 0".into()));
    }
    let at =
        gk.at.as_ref().ok_or_else(|| Error::InvalidParameter("first snapshot needs a time partner for A_t".into()))?;
    let n = gk.grid.n();
    let h = gk.grid.spacing();
    let iu = Complex64::new(0.0, 1.0);
    let z = Complex64::new(alpha, -beta);
    let phis = [&gk.phi1, &gk.phi2];
    let phis1 = [&gk1.phi1, &gk1.phi2];
    let a = [&gk.a1, &gk.a2];
    let mut res = [vec![Complex64::new(0.0, 0.0); n * n], vec![Complex64::new(0.0, 0.0); n * n]];
    let mut dtphi = [vec![Complex64::new(0.0, 0.0); n * n], vec![Complex64::new(0.0, 0.0); n * n]];
    for j in 0..n {
        for i in 0..n {
            if stencil_masked(&gk.mask, n, i, j) {
                continue;
            }
            let k = j * n + i;
            let diva = cdiff(a[0], n, h, i, j, 0) + cdiff(a[1], n, h, i, j, 1);
            let a2sum = a[0][k] * a[0][k] + a[1][k] * a[1][k];
            for q in 0..2 {
                let phi = phis[q];
                let mut cov = lap5(phi, n, h, i, j) + iu * diva * phi[k] - a2sum * phi[k];
                for (ax, ak) in a.iter().enumerate() {
                    cov += iu * 2.0 * ak[k] * cdiff(phi, n, h, i, j, ax);
                }
                let mut curv = Complex64::new(0.0, 0.0);
                for other in phis {
                    curv += iu * gk.kappa * (phi[k] * other[k].conj()).im * other[k];
                }
                let d = (phis1[q][k] - phi[k]) / dt;
                dtphi[q][k] = d;
                res[q][k] = d + iu * at[k] * phi[k] - z * (cov + curv);
            }
        }
    }
    let l = l2_complex(&gk.grid, &res[0], &res[1]);
    let d = l2_complex(&gk.grid, &dtphi[0], &dtphi[1]);
    Ok(GlReport { l2: l, relative: ratio(l, d) })
}
