//! Trajectory audits of the energy inequalities and the concentration
//! detector.
//!
//! Local energies here are `1/2 integral_B |grad u|^2`, the same density as
//! [`crate::field::energy_density`]; empirical constants are reported on that
//! scale.

use crate::field::{central_grad_sq, edge_grad_sq, energy_density, local_sum, sup_local_sum, Field};
use crate::grid::{Grid, Point};
use crate::ledger::EnergyLedger;
use crate::linalg::{dist_sq, norm_sq};
use crate::sum::pairwise_sum_by;
use crate::targets::{covariant_hessian, tension, SpinField};
use crate::{Error, Result};
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // shadowed by inherent methods once std is linked
use num_traits::Float;

/// `4 pi / 8`.
pub const DEFAULT_EPS1: f64 = PI / 2.0;
/// Concentration must show at or below this radius to be flagged.
pub const DEFAULT_FLAG_RADIUS: f64 = 1.0;
/// Sites within this many cells of the box edge are left out of the
/// second-order audits: the ghost jump of slowly decaying tails is not a
/// property of the map.
pub const EDGE_MARGIN: usize = 2;

/// Largest `|E(0) - E(t) - diss_cum(t)|` over the ledger rows.
pub fn dissipation_residual(ledger: &EnergyLedger) -> f64 {
    ledger.dissipation_residual()
}

fn interior(grid: &Grid, margin: usize) -> impl Fn(usize) -> bool {
    let n = grid.n();
    move |k| {
        let (i, j) = (k % n, k / n);
        i >= margin && j >= margin && i + margin < n && j + margin < n
    }
}

fn masked_integral(grid: &Grid, margin: usize, f: impl Fn(usize) -> f64) -> f64 {
    let keep = interior(grid, margin);
    let h = grid.spacing();
    h * h * pairwise_sum_by(grid.len(), &|k| if keep(k) { f(k) } else { 0.0 })
}

/// `integral |Hess u|^2` with the covariant Hessian, away from the box edge.
pub fn hessian_energy(u: &SpinField) -> f64 {
    let hess = covariant_hessian(u.field(), u.target());
    masked_integral(u.grid(), EDGE_MARGIN, |k| hess.norm_sq_at(k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MnbvReport {
    pub lhs: f64,
    /// `R_N integral |grad u|^4`.
    pub curvature_term: f64,
    /// `||tau||_{L^2}^2`.
    pub tension_term: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub slack: f64,
}

impl MnbvReport {
    pub fn relative_slack(&self) -> f64 {
        if self.rhs == 0.0 {
            0.0
        } else {
            self.slack / self.rhs
        }
    }
}

/// `integral |Hess u|^2 <= R_N integral |grad u|^4 + integral |tau|^2`.
pub fn mnbv_audit(u: &SpinField) -> MnbvReport {
    let grid = u.grid();
    let lhs = hessian_energy(u);
    let g = central_grad_sq(u.field());
    let curvature_term = u.target().curvature_bound() * masked_integral(grid, EDGE_MARGIN, |k| g[k] * g[k]);
    let tau = tension(u);
    let tension_term = masked_integral(grid, EDGE_MARGIN, |k| norm_sq(tau.site(k)));
    let rhs = curvature_term + tension_term;
    MnbvReport { lhs, curvature_term, tension_term, rhs, slack: rhs - lhs }
}

/// One stored state of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub u: SpinField,
    /// `integral_0^t ||d_t u||^2`.
    pub dissipated: f64,
}

fn check_trajectory(traj: &[Snapshot]) -> Result<()> {
    let Some(first) = traj.first() else {
        return Err(Error::InvalidParameter("empty trajectory".into()));
    };
    for w in traj.windows(2) {
        if !(w[1].t > w[0].t) || w[1].u.grid() != first.u.grid() {
            return Err(Error::InvalidParameter("snapshots must share the grid and have increasing t".into()));
        }
    }
    Ok(())
}

fn trapezoid(ts: &[f64], vals: &[f64]) -> f64 {
    ts.windows(2).zip(vals.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadyzhenskayaReport {
    pub radius: f64,
    /// `integral integral |grad u|^4`.
    pub lhs: f64,
    /// `eps(R) = max_t sup_x E(u(t); B_R(x))`.
    pub eps: f64,
    pub hessian: f64,
    /// `T / R^2 * E(u_0)`.
    pub energy_term: f64,
    pub rhs: f64,
    /// `lhs / rhs`, 0 when both vanish.
    pub constant: f64,
}

/// `integral integral |grad u|^4 <= c eps(R) (integral integral |Hess u|^2 + T / R^2 E(u_0))`.
/// Time integrals use the trapezoid rule over the snapshots.
pub fn ladyzhenskaya_audit(traj: &[Snapshot], radius: f64, stride: usize) -> Result<LadyzhenskayaReport> {
    check_trajectory(traj)?;
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius = {radius}")));
    }
    let ts: Vec<f64> = traj.iter().map(|s| s.t).collect();
    let mut l4 = Vec::with_capacity(traj.len());
    let mut hess = Vec::with_capacity(traj.len());
    let mut eps = 0.0f64;
    for s in traj {
        let grid = s.u.grid();
        let g = edge_grad_sq(s.u.field());
        l4.push(masked_integral(grid, EDGE_MARGIN, |k| g[k] * g[k]));
        hess.push(hessian_energy(&s.u));
        eps = eps.max(sup_local_sum(&energy_density(s.u.field()), radius, stride).value);
    }
    let lhs = trapezoid(&ts, &l4);
    let hessian = trapezoid(&ts, &hess);
    let span = ts[ts.len() - 1] - ts[0];
    let energy_term = span / (radius * radius) * traj[0].u.energy();
    let rhs = eps * (hessian + energy_term);
    let constant = if rhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(LadyzhenskayaReport { radius, lhs, eps, hessian, energy_term, rhs, constant })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEnergyReport {
    pub radius: f64,
    /// Smallest `C` with `E(s2; B_R) <= E(s1; B_2R) + C (s2 - s1) / R^2 E(u_0)`.
    pub c3_fwd: f64,
    /// Smallest `C` with
    /// `E(s2; B_2R) >= E(s1; B_R) - integral_{s1}^{s2} ||d_t u||^2 - C (s2 - s1) / R^2 E(u_0)`.
    pub c3_bwd: f64,
    /// Smallest `C` with `F(t; |x| >= 2R) <= F(0; |x| >= R) + C / R (E(u_0) + ||u_0 - Q||^2)`,
    /// `F = integral (|u - Q|^2 + |grad u|^2)` and `Q` the far-field value.
    pub c_outer: f64,
    pub pairs: usize,
    pub centers: usize,
}

/// Ball energies at a centre lattice of spacing about `R / 2`.
fn lattice_energies(density: &Field, centers: &[Point], r: f64) -> Vec<f64> {
    centers.iter().map(|&c| local_sum(density, c, r)).collect()
}

fn outer_mass(u: &SpinField, r: f64) -> f64 {
    let grid = u.grid();
    let q = u.boundary();
    let g = central_grad_sq(u.field());
    let h = grid.spacing();
    h * h
        * pairwise_sum_by(grid.len(), &|k| {
            if grid.point_of(k).norm() >= r {
                dist_sq(u.field().site(k), q) + g[k]
            } else {
                0.0
            }
        })
}

/// Empirical constants of the localized energy inequalities over all snapshot
/// pairs and a centre lattice.
pub fn local_energy_inequality_audit(traj: &[Snapshot], radius: f64) -> Result<LocalEnergyReport> {
    check_trajectory(traj)?;
    if traj.len() < 2 {
        return Err(Error::InvalidParameter("need at least two snapshots".into()));
    }
    let grid = *traj[0].u.grid();
    let h = grid.spacing();
    if radius < 4.0 * h {
        return Err(Error::InvalidParameter(format!("radius {radius} below 4h = {}", 4.0 * h)));
    }
    let step = ((radius / (2.0 * h)).floor() as usize).max(1);
    let n = grid.n();
    let mut centers = Vec::new();
    for j in (0..n).step_by(step) {
        for i in (0..n).step_by(step) {
            centers.push(grid.point(i, j));
        }
    }
    let (small, big): (Vec<Vec<f64>>, Vec<Vec<f64>>) = traj
        .iter()
        .map(|s| {
            let d = energy_density(s.u.field());
            (lattice_energies(&d, &centers, radius), lattice_energies(&d, &centers, 2.0 * radius))
        })
        .unzip();
    let e0 = traj[0].u.energy();
    let r2 = radius * radius;
    let (mut fwd, mut bwd) = (0.0f64, 0.0f64);
    let mut pairs = 0;
    for a in 0..traj.len() {
        for b in a + 1..traj.len() {
            pairs += 1;
            let ds = traj[b].t - traj[a].t;
            let scale = if e0 > 0.0 { r2 / (ds * e0) } else { 0.0 };
            let diss = traj[b].dissipated - traj[a].dissipated;
            for c in 0..centers.len() {
                fwd = fwd.max((small[b][c] - big[a][c]) * scale);
                bwd = bwd.max((small[a][c] - big[b][c] - diss) * scale);
            }
        }
    }
    let u0 = &traj[0].u;
    let mass0 = {
        let q = u0.boundary();
        h * h * pairwise_sum_by(grid.len(), &|k| dist_sq(u0.field().site(k), q))
    };
    let base = outer_mass(u0, radius);
    let denom = e0 + mass0;
    let mut outer = 0.0f64;
    if denom > 0.0 {
        for s in &traj[1..] {
            outer = outer.max((outer_mass(&s.u, 2.0 * radius) - base) * radius / denom);
        }
    }
    Ok(LocalEnergyReport {
        radius,
        c3_fwd: fwd.max(0.0),
        c3_bwd: bwd.max(0.0),
        c_outer: outer.max(0.0),
        pairs,
        centers: centers.len(),
    })
}

/// Dyadic radii `L 2^-k`, `k >= 0`, down to `2h`.
pub fn default_radii(grid: &Grid) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = grid.half_extent();
    while r >= 2.0 * grid.spacing() * (1.0 - 1e-12) {
        out.push(r);
        r *= 0.5;
    }
    out
}

/// `max(1, n / 128)`.
pub fn default_stride(grid: &Grid) -> usize {
    (grid.n() / 128).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusScan {
    pub radius: f64,
    pub value: f64,
    pub center: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub eps1: f64,
    pub flag_radius: f64,
    pub scans: Vec<RadiusScan>,
    /// `(x_m, R_m)`: the smallest radius whose sup-local energy exceeds
    /// `eps1`, and its argmax.
    pub candidate: Option<(Point, f64)>,
    /// `R_m` exists and is at most `flag_radius`.
    pub flagged: bool,
}

/// Sup-local energies at each radius; flags when the energy above `eps1`
/// survives down to the unit scale `flag_radius`.
pub fn concentration_scan(
    u: &SpinField,
    radii: &[f64],
    eps1: f64,
    flag_radius: f64,
    stride: usize,
) -> Result<ConcentrationReport> {
    let h = u.grid().spacing();
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("radii must be non-empty and strictly descending".into()));
    }
    if radii.iter().any(|&r| r < 2.0 * h * (1.0 - 1e-12)) {
        return Err(Error::InvalidParameter(format!("radii must be >= 2h = {}", 2.0 * h)));
    }
    let density = energy_density(u.field());
    let scans: Vec<RadiusScan> = radii
        .iter()
        .map(|&r| {
            let s = sup_local_sum(&density, r, stride);
            RadiusScan { radius: r, value: s.value, center: s.center }
        })
        .collect();
    let candidate = scans.iter().rev().find(|s| s.value > eps1).map(|s| (s.center, s.radius));
    let flagged = candidate.is_some_and(|(_, r)| r <= flag_radius * (1.0 + 1e-12));
    Ok(ConcentrationReport { eps1, flag_radius, scans, candidate, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use crate::init::stereographic_bubble;
    use crate::targets::Target;
    use alloc::vec;

    fn constant(n: usize, l: f64) -> SpinField {
        SpinField::new(Field::constant(Grid::new(n, l).unwrap(), &[0.0, 0.0, 1.0]), Target::Sphere).unwrap()
    }

    #[test]
    fn constant_map_audits_vanish() {
        let u = constant(32, 4.0);
        assert_eq!(hessian_energy(&u), 0.0);
        let m = mnbv_audit(&u);
        assert_eq!((m.lhs, m.rhs, m.slack), (0.0, 0.0, 0.0));
        let traj: Vec<Snapshot> = (0..3).map(|k| Snapshot { t: k as f64, u: u.clone(), dissipated: 0.0 }).collect();
        let l = ladyzhenskaya_audit(&traj, 1.0, 1).unwrap();
        assert_eq!(l.constant, 0.0);
        let c = local_energy_inequality_audit(&traj, 1.0).unwrap();
        assert_eq!((c.c3_fwd, c.c3_bwd, c.c_outer), (0.0, 0.0, 0.0));
        let s = concentration_scan(&u, &default_radii(u.grid()), DEFAULT_EPS1, 1.0, 1).unwrap();
        assert!(!s.flagged && s.candidate.is_none());
    }

    #[test]
    fn radii_and_argument_checks() {
        let g = Grid::new(64, 8.0).unwrap();
        let r = default_radii(&g);
        assert_eq!(r, vec![8.0, 4.0, 2.0, 1.0, 0.5]);
        assert_eq!(default_stride(&Grid::new(512, 8.0).unwrap()), 4);
        let u = constant(64, 8.0);
        assert!(concentration_scan(&u, &[1.0, 2.0], 1.0, 1.0, 1).is_err());
        assert!(concentration_scan(&u, &[0.1], 1.0, 1.0, 1).is_err());
        let traj = vec![Snapshot { t: 0.0, u: u.clone(), dissipated: 0.0 }, Snapshot { t: 1.0, u, dissipated: 0.0 }];
        assert!(local_energy_inequality_audit(&traj, 0.3).is_err());
        assert!(local_energy_inequality_audit(&traj[..1], 1.0).is_err());
    }

    #[test]
    fn bubble_hessian_scaling() {
        // |Hess|^2 integrates to a multiple of 1 / lambda^2
        let g = Grid::new(256, 16.0).unwrap();
        let e: Vec<f64> = [1.0, 2.0]
            .iter()
            .map(|&l| hessian_energy(&stereographic_bubble(g, l, Point::new(0.0, 0.0), 1).unwrap()))
            .collect();
        let exponent = (e[0] / e[1]).ln() / 2.0f64.ln();
        assert!((exponent - 2.0).abs() < 0.1, "{exponent}");
    }
}
