//! Townes ground state of `lap f - f + f^3 = 0` by shooting, the sharp
//! Gagliardo-Nirenberg constant `||f||_4 <= C ||f||_2^{1/2} ||grad f||_2^{1/2}`
//! and the critical-energy lower bound `1 / (2 C^4 R_N)`.

use crate::{Error, Result};
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // shadowed by inherent methods once std is linked
use num_traits::Float;

pub const DEFAULT_R_MAX: f64 = 20.0;
pub const DEFAULT_DR: f64 = 1e-3;
/// Below this value the tail is continued by the decaying linear solution.
pub const TAIL_SWITCH: f64 = 1e-4;
/// `f(r_max)` below this (relative to `f0`) counts as decayed.
const DECAY_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shot {
    /// Overshoot: `f` changes sign.
    CrossesZero,
    /// Undershoot or growth: `f` turns back up while positive, exceeds
    /// `2 f0`, or stays away from zero up to `r_max`.
    Diverges,
    Decays,
}

fn check_grid(r_max: f64, dr: f64) -> Result<()> {
    if !(dr > 0.0 && r_max > 0.0 && dr < r_max && r_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("r_max = {r_max}, dr = {dr}")));
    }
    Ok(())
}

#[inline]
fn rhs(r: f64, f: f64, g: f64) -> (f64, f64) {
    (g, f - f * f * f - g / r)
}

fn rk4(r: f64, f: f64, g: f64, dr: f64) -> (f64, f64) {
    let (k1f, k1g) = rhs(r, f, g);
    let (k2f, k2g) = rhs(r + 0.5 * dr, f + 0.5 * dr * k1f, g + 0.5 * dr * k1g);
    let (k3f, k3g) = rhs(r + 0.5 * dr, f + 0.5 * dr * k2f, g + 0.5 * dr * k2g);
    let (k4f, k4g) = rhs(r + dr, f + dr * k3f, g + dr * k3g);
    (f + dr / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f), g + dr / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g))
}

/// Series start at `r = dr`: `f ~ f0 + (f0 - f0^3) r^2 / 4`.
fn start(f0: f64, dr: f64) -> (f64, f64) {
    let c = f0 - f0 * f0 * f0;
    (f0 + 0.25 * c * dr * dr, 0.5 * c * dr)
}

/// Integrates from the origin and classifies by the first event.
pub fn shoot(f0: f64, r_max: f64, dr: f64) -> Result<Shot> {
    check_grid(r_max, dr)?;
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(Error::InvalidParameter(format!("f0 = {f0} must be positive")));
    }
    let (mut f, mut g) = start(f0, dr);
    let steps = ((r_max - dr) / dr).round() as usize;
    for k in 0..steps {
        let r = dr * (k + 1) as f64;
        let (nf, ng) = rk4(r, f, g, dr);
        f = nf;
        g = ng;
        if f < 0.0 {
            return Ok(Shot::CrossesZero);
        }
        if f > 2.0 * f0 || (g > 0.0 && f < f0) {
            return Ok(Shot::Diverges);
        }
    }
    if f <= DECAY_THRESHOLD * f0 {
        Ok(Shot::Decays)
    } else {
        Ok(Shot::Diverges)
    }
}

/// Radial profile sampled at `r_k = k dr`, `k = 0..`, with derivative values.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub dr: f64,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    /// Shooting parameter `f(0)` when produced by [`ground_state`].
    pub f0: f64,
}

impl RadialProfile {
    pub fn from_fn<F, G>(r_max: f64, dr: f64, f: F, df: G) -> Result<Self>
    where
        F: Fn(f64) -> f64,
        G: Fn(f64) -> f64,
    {
        check_grid(r_max, dr)?;
        let n = (r_max / dr).round() as usize + 1;
        let r = |k: usize| k as f64 * dr;
        Ok(Self { dr, f: (0..n).map(|k| f(r(k))).collect(), df: (0..n).map(|k| df(r(k))).collect(), f0: f(0.0) })
    }

    pub fn r_max(&self) -> f64 {
        self.dr * (self.f.len() - 1) as f64
    }

    pub fn radius(&self, k: usize) -> f64 {
        self.dr * k as f64
    }

    /// Trapezoid rule for `integral_0^r_max q(k) 2 pi r dr`.
    fn radial_integral<Q: Fn(usize) -> f64>(&self, q: Q) -> f64 {
        let n = self.f.len();
        let mut s = 0.0;
        for k in 1..n {
            let w = if k == n - 1 { 0.5 } else { 1.0 };
            s += w * q(k) * self.radius(k);
        }
        2.0 * PI * self.dr * s
    }

    /// `||f||_{L^2(R^2)}^2`.
    pub fn mass(&self) -> f64 {
        self.radial_integral(|k| self.f[k] * self.f[k])
    }

    /// `||grad f||_{L^2}^2`.
    pub fn dirichlet(&self) -> f64 {
        self.radial_integral(|k| self.df[k] * self.df[k])
    }

    /// `||f||_{L^4}^4`.
    pub fn l4(&self) -> f64 {
        self.radial_integral(|k| self.f[k].powi(4))
    }

    /// Relative residual of `||grad W||^2 + ||W||^2 = ||W||_4^4`.
    pub fn pohozaev_residual(&self) -> f64 {
        let l4 = self.l4();
        (self.dirichlet() + self.mass() - l4).abs() / l4
    }
}

/// Bisection on `f0` between an undershoot (1.0) and an overshoot (3.0).
pub fn ground_state(tol: f64) -> Result<RadialProfile> {
    ground_state_with(tol, DEFAULT_R_MAX, DEFAULT_DR)
}

pub fn ground_state_with(tol: f64, r_max: f64, dr: f64) -> Result<RadialProfile> {
    if !(tol >= 1e-12) {
        return Err(Error::InvalidParameter(format!("tol = {tol} must be >= 1e-12")));
    }
    let (mut lo, mut hi) = (1.0, 3.0);
    let (slo, shi) = (shoot(lo, r_max, dr)?, shoot(hi, r_max, dr)?);
    if slo != Shot::Diverges || shi != Shot::CrossesZero {
        return Err(Error::Bracket { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(mid, r_max, dr)? {
            Shot::CrossesZero => hi = mid,
            Shot::Diverges => lo = mid,
            Shot::Decays => {
                lo = mid;
                hi = mid;
            }
        }
    }
    Ok(profile(0.5 * (lo + hi), r_max, dr))
}

/// Integrates the profile for a given `f0`, continuing by
/// `f ~ f_s sqrt(r_s / r) exp(-(r - r_s))` once `f < TAIL_SWITCH`.
fn profile(f0: f64, r_max: f64, dr: f64) -> RadialProfile {
    let n = (r_max / dr).round() as usize + 1;
    let mut f = Vec::with_capacity(n);
    let mut df = Vec::with_capacity(n);
    f.push(f0);
    df.push(0.0);
    let (mut fv, mut gv) = start(f0, dr);
    let mut tail: Option<(f64, f64)> = None;
    for k in 1..n {
        let r = dr * k as f64;
        if let Some((rs, fs)) = tail {
            let v = fs * (rs / r).sqrt() * (-(r - rs)).exp();
            f.push(v);
            df.push(-v * (1.0 + 0.5 / r));
            continue;
        }
        f.push(fv);
        df.push(gv);
        if fv < TAIL_SWITCH && gv < 0.0 {
            tail = Some((r, fv));
            continue;
        }
        let (nf, ng) = rk4(r, fv, gv, dr);
        fv = nf;
        gv = ng;
    }
    RadialProfile { dr, f, df, f0 }
}

/// `C = ||f||_4 / (||f||_2^{1/2} ||grad f||_2^{1/2})` by radial quadrature.
pub fn gn_constant(p: &RadialProfile) -> f64 {
    (p.l4() / (p.mass() * p.dirichlet())).powf(0.25)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdReport {
    pub c12: f64,
    pub r_n: f64,
    /// `1 / (2 C^4 R_N)`, or `+inf` when `R_N = 0`.
    pub e_star_lower: f64,
}

impl ThresholdReport {
    pub fn is_unbounded(&self) -> bool {
        self.e_star_lower.is_infinite()
    }
}

pub fn critical_energy_bound(c12: f64, r_n: f64) -> Result<ThresholdReport> {
    if !(c12 > 0.0) || !(r_n >= 0.0) {
        return Err(Error::InvalidParameter(format!("C = {c12}, R_N = {r_n}")));
    }
    let e = if r_n == 0.0 { f64::INFINITY } else { 1.0 / (2.0 * c12.powi(4) * r_n) };
    Ok(ThresholdReport { c12, r_n, e_star_lower: e })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shoot_classifications() {
        assert_eq!(shoot(3.0, 20.0, 1e-3).unwrap(), Shot::CrossesZero);
        assert_eq!(shoot(1.0, 20.0, 1e-3).unwrap(), Shot::Diverges);
        assert_eq!(shoot(2.0, 20.0, 1e-3).unwrap(), Shot::Diverges);
        assert_eq!(shoot(2.3, 20.0, 1e-3).unwrap(), Shot::CrossesZero);
        assert!(shoot(1.0, 20.0, 0.0).is_err());
        assert!(shoot(1.0, -1.0, 1e-3).is_err());
        assert!(shoot(-1.0, 20.0, 1e-3).is_err());
    }

    #[test]
    fn townes_values() {
        let w = ground_state(1e-10).unwrap();
        assert!((w.f0 - 2.2062).abs() < 1e-4, "f0 = {}", w.f0);
        let m = w.mass();
        assert!((m / (2.0 * PI) - 1.86225).abs() < 1e-4, "mass/2pi = {}", m / (2.0 * PI));
        assert!(w.pohozaev_residual() < 1e-6, "{}", w.pohozaev_residual());
        assert!(*w.f.last().unwrap() <= 1e-6 * w.f0);
        let c = gn_constant(&w);
        assert!((c - 0.64299).abs() < 1e-3);
        assert!((c.powi(4) - 2.0 / m).abs() < 1e-6);
    }

    #[test]
    fn threshold_formula() {
        let r = critical_energy_bound(0.64299, 1.0).unwrap();
        assert!((r.e_star_lower - PI * 0.93112).abs() < 1e-3);
        assert!(critical_energy_bound(0.64299, 0.0).unwrap().is_unbounded());
        let q = critical_energy_bound(0.64299, 4.0).unwrap();
        assert!((q.e_star_lower * 4.0 - r.e_star_lower).abs() < 1e-12);
        assert!(critical_energy_bound(0.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_is_not_sharper() {
        let g = RadialProfile::from_fn(20.0, 1e-3, |r| (-r * r).exp(), |r| -2.0 * r * (-r * r).exp()).unwrap();
        let w = ground_state(1e-10).unwrap();
        assert!(gn_constant(&g) < gn_constant(&w));
        // exact: C^4 = 1 / (2 pi) for a Gaussian... quotient = (pi/4) / ((pi/2) * pi) = 1/(2 pi)
        assert!((gn_constant(&g).powi(4) - 1.0 / (2.0 * PI)).abs() < 1e-6);
    }
}
