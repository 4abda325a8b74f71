//! Initial-data generators: harmonic bubbles, equivariant profiles, smooth
//! torus bumps, seeded random smooth data and energy calibration.

use crate::field::{dirichlet_energy, Field};
use crate::grid::{Grid, Point};
use crate::linalg::{dist_sq, norm};
use crate::targets::{seeded_rng, torus_point, uniform01, SpinField, Target};
use crate::{Error, Result};
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // shadowed by inherent methods once std is linked
use num_traits::Float;

/// Far-field tolerance for generated data against the boundary constant.
pub const FAR_FIELD_TOL: f64 = 0.5;

/// Value of the degree-`k` bubble `w = e^{i psi} ((z - a) / lambda)^k` pulled
/// back by inverse stereographic projection from the south pole, so the far
/// field is the north pole.
pub fn bubble_value(p: Point, lambda: f64, center: Point, degree: u32, phase: f64) -> [f64; 3] {
    let (x, y) = ((p.x - center.x) / lambda, (p.y - center.y) / lambda);
    // w = (x + i y)^k by repeated multiplication
    let (mut wr, mut wi) = (1.0, 0.0);
    for _ in 0..degree {
        let t = wr * x - wi * y;
        wi = wr * y + wi * x;
        wr = t;
    }
    let (c, s) = (phase.cos(), phase.sin());
    let (wr, wi) = (c * wr - s * wi, s * wr + c * wi);
    let w2 = wr * wr + wi * wi;
    let d = 1.0 + w2;
    [2.0 * wr / d, 2.0 * wi / d, (w2 - 1.0) / d]
}

/// Degree-`k` bubble of scale `lambda` centered at `center`, north-pole far field.
pub fn stereographic_bubble(grid: Grid, lambda: f64, center: Point, degree: u32) -> Result<SpinField> {
    bubble_with_phase(grid, lambda, center, degree, 0.0)
}

pub fn bubble_with_phase(grid: Grid, lambda: f64, center: Point, degree: u32, phase: f64) -> Result<SpinField> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("bubble scale {lambda}")));
    }
    if degree == 0 {
        return Err(Error::InvalidParameter("bubble degree must be >= 1".into()));
    }
    let f = Field::from_fn(grid, &[0.0, 0.0, 1.0], |p, o| {
        o.copy_from_slice(&bubble_value(p, lambda, center, degree, phase));
    });
    SpinField::project(f, Target::Sphere)
}

/// True when the bubble scale is below four grid spacings.
pub fn under_resolved(grid: &Grid, lambda: f64) -> bool {
    lambda < 4.0 * grid.spacing()
}

/// Radial profile families for equivariant data. `s = r / lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `g = 2 atan(A s exp(-s^2 / 2))`: degree zero, energy rises from 0
    /// towards two bubbles as `A` grows.
    Arctan { amplitude: f64, lambda: f64 },
    /// `g = A s exp((1 - s^2) / 2)`, peak value `A` at `s = 1`.
    Gauss { amplitude: f64, lambda: f64 },
    /// `g = pi - 2 atan(s)`: the degree-1 bubble with north-pole far field.
    Bubble { lambda: f64 },
    /// `g = 2 atan(s)`: the bubble reflected through the equator.
    SouthBubble { lambda: f64 },
}

impl Profile {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Profile::Arctan { amplitude, lambda } => {
                let s = r / lambda;
                2.0 * (amplitude * s * (-0.5 * s * s).exp()).atan()
            }
            Profile::Gauss { amplitude, lambda } => {
                let s = r / lambda;
                amplitude * s * (0.5 * (1.0 - s * s)).exp()
            }
            Profile::Bubble { lambda } => PI - 2.0 * (r / lambda).atan(),
            Profile::SouthBubble { lambda } => 2.0 * (r / lambda).atan(),
        }
    }

    pub fn with_amplitude(&self, a: f64) -> Profile {
        match *self {
            Profile::Arctan { lambda, .. } => Profile::Arctan { amplitude: a, lambda },
            Profile::Gauss { lambda, .. } => Profile::Gauss { amplitude: a, lambda },
            p => p,
        }
    }

    fn lambda(&self) -> f64 {
        match *self {
            Profile::Arctan { lambda, .. }
            | Profile::Gauss { lambda, .. }
            | Profile::Bubble { lambda }
            | Profile::SouthBubble { lambda } => lambda,
        }
    }
}

/// `u = (cos(m theta) sin g, sin(m theta) sin g, cos g)` for a radial profile
/// `g`, checked against the boundary pole.
pub fn equivariant<G: Fn(f64) -> f64>(grid: Grid, g: G, winding: i32, boundary: &[f64]) -> Result<SpinField> {
    let g0 = g(0.0);
    let pole_gap = g0.sin().abs();
    if pole_gap > 1e-9 || !g0.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "profile value g(0) = {g0} is not a pole; the map would be discontinuous at the origin"
        )));
    }
    if boundary.len() != 3 {
        return Err(Error::ShapeMismatch("sphere boundary needs 3 components".into()));
    }
    let m = winding as f64;
    let f = Field::from_fn(grid, boundary, |p, o| {
        let r = p.norm();
        let th = p.y.atan2(p.x);
        let gv = g(r);
        o[0] = (m * th).cos() * gv.sin();
        o[1] = (m * th).sin() * gv.sin();
        o[2] = gv.cos();
    });
    let l = grid.half_extent();
    let far = {
        let gv = g(l);
        [gv.sin(), 0.0, gv.cos()]
    };
    let mismatch = dist_sq(&far, boundary).sqrt();
    if mismatch > FAR_FIELD_TOL {
        return Err(Error::FarFieldMismatch { mismatch });
    }
    SpinField::project(f, Target::Sphere)
}

pub fn equivariant_profile(grid: Grid, profile: Profile, winding: i32) -> Result<SpinField> {
    if !(profile.lambda() > 0.0) {
        return Err(Error::InvalidParameter("profile scale must be positive".into()));
    }
    equivariant(grid, |r| profile.eval(r), winding, &[0.0, 0.0, 1.0])
}

/// Torus map with angles `a = A exp(-|x - c|^2 / w^2)`, `b = A exp(-|x + c|^2 / w^2)`
/// where `c = (w/2, 0)`; equals the default boundary far away.
pub fn torus_bump(grid: Grid, amplitude: f64, width: f64) -> Result<SpinField> {
    if !(width > 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidParameter(format!("torus bump amplitude {amplitude}, width {width}")));
    }
    let c = 0.5 * width;
    let f = Field::from_fn(grid, &Target::CliffordTorus.default_boundary(), |p, o| {
        let w2 = width * width;
        let da = (p.x - c) * (p.x - c) + p.y * p.y;
        let db = (p.x + c) * (p.x + c) + p.y * p.y;
        let a = amplitude * (-da / w2).exp();
        let b = amplitude * (-db / w2).exp();
        o.copy_from_slice(&torus_point(a, b));
    });
    SpinField::project(f, Target::CliffordTorus)
}

/// Seeded smooth data: a handful of Gaussian bumps of width `width`, inside
/// the middle half of the domain, added to the boundary constant (sphere) or
/// to the angles (torus).
pub fn random_smooth(grid: Grid, target: Target, amplitude: f64, width: f64, seed: u64) -> Result<SpinField> {
    const BUMPS: usize = 4;
    if !(width > 0.0) || !(amplitude >= 0.0) {
        return Err(Error::InvalidParameter("random bumps need width > 0, amplitude >= 0".into()));
    }
    let mut rng = seeded_rng(seed);
    let l = grid.half_extent();
    let mut bumps: Vec<(Point, [f64; 3])> = Vec::with_capacity(BUMPS);
    for _ in 0..BUMPS {
        let c = Point::new(l * (uniform01(&mut rng) - 0.5), l * (uniform01(&mut rng) - 0.5));
        let v = [
            amplitude * (2.0 * uniform01(&mut rng) - 1.0),
            amplitude * (2.0 * uniform01(&mut rng) - 1.0),
            amplitude * (2.0 * uniform01(&mut rng) - 1.0),
        ];
        bumps.push((c, v));
    }
    let bump_sum = |p: Point| {
        let mut s = [0.0; 3];
        for (c, v) in &bumps {
            let d2 = (p.x - c.x).powi(2) + (p.y - c.y).powi(2);
            let e = (-d2 / (width * width)).exp();
            for q in 0..3 {
                s[q] += v[q] * e;
            }
        }
        s
    };
    let boundary = target.default_boundary();
    let f = match target {
        Target::Sphere => Field::from_fn(grid, &boundary, |p, o| {
            let s = bump_sum(p);
            let v = [s[0], s[1], 1.0 + s[2]];
            let r = norm(&v);
            for q in 0..3 {
                o[q] = v[q] / r;
            }
        }),
        Target::CliffordTorus => Field::from_fn(grid, &boundary, |p, o| {
            let s = bump_sum(p);
            o.copy_from_slice(&torus_point(s[0], s[1]));
        }),
    };
    SpinField::project(f, target)
}

/// Independent uniform noise in `[-amplitude, amplitude]` on every ambient
/// component of every site, then projected back onto the target.
pub fn site_noise(u: &SpinField, amplitude: f64, seed: u64) -> Result<SpinField> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidParameter(format!("noise amplitude {amplitude}")));
    }
    let mut rng = seeded_rng(seed);
    let mut f = u.field().clone();
    for v in f.values_mut() {
        *v += amplitude * (2.0 * uniform01(&mut rng) - 1.0);
    }
    SpinField::project(f, u.target())
}

/// Outcome of [`energy_calibrate`].
#[derive(Debug, Clone)]
pub struct Calibrated {
    pub field: SpinField,
    pub parameter: f64,
    pub energy: f64,
    pub iterations: usize,
}

pub const CALIBRATE_REL_TOL: f64 = 1e-6;
const CALIBRATE_MAX_ITER: usize = 200;

/// Bisection on a one-parameter family whose energy is monotone on `[lo, hi]`
/// until `|E - target| <= 1e-6 * target`.
pub fn energy_calibrate<F>(family: F, lo: f64, hi: f64, target: f64) -> Result<Calibrated>
where
    F: Fn(f64) -> Result<SpinField>,
{
    if !(target >= 0.0) || !(lo < hi) {
        return Err(Error::InvalidParameter(format!("calibration target {target} on [{lo}, {hi}]")));
    }
    let tol = CALIBRATE_REL_TOL * target;
    let eval = |p: f64| -> Result<(SpinField, f64)> {
        let u = family(p)?;
        let e = dirichlet_energy(u.field());
        Ok((u, e))
    };
    let (ulo, elo) = eval(lo)?;
    if (elo - target).abs() <= tol {
        return Ok(Calibrated { field: ulo, parameter: lo, energy: elo, iterations: 0 });
    }
    let (uhi, ehi) = eval(hi)?;
    if (ehi - target).abs() <= tol {
        return Ok(Calibrated { field: uhi, parameter: hi, energy: ehi, iterations: 0 });
    }
    if (elo - target).signum() == (ehi - target).signum() {
        return Err(Error::Bracket { lo: elo, hi: ehi });
    }
    let increasing = ehi > elo;
    let (mut a, mut b) = (lo, hi);
    for it in 1..=CALIBRATE_MAX_ITER {
        let mid = 0.5 * (a + b);
        let (u, e) = eval(mid)?;
        if (e - target).abs() <= tol {
            return Ok(Calibrated { field: u, parameter: mid, energy: e, iterations: it });
        }
        if (e < target) == increasing {
            a = mid;
        } else {
            b = mid;
        }
        if a == mid && b == mid {
            break;
        }
    }
    Err(Error::NoConvergence(format!("energy calibration stalled on [{a}, {b}]")))
}

/// Calibrates the amplitude of an equivariant family to a target energy.
pub fn calibrate_profile(
    grid: Grid,
    profile: Profile,
    winding: i32,
    amplitude_max: f64,
    target: f64,
) -> Result<Calibrated> {
    energy_calibrate(|a| equivariant_profile(grid, profile.with_amplitude(a), winding), 0.0, amplitude_max, target)
}
