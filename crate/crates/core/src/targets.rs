//! Target-manifold geometry for the two supported targets.
//!
//! * [`Target::Sphere`]: the unit sphere in R^3, Gauss curvature 1, complex
//!   structure `J(y) X = y x X`.
//! * [`Target::CliffordTorus`]: the flat torus
//!   `(1/sqrt 2)(cos a, sin a, cos b, sin b)` in R^4, with `J d/da = d/db`.
//!
//! All formulas go through the nearest-point projection and its differential
//! (the tangent projector); the second fundamental form is never built.

use crate::field::{laplacian, Field};
use crate::grid::Grid;
use crate::linalg::{cross, dot, norm, solve_in_place};
use crate::par::for_each_chunk;
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;
#[allow(unused_imports)] // shadowed by inherent methods once std is linked
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Largest allowed site distance to the target after renormalization.
pub const TOL_TARGET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Sphere,
    CliffordTorus,
}

impl Target {
    pub fn ambient_dim(self) -> usize {
        match self {
            Target::Sphere => 3,
            Target::CliffordTorus => 4,
        }
    }

    /// Upper bound for the sectional curvature.
    pub fn curvature_bound(self) -> f64 {
        match self {
            Target::Sphere => 1.0,
            Target::CliffordTorus => 0.0,
        }
    }

    pub fn gauss_curvature(self, _y: &[f64]) -> f64 {
        self.curvature_bound()
    }

    /// Radius of the neighbourhood on which [`Target::project`] is trusted.
    pub fn tubular_radius(self) -> f64 {
        match self {
            Target::Sphere => 0.5,
            Target::CliffordTorus => 0.3,
        }
    }

    /// Far-field constant used by the generators: the north pole, or the
    /// torus point with both angles zero.
    pub fn default_boundary(self) -> Vec<f64> {
        match self {
            Target::Sphere => vec![0.0, 0.0, 1.0],
            Target::CliffordTorus => vec![FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2, 0.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::Sphere => "sphere",
            Target::CliffordTorus => "torus",
        }
    }

    /// Euclidean distance from an ambient point to the target.
    pub fn distance(self, y: &[f64]) -> f64 {
        match self {
            Target::Sphere => (norm(y) - 1.0).abs(),
            Target::CliffordTorus => {
                let r1 = y[0].hypot(y[1]) - FRAC_1_SQRT_2;
                let r2 = y[2].hypot(y[3]) - FRAC_1_SQRT_2;
                r1.hypot(r2)
            }
        }
    }

    /// Nearest-point projection, valid inside the tubular neighbourhood.
    pub fn project(self, y: &[f64], out: &mut [f64]) {
        match self {
            Target::Sphere => {
                let r = norm(y);
                for k in 0..3 {
                    out[k] = y[k] / r;
                }
            }
            Target::CliffordTorus => {
                for p in 0..2 {
                    let (a, b) = (y[2 * p], y[2 * p + 1]);
                    let s = FRAC_1_SQRT_2 / a.hypot(b);
                    out[2 * p] = a * s;
                    out[2 * p + 1] = b * s;
                }
            }
        }
    }

    /// Orthogonal projection of `v` onto the tangent plane at `y`.
    pub fn tangent_project(self, y: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Target::Sphere => {
                let r2 = dot(y, y);
                let c = dot(v, y) / r2;
                for k in 0..3 {
                    out[k] = v[k] - c * y[k];
                }
            }
            Target::CliffordTorus => {
                for p in 0..2 {
                    let (a, b) = (y[2 * p], y[2 * p + 1]);
                    let r2 = a * a + b * b;
                    let (ta, tb) = (-b, a);
                    let c = (v[2 * p] * ta + v[2 * p + 1] * tb) / r2;
                    out[2 * p] = c * ta;
                    out[2 * p + 1] = c * tb;
                }
            }
        }
    }

    /// Complex structure applied to a tangent vector at `y`.
    pub fn complex_structure(self, y: &[f64], x: &[f64], out: &mut [f64]) {
        match self {
            Target::Sphere => {
                let r = norm(y);
                let c = cross(y, x);
                for k in 0..3 {
                    out[k] = c[k] / r;
                }
            }
            Target::CliffordTorus => {
                let ra = y[0].hypot(y[1]);
                let rb = y[2].hypot(y[3]);
                let t1 = [-y[1] / ra, y[0] / ra];
                let t2 = [-y[3] / rb, y[2] / rb];
                let c1 = x[0] * t1[0] + x[1] * t1[1];
                let c2 = x[2] * t2[0] + x[3] * t2[1];
                // J t1 = t2, J t2 = -t1
                out[0] = -c2 * t1[0];
                out[1] = -c2 * t1[1];
                out[2] = c1 * t2[0];
                out[3] = c1 * t2[1];
            }
        }
    }

    /// A point of the target from uniform samples in `[0, 1)`.
    pub fn sample_point(self, rng: &mut impl RngCore) -> Vec<f64> {
        match self {
            Target::Sphere => {
                let z = 2.0 * uniform01(rng) - 1.0;
                let phi = 2.0 * core::f64::consts::PI * uniform01(rng);
                let s = (1.0 - z * z).max(0.0).sqrt();
                vec![s * phi.cos(), s * phi.sin(), z]
            }
            Target::CliffordTorus => {
                let a = 2.0 * core::f64::consts::PI * uniform01(rng);
                let b = 2.0 * core::f64::consts::PI * uniform01(rng);
                torus_point(a, b).to_vec()
            }
        }
    }
}

pub fn torus_point(a: f64, b: f64) -> [f64; 4] {
    [FRAC_1_SQRT_2 * a.cos(), FRAC_1_SQRT_2 * a.sin(), FRAC_1_SQRT_2 * b.cos(), FRAC_1_SQRT_2 * b.sin()]
}

pub(crate) fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A field whose every site, and whose boundary constant, lies on the target.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinField {
    field: Field,
    target: Target,
}

impl SpinField {
    /// Wraps a field already on the target (within [`TOL_TARGET`]).
    pub fn new(field: Field, target: Target) -> Result<Self> {
        if field.comps() != target.ambient_dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} target needs {} components, field has {}",
                target.name(),
                target.ambient_dim(),
                field.comps()
            )));
        }
        field.check_finite()?;
        let n = field.grid().n();
        for (k, s) in field.sites().enumerate() {
            let d = target.distance(s);
            if d > TOL_TARGET {
                return Err(Error::OutsideTube { i: k % n, j: k / n, distance: d, radius: TOL_TARGET });
            }
        }
        if target.distance(field.boundary()) > TOL_TARGET {
            return Err(Error::InvalidParameter("boundary constant is not on the target".into()));
        }
        Ok(Self { field, target })
    }

    /// Projects an arbitrary field onto the target; see [`renormalize`].
    pub fn project(field: Field, target: Target) -> Result<Self> {
        renormalize(field, target).map(|(u, _)| u)
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn boundary(&self) -> &[f64] {
        self.field.boundary()
    }

    pub fn into_field(self) -> Field {
        self.field
    }

    pub fn energy(&self) -> f64 {
        crate::field::dirichlet_energy(&self.field)
    }
}

/// Site-wise nearest-point projection. Returns the projected field and the
/// largest pre-projection distance to the target.
pub fn renormalize(mut field: Field, target: Target) -> Result<(SpinField, f64)> {
    if field.comps() != target.ambient_dim() {
        return Err(Error::ShapeMismatch(format!(
            "{} target needs {} components, field has {}",
            target.name(),
            target.ambient_dim(),
            field.comps()
        )));
    }
    field.check_finite()?;
    let n = field.grid().n();
    let m = field.comps();
    let radius = target.tubular_radius();
    let mut drift = 0.0f64;
    let mut tmp = [0.0; 4];
    for (k, s) in field.values_mut().chunks_mut(m).enumerate() {
        let d = target.distance(s);
        if d > radius || !d.is_finite() {
            return Err(Error::OutsideTube { i: k % n, j: k / n, distance: d, radius });
        }
        drift = drift.max(d);
        target.project(s, &mut tmp[..m]);
        s.copy_from_slice(&tmp[..m]);
    }
    let b = field.boundary().to_vec();
    if target.distance(&b) > radius {
        return Err(Error::InvalidParameter("boundary constant outside the tubular neighbourhood".into()));
    }
    target.project(&b, &mut tmp[..m]);
    field.set_boundary(&tmp[..m]);
    Ok((SpinField { field, target }, drift))
}

/// Tension field `tau(u) = P(u) lap u`.
pub fn tension(u: &SpinField) -> Field {
    let lap = laplacian(u.field());
    project_tangent(u, &lap)
}

/// Site-wise tangent projection of an ambient field along `u`.
pub fn project_tangent(u: &SpinField, v: &Field) -> Field {
    let target = u.target();
    let m = target.ambient_dim();
    let n = u.grid().n();
    let mut out = v.clone();
    out.set_boundary(&vec![0.0; m]);
    let uf = u.field();
    for_each_chunk(out.values_mut(), n * m, |j, row| {
        for i in 0..n {
            let k = j * n + i;
            let y = uf.site(k);
            let mut t = [0.0; 4];
            target.tangent_project(y, &v.values()[k * m..(k + 1) * m], &mut t[..m]);
            row[i * m..(i + 1) * m].copy_from_slice(&t[..m]);
        }
    });
    out
}

/// Site-wise complex structure applied to a tangent field.
pub fn apply_j(u: &SpinField, x: &Field) -> Field {
    let target = u.target();
    let m = target.ambient_dim();
    let mut out = x.clone();
    out.set_boundary(&vec![0.0; m]);
    let uf = u.field();
    for (k, o) in out.values_mut().chunks_mut(m).enumerate() {
        let mut t = [0.0; 4];
        target.complex_structure(uf.site(k), &x.values()[k * m..(k + 1) * m], &mut t[..m]);
        o.copy_from_slice(&t[..m]);
    }
    out
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("Gilbert damping alpha = {alpha} must be positive")));
    }
    Ok(())
}

/// Right-hand side `alpha tau - beta J tau` of the flow.
pub fn ll_rhs(u: &SpinField, alpha: f64, beta: f64) -> Result<Field> {
    check_alpha(alpha)?;
    let tau = tension(u);
    Ok(rhs_from_tension(u, &tau, alpha, beta))
}

pub(crate) fn rhs_from_tension(u: &SpinField, tau: &Field, alpha: f64, beta: f64) -> Field {
    let target = u.target();
    let m = target.ambient_dim();
    let n = u.grid().n();
    let uf = u.field();
    let mut out = tau.clone();
    for_each_chunk(out.values_mut(), n * m, |j, row| {
        for i in 0..n {
            let k = j * n + i;
            let t = &tau.values()[k * m..(k + 1) * m];
            let mut jt = [0.0; 4];
            target.complex_structure(uf.site(k), t, &mut jt[..m]);
            for c in 0..m {
                row[i * m + c] = alpha * t[c] - beta * jt[c];
            }
        }
    });
    out
}

/// The sphere right-hand side written literally,
/// `alpha lap u + alpha |grad u|^2 u - beta u x lap u`, with the edge form of
/// `|grad u|^2`.
pub fn ll_rhs_sphere_literal(u: &SpinField, alpha: f64, beta: f64) -> Result<Field> {
    check_alpha(alpha)?;
    if u.target() != Target::Sphere {
        return Err(Error::Unsupported("literal form is sphere-only".into()));
    }
    let lap = laplacian(u.field());
    let g2 = crate::field::edge_grad_sq(u.field());
    let mut out = lap.clone();
    for (k, o) in out.values_mut().chunks_mut(3).enumerate() {
        let y = u.field().site(k);
        let l = lap.site(k);
        let c = cross(y, l);
        for q in 0..3 {
            o[q] = alpha * l[q] + alpha * g2[k] * y[q] - beta * c[q];
        }
    }
    Ok(out)
}

/// The coefficients `gamma_1 = alpha / (alpha^2 + beta^2)` and
/// `gamma_2 = beta / (alpha^2 + beta^2)` of the extrinsic form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MOperatorParams {
    alpha: f64,
    beta: f64,
}

impl MOperatorParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta = {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma1(&self) -> f64 {
        self.alpha / (self.alpha * self.alpha + self.beta * self.beta)
    }

    pub fn gamma2(&self) -> f64 {
        self.beta / (self.alpha * self.alpha + self.beta * self.beta)
    }
}

/// `M(y) V = (gamma_1 + gamma_2 Phi(y))^{-1} V` with `Phi = J P`, solved as a
/// dense `m x m` system.
///
/// The `+` sign makes `M(y) P(y) lap v = alpha tau - beta J tau`, matching
/// [`ll_rhs`]; the Rayleigh-quotient bounds do not depend on the sign.
pub fn m_apply(target: Target, y: &[f64], v: &[f64], params: MOperatorParams) -> Vec<f64> {
    let m = target.ambient_dim();
    let (g1, g2) = (params.gamma1(), params.gamma2());
    let mut a = vec![0.0; m * m];
    let mut e = [0.0; 4];
    let mut pe = [0.0; 4];
    let mut jpe = [0.0; 4];
    for col in 0..m {
        e[..m].fill(0.0);
        e[col] = 1.0;
        target.tangent_project(y, &e[..m], &mut pe[..m]);
        target.complex_structure(y, &pe[..m], &mut jpe[..m]);
        for row in 0..m {
            a[row * m + col] = g2 * jpe[row] + if row == col { g1 } else { 0.0 };
        }
    }
    let mut x = v.to_vec();
    solve_in_place(&mut a, &mut x, m).expect("gamma_1 + gamma_2 Phi is invertible for alpha > 0");
    x
}

/// Extremal Rayleigh quotients of `M` found by random sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralAudit {
    pub samples: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub min_quotient: f64,
    pub max_quotient: f64,
    pub violations: usize,
    /// First violating `(y, V)` if any.
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
}

impl SpectralAudit {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

pub const SPECTRAL_SLACK: f64 = 1e-10;

/// Checks `alpha |V|^2 <= V^T M V <= |V|^2 / gamma_1` on random samples.
pub fn spectral_bounds_audit(
    target: Target,
    params: MOperatorParams,
    samples: usize,
    seed: u64,
) -> Result<SpectralAudit> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let m = target.ambient_dim();
    let lower = params.alpha();
    let upper = 1.0 / params.gamma1();
    let mut rep = SpectralAudit {
        samples,
        lower_bound: lower,
        upper_bound: upper,
        min_quotient: f64::INFINITY,
        max_quotient: f64::NEG_INFINITY,
        violations: 0,
        witness: None,
    };
    for _ in 0..samples {
        let y = target.sample_point(&mut rng);
        let v: Vec<f64> = (0..m).map(|_| 2.0 * uniform01(&mut rng) - 1.0).collect();
        let vv = dot(&v, &v);
        if vv == 0.0 {
            continue;
        }
        let mv = m_apply(target, &y, &v, params);
        let q = dot(&v, &mv) / vv;
        rep.min_quotient = rep.min_quotient.min(q);
        rep.max_quotient = rep.max_quotient.max(q);
        if q < lower * (1.0 - SPECTRAL_SLACK) || q > upper * (1.0 + SPECTRAL_SLACK) {
            rep.violations += 1;
            if rep.witness.is_none() {
                rep.witness = Some((y, v));
            }
        }
    }
    Ok(rep)
}

/// Covariant Hessian `P(u) d_i d_j u` from second differences.
#[derive(Debug, Clone)]
pub struct CovariantHessian {
    pub xx: Field,
    pub xy: Field,
    pub yy: Field,
}

impl CovariantHessian {
    /// `|Hess u|^2 = |H_xx|^2 + 2 |H_xy|^2 + |H_yy|^2` at site `k`.
    pub fn norm_sq_at(&self, k: usize) -> f64 {
        let a = self.xx.site(k);
        let b = self.xy.site(k);
        let c = self.yy.site(k);
        dot(a, a) + 2.0 * dot(b, b) + dot(c, c)
    }

    pub fn norm_at(&self, k: usize) -> f64 {
        self.norm_sq_at(k).sqrt()
    }
}

pub fn covariant_hessian(u: &Field, target: Target) -> CovariantHessian {
    let grid = *u.grid();
    let n = grid.n();
    let m = u.comps();
    let h2 = grid.spacing() * grid.spacing();
    let mut xx = Field::zeros(grid, m);
    let mut xy = Field::zeros(grid, m);
    let mut yy = Field::zeros(grid, m);
    let mut raw = [0.0; 4];
    let mut t = [0.0; 4];
    for j in 0..n as isize {
        for i in 0..n as isize {
            let k = grid.index(i as usize, j as usize);
            let c = u.at(i, j);
            for (out, kind) in [(&mut xx, 0), (&mut xy, 1), (&mut yy, 2)] {
                for q in 0..m {
                    raw[q] = match kind {
                        0 => (u.at(i + 1, j)[q] - 2.0 * c[q] + u.at(i - 1, j)[q]) / h2,
                        2 => (u.at(i, j + 1)[q] - 2.0 * c[q] + u.at(i, j - 1)[q]) / h2,
                        _ => {
                            (u.at(i + 1, j + 1)[q] - u.at(i + 1, j - 1)[q] - u.at(i - 1, j + 1)[q]
                                + u.at(i - 1, j - 1)[q])
                                / (4.0 * h2)
                        }
                    };
                }
                target.tangent_project(c, &raw[..m], &mut t[..m]);
                out.site_mut(k).copy_from_slice(&t[..m]);
            }
        }
    }
    CovariantHessian { xx, xy, yy }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point;
    use crate::init::stereographic_bubble;

    fn rng() -> ChaCha8Rng {
        seeded_rng(7)
    }

    fn random_tangent(target: Target, y: &[f64], r: &mut ChaCha8Rng) -> Vec<f64> {
        let m = target.ambient_dim();
        let v: Vec<f64> = (0..m).map(|_| 2.0 * uniform01(r) - 1.0).collect();
        let mut t = vec![0.0; m];
        target.tangent_project(y, &v, &mut t);
        t
    }

    #[test]
    fn projector_idempotent_and_symmetric() {
        let mut r = rng();
        for target in [Target::Sphere, Target::CliffordTorus] {
            let m = target.ambient_dim();
            for _ in 0..200 {
                let y = target.sample_point(&mut r);
                let a: Vec<f64> = (0..m).map(|_| uniform01(&mut r) - 0.5).collect();
                let b: Vec<f64> = (0..m).map(|_| uniform01(&mut r) - 0.5).collect();
                let mut pa = vec![0.0; m];
                let mut ppa = vec![0.0; m];
                let mut pb = vec![0.0; m];
                target.tangent_project(&y, &a, &mut pa);
                target.tangent_project(&y, &pa, &mut ppa);
                target.tangent_project(&y, &b, &mut pb);
                for q in 0..m {
                    assert!((pa[q] - ppa[q]).abs() < 1e-14);
                }
                assert!((dot(&pa, &b) - dot(&a, &pb)).abs() < 1e-14);
                let mut proj = vec![0.0; m];
                target.project(&y, &mut proj);
                for q in 0..m {
                    assert!((proj[q] - y[q]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn complex_structure_is_orthogonal_and_squares_to_minus_one() {
        let mut r = rng();
        for target in [Target::Sphere, Target::CliffordTorus] {
            let m = target.ambient_dim();
            for _ in 0..200 {
                let y = target.sample_point(&mut r);
                let x = random_tangent(target, &y, &mut r);
                let z = random_tangent(target, &y, &mut r);
                let mut jx = vec![0.0; m];
                let mut jz = vec![0.0; m];
                let mut jjx = vec![0.0; m];
                target.complex_structure(&y, &x, &mut jx);
                target.complex_structure(&y, &z, &mut jz);
                target.complex_structure(&y, &jx, &mut jjx);
                assert!(dot(&jx, &x).abs() < 1e-12);
                assert!((dot(&jx, &jz) - dot(&x, &z)).abs() < 1e-12);
                for q in 0..m {
                    assert!((jjx[q] + x[q]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn renormalize_sphere_scaled() {
        let g = Grid::new(16, 1.0).unwrap();
        let f = Field::from_fn(g, &[0.0, 0.0, 1.0], |p, o| {
            let v = [p.x.sin(), p.y.cos(), 0.5];
            let r = norm(&v);
            for q in 0..3 {
                o[q] = 1.01 * v[q] / r;
            }
        });
        let (u, drift) = renormalize(f, Target::Sphere).unwrap();
        assert!((drift - 0.01).abs() < 1e-12);
        for s in u.field().sites() {
            assert!((norm(s) - 1.0).abs() <= 1e-12);
        }
        let (v, d2) = renormalize(u.field().clone(), Target::Sphere).unwrap();
        assert_eq!(d2.min(1e-15), d2);
        assert!(v.field().max_distance(u.field()) < 1e-15);
    }

    #[test]
    fn renormalize_torus_one_pair_scaled() {
        let g = Grid::new(16, 1.0).unwrap();
        let base = torus_point(0.4, -1.1);
        let f = Field::from_fn(g, &Target::CliffordTorus.default_boundary(), |_, o| {
            o.copy_from_slice(&base);
            o[2] *= 1.2;
            o[3] *= 1.2;
        });
        let (u, drift) = renormalize(f, Target::CliffordTorus).unwrap();
        assert!((drift - 0.2 * FRAC_1_SQRT_2).abs() < 1e-14);
        for s in u.field().sites() {
            for q in 0..4 {
                assert!((s[q] - base[q]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn renormalize_rejects_far_site() {
        let g = Grid::new(16, 1.0).unwrap();
        let mut f = Field::constant(g, &[0.0, 0.0, 1.0]);
        f.site_mut(g.index(3, 5)).copy_from_slice(&[0.0, 0.0, 1.8]);
        match renormalize(f, Target::Sphere) {
            Err(Error::OutsideTube { i, j, .. }) => assert_eq!((i, j), (3, 5)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_map_has_zero_rhs() {
        let g = Grid::new(16, 1.0).unwrap();
        let u = SpinField::new(Field::constant(g, &[0.0, 0.0, 1.0]), Target::Sphere).unwrap();
        assert!(tension(&u).values().iter().all(|&v| v == 0.0));
        assert!(ll_rhs(&u, 1.0, 0.7).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(ll_rhs(&u, 0.0, 1.0).is_err());
        assert!(ll_rhs(&u, -1.0, 1.0).is_err());
    }

    #[test]
    fn literal_sphere_form_matches_projected() {
        let g = Grid::new(64, 4.0).unwrap();
        let u = stereographic_bubble(g, 0.8, Point::new(0.3, -0.2), 1).unwrap();
        for &(a, b) in &[(1.0, 0.0), (1.0, 1.0), (0.3, -2.0)] {
            let x = ll_rhs(&u, a, b).unwrap();
            let y = ll_rhs_sphere_literal(&u, a, b).unwrap();
            let scale = x.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(x.max_distance(&y) <= 1e-12 * scale.max(1.0));
        }
        let x = ll_rhs(&u, 2.5, 0.0).unwrap();
        let tau = tension(&u);
        for (a, b) in x.values().iter().zip(tau.values()) {
            assert_eq!(*a, 2.5 * b);
        }
    }

    #[test]
    fn rhs_is_tangent() {
        let g = Grid::new(64, 4.0).unwrap();
        let u = stereographic_bubble(g, 0.7, Point::new(0.5, 0.1), 2).unwrap();
        let rhs = ll_rhs(&u, 1.0, 0.5).unwrap();
        for (k, r) in rhs.sites().enumerate() {
            let y = u.field().site(k);
            assert!(dot(r, y).abs() <= 1e-10 * norm(r).max(1e-300));
        }
    }

    #[test]
    fn m_operator_closed_forms() {
        let mut r = rng();
        for target in [Target::Sphere, Target::CliffordTorus] {
            let m = target.ambient_dim();
            let y = target.sample_point(&mut r);
            let v: Vec<f64> = (0..m).map(|_| uniform01(&mut r) - 0.5).collect();
            // beta = 0: M = alpha I
            let p = MOperatorParams::new(2.5, 0.0).unwrap();
            let mv = m_apply(target, &y, &v, p);
            for q in 0..m {
                assert!((mv[q] - 2.5 * v[q]).abs() < 1e-13);
            }
            let p = MOperatorParams::new(1.0, 1.0).unwrap();
            let t = random_tangent(target, &y, &mut r);
            let mt = m_apply(target, &y, &t, p);
            assert!((dot(&t, &mt) / dot(&t, &t) - 1.0).abs() < 1e-13);
            let mut nv = v.clone();
            let mut pv = vec![0.0; m];
            target.tangent_project(&y, &v, &mut pv);
            for q in 0..m {
                nv[q] -= pv[q];
            }
            let mn = m_apply(target, &y, &nv, p);
            for q in 0..m {
                assert!((mn[q] - 2.0 * nv[q]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn extrinsic_form_matches_rhs() {
        let g = Grid::new(32, 3.0).unwrap();
        let u = stereographic_bubble(g, 0.9, Point::new(0.2, 0.0), 1).unwrap();
        let p = MOperatorParams::new(0.8, -1.3).unwrap();
        let rhs = ll_rhs(&u, p.alpha(), p.beta()).unwrap();
        let tau = tension(&u);
        for k in 0..g.len() {
            let x = m_apply(Target::Sphere, u.field().site(k), tau.site(k), p);
            let want = rhs.site(k);
            for q in 0..3 {
                assert!((x[q] - want[q]).abs() <= 1e-10 * (1.0 + want[q].abs()));
            }
        }
    }

    #[test]
    fn spectral_audit_small() {
        for target in [Target::Sphere, Target::CliffordTorus] {
            let rep = spectral_bounds_audit(target, MOperatorParams::new(1.0, 1.0).unwrap(), 2000, 3).unwrap();
            assert!(rep.passed());
            assert!(rep.min_quotient >= 1.0 - 1e-10 && rep.max_quotient <= 2.0 + 1e-10);
            let rep = spectral_bounds_audit(target, MOperatorParams::new(1.0, 0.0).unwrap(), 100, 3).unwrap();
            assert!((rep.min_quotient - 1.0).abs() < 1e-12 && (rep.max_quotient - 1.0).abs() < 1e-12);
        }
        assert!(spectral_bounds_audit(Target::Sphere, MOperatorParams::new(1.0, 0.0).unwrap(), 0, 1).is_err());
    }
}
