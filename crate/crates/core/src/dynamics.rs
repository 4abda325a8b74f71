//! Time stepping for `u_t = alpha tau - beta J tau` with the energy ledger.
//!
//! Two schemes: an explicit Heun (trapezoidal) step with projection, and an
//! IMEX step that treats `alpha lap` implicitly through a sine-transform
//! Helmholtz solve. Both renormalize onto the target after the step.
//!
//! The ledger records `diss_cum = gamma_1 * sum |u_{k+1} - u_k|^2 / dt`, the
//! discrete form of `gamma_1 integral ||d_t u||^2`. Since
//! `|u_t|^2 = (alpha^2 + beta^2) |tau|^2` and `dE/dt = -alpha |tau|^2`, this
//! equals the energy drop; for `alpha^2 + beta^2 = 1` it is `alpha integral |u_t|^2`.
//! The energy tracked here is [`flow_energy`], which includes the jump to the
//! ghost constant and is the exact Lyapunov function of the stencil.

use crate::field::{energy_density, flow_energy, l4_gradient_norm4, laplacian, sup_local_sum, Field};
use crate::grid::{Grid, Point};
use crate::ledger::{EnergyLedger, LedgerRow};
use crate::poisson::DirichletSolver;
use crate::sum::pairwise_sum_by;
use crate::targets::{ll_rhs, renormalize, SpinField, Target};
use crate::{Error, Result};
use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Heun,
    Imex,
}

pub const DEFAULT_DT_SAFETY: f64 = 0.2;
pub const DEFAULT_TOL_MONO: f64 = 1e-9;
pub const MAX_IMEX_FACTOR: f64 = 25.0;
pub const MAX_REJECTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub alpha: f64,
    pub beta: f64,
    pub scheme: Scheme,
    pub dt_safety: f64,
    /// IMEX step as a multiple of the explicit [`cfl_dt`].
    pub imex_factor: f64,
    pub t_end: f64,
    /// Stop after this many steps even before `t_end`; 0 means no cap.
    pub max_steps: usize,
    /// Snapshot cadence in steps; 0 disables snapshots.
    pub snapshot_every: usize,
    pub ledger_every: usize,
    /// Radii of the sup-local energies recorded in the ledger.
    pub radii: Vec<f64>,
    /// Center stride for the sup-local scans.
    pub stride: usize,
    /// Per-step energy rise allowed, relative to `E(0)`.
    pub tol_mono: f64,
}

impl SimConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            beta,
            scheme: Scheme::Heun,
            dt_safety: DEFAULT_DT_SAFETY,
            imex_factor: 10.0,
            t_end: 0.0,
            max_steps: 0,
            snapshot_every: 0,
            ledger_every: 100,
            radii: Vec::new(),
            stride: 1,
            tol_mono: DEFAULT_TOL_MONO,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidParameter(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if !self.beta.is_finite() {
            return bad(format!("beta = {}", self.beta));
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return bad(format!("dt_safety = {} must lie in (0, 1]", self.dt_safety));
        }
        if !(self.imex_factor > 0.0 && self.imex_factor <= MAX_IMEX_FACTOR) {
            return bad(format!("imex_factor = {} must lie in (0, 25]", self.imex_factor));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {}", self.t_end));
        }
        if self.ledger_every == 0 {
            return bad("ledger_every must be >= 1".into());
        }
        if self.stride == 0 {
            return bad("stride must be >= 1".into());
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) {
            return bad("radii must be positive".into());
        }
        if !(self.tol_mono >= 0.0) {
            return bad("tol_mono must be >= 0".into());
        }
        Ok(())
    }

    pub fn gamma1(&self) -> f64 {
        self.alpha / (self.alpha * self.alpha + self.beta * self.beta)
    }
}

/// Explicit step bound `safety * h^2 / (8 (alpha + |beta|))`.
pub fn cfl_dt(grid: &Grid, alpha: f64, beta: f64, safety: f64) -> f64 {
    let h = grid.spacing();
    safety * h * h / (8.0 * (alpha + beta.abs()))
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub u: SpinField,
    pub ledger: EnergyLedger,
    pub step_count: usize,
    pub energy: f64,
    pub e0: f64,
    pub diss_cum: f64,
    pub l4_cum: f64,
    /// `||grad u||_{L^4}^4` of the current field.
    pub l4_now: f64,
    pub last_drift: f64,
    pub max_drift: f64,
    /// Largest post-projection target distance seen.
    pub max_target_distance: f64,
    /// Accepted steps with `E_{k+1} > E_k + tol_mono E(0)`.
    pub monotone_violations: usize,
    /// Largest `(E_{k+1} - E_k) / E(0)` over accepted steps.
    pub max_energy_rise: f64,
    pub rejections: usize,
}

impl SimState {
    pub fn new(u: SpinField, radii: Vec<f64>) -> Self {
        let energy = flow_energy(u.field());
        let l4 = l4_gradient_norm4(u.field());
        Self {
            t: 0.0,
            ledger: EnergyLedger::new(radii),
            step_count: 0,
            energy,
            e0: energy,
            diss_cum: 0.0,
            l4_cum: 0.0,
            l4_now: l4,
            last_drift: 0.0,
            max_drift: 0.0,
            max_target_distance: max_target_distance(&u),
            monotone_violations: 0,
            max_energy_rise: f64::NEG_INFINITY,
            rejections: 0,
            u,
        }
    }

    pub fn target(&self) -> Target {
        self.u.target()
    }

    /// Builds a ledger row for the current state.
    pub fn ledger_row(&self, stride: usize) -> LedgerRow {
        let radii = self.ledger.radii();
        let mut sup = Vec::with_capacity(radii.len());
        let mut argmax = Point::ORIGIN;
        if !radii.is_empty() {
            let dens = energy_density(self.u.field());
            // the finest radius locates concentration best
            let last = radii.len() - 1;
            for (q, &r) in radii.iter().enumerate() {
                let s = sup_local_sum(&dens, r, stride);
                if q == last {
                    argmax = s.center;
                }
                sup.push(s.value);
            }
        }
        LedgerRow {
            t: self.t,
            energy: self.energy,
            diss_cum: self.diss_cum,
            l4_cum: self.l4_cum,
            unit_drift: self.last_drift,
            sup_local: sup,
            argmax,
        }
    }

    pub fn record(&mut self, stride: usize) {
        let row = self.ledger_row(stride);
        self.ledger.push(row);
    }

    /// Folds an accepted step into the accumulators.
    fn accept(&mut self, new_u: SpinField, drift: f64, dt: f64, new_energy: f64, gamma1: f64, tol: f64) {
        let m = new_u.field().comps();
        let old = self.u.field().values();
        let new = new_u.field().values();
        let h = new_u.grid().spacing();
        let n_sites = new_u.grid().len();
        let inc = pairwise_sum_by(n_sites, &|k| {
            let mut s = 0.0;
            for c in 0..m {
                let d = new[k * m + c] - old[k * m + c];
                s += d * d;
            }
            s
        }) * h
            * h;
        let l4 = l4_gradient_norm4(new_u.field());
        self.diss_cum += gamma1 * inc / dt;
        self.l4_cum += 0.5 * dt * (self.l4_now + l4);
        self.l4_now = l4;
        let rise = new_energy - self.energy;
        if self.e0 > 0.0 {
            self.max_energy_rise = self.max_energy_rise.max(rise / self.e0);
        } else {
            self.max_energy_rise = self.max_energy_rise.max(rise);
        }
        if rise > tol {
            self.monotone_violations += 1;
        }
        self.energy = new_energy;
        self.last_drift = drift;
        self.max_drift = self.max_drift.max(drift);
        self.max_target_distance = self.max_target_distance.max(max_target_distance(&new_u));
        self.u = new_u;
        self.t += dt;
        self.step_count += 1;
    }
}

fn max_target_distance(u: &SpinField) -> f64 {
    let t = u.target();
    u.field().sites().map(|s| t.distance(s)).fold(0.0, f64::max)
}

/// `u + c * v` on the sites, boundary kept from `u`.
fn axpy(u: &Field, c: f64, v: &Field) -> Field {
    let mut out = u.clone();
    for (o, x) in out.values_mut().iter_mut().zip(v.values()) {
        *o += c * x;
    }
    out
}

/// Explicit trapezoidal step. The stage is projected before the corrector;
/// returns the drift of the final projection.
pub fn step_heun(state: &mut SimState, cfg: &SimConfig, dt: f64) -> Result<f64> {
    let f0 = ll_rhs(&state.u, cfg.alpha, cfg.beta)?;
    let (stage, _) = renormalize(axpy(state.u.field(), dt, &f0), state.target())?;
    let f1 = ll_rhs(&stage, cfg.alpha, cfg.beta)?;
    let mut avg = f0;
    for (a, b) in avg.values_mut().iter_mut().zip(f1.values()) {
        *a = 0.5 * (*a + b);
    }
    let raw = axpy(state.u.field(), dt, &avg);
    raw.check_finite()?;
    let (next, drift) = renormalize(raw, state.target())?;
    let e = flow_energy(next.field());
    let tol = cfg.tol_mono * state.e0;
    state.accept(next, drift, dt, e, cfg.gamma1(), tol);
    Ok(drift)
}

/// One IMEX attempt at step `dt`: `(I - dt alpha lap) w* = w + dt (rhs - alpha lap u)`
/// on `w = u - boundary`. Returns the projected field, drift and energy.
#[allow(clippy::needless_range_loop)] // component-strided indexing
fn imex_attempt(u: &SpinField, cfg: &SimConfig, dt: f64, solver: &DirichletSolver) -> Result<(SpinField, f64, f64)> {
    let grid = *u.grid();
    let m = u.field().comps();
    let b = u.boundary().to_vec();
    let lap = laplacian(u.field());
    let rhs = ll_rhs(u, cfg.alpha, cfg.beta)?;
    let n2 = grid.len();
    let mut out = u.field().clone();
    let mut comp = alloc::vec![0.0; n2];
    for c in 0..m {
        for k in 0..n2 {
            let w = u.field().values()[k * m + c] - b[c];
            comp[k] = w + dt * (rhs.values()[k * m + c] - cfg.alpha * lap.values()[k * m + c]);
        }
        let ws = solver.solve_helmholtz(&comp, dt * cfg.alpha);
        for k in 0..n2 {
            out.values_mut()[k * m + c] = b[c] + ws[k];
        }
    }
    out.check_finite()?;
    let (next, drift) = renormalize(out, u.target())?;
    let e = flow_energy(next.field());
    Ok((next, drift, e))
}

/// IMEX step with the energy guard: a step raising `E` by more than
/// `tol_mono E(0)` is rejected and retried at half the step, at most
/// [`MAX_REJECTIONS`] times. Returns the step actually taken.
pub fn step_imex(state: &mut SimState, cfg: &SimConfig, dt: f64, solver: &DirichletSolver) -> Result<f64> {
    let tol = cfg.tol_mono * state.e0;
    let mut dt = dt;
    let mut rejections = 0;
    loop {
        let attempt = imex_attempt(&state.u, cfg, dt, solver);
        match attempt {
            Ok((next, drift, e)) if e <= state.energy + tol => {
                state.accept(next, drift, dt, e, cfg.gamma1(), tol);
                return Ok(dt);
            }
            Ok(_) | Err(Error::OutsideTube { .. }) => {
                rejections += 1;
                state.rejections += 1;
                if rejections > MAX_REJECTIONS {
                    return Err(Error::Rejected { rejections });
                }
                dt *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Callbacks invoked by [`run`] on the snapshot and ledger cadences.
pub trait Hooks {
    fn snapshot(&mut self, _state: &SimState) -> Result<()> {
        Ok(())
    }
    fn ledger_row(&mut self, _row: &LedgerRow) -> Result<()> {
        Ok(())
    }
}

pub struct NoHooks;

impl Hooks for NoHooks {}

/// Stateful stepper: holds the current step size and, for IMEX, the solver.
#[derive(Debug, Clone)]
pub struct Integrator {
    cfg: SimConfig,
    dt: f64,
    solver: Option<DirichletSolver>,
}

impl Integrator {
    pub fn new(cfg: SimConfig, grid: Grid) -> Result<Self> {
        cfg.validate()?;
        let explicit = cfl_dt(&grid, cfg.alpha, cfg.beta, cfg.dt_safety);
        let (dt, solver) = match cfg.scheme {
            Scheme::Heun => (explicit, None),
            Scheme::Imex => (explicit * cfg.imex_factor, Some(DirichletSolver::new(grid))),
        };
        Ok(Self { cfg, dt, solver })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Overrides the step size (used by refinement studies).
    pub fn set_dt(&mut self, dt: f64) {
        self.dt = dt;
    }

    /// Advances one step, not beyond `t_limit`.
    pub fn step(&mut self, state: &mut SimState, t_limit: f64) -> Result<()> {
        let dt = self.dt.min(t_limit - state.t);
        let clipped = dt < self.dt;
        let r = match &self.solver {
            None => step_heun(state, &self.cfg, dt).map(|_| ()),
            Some(s) => step_imex(state, &self.cfg, dt, s).map(|taken| {
                // keep a halved step for the rest of the run
                if taken < dt && !clipped {
                    self.dt = taken;
                }
            }),
        };
        r.map_err(|e| Error::Step { step: state.step_count, t: state.t, source: Box::new(e) })
    }
}

/// Runs from `initial` to `cfg.t_end`, recording ledger row 0 at `t = 0`, then
/// every `ledger_every` steps and once more at the end.
pub fn run(initial: SpinField, cfg: &SimConfig, hooks: &mut dyn Hooks) -> Result<SimState> {
    let mut integ = Integrator::new(cfg.clone(), *initial.grid())?;
    let mut state = SimState::new(initial, cfg.radii.clone());
    run_with(&mut integ, &mut state, hooks)?;
    Ok(state)
}

/// [`run`] with a caller-owned integrator and state.
pub fn run_with(integ: &mut Integrator, state: &mut SimState, hooks: &mut dyn Hooks) -> Result<()> {
    let cfg = integ.config().clone();
    let t_end = cfg.t_end;
    let emit = |state: &mut SimState, hooks: &mut dyn Hooks| -> Result<()> {
        state.record(cfg.stride);
        let row = state.ledger.last().expect("row just pushed").clone();
        hooks.ledger_row(&row)
    };
    if state.ledger.is_empty() {
        emit(state, hooks)?;
        if cfg.snapshot_every > 0 {
            hooks.snapshot(state)?;
        }
    }
    let eps = 1e-12 * t_end.max(1.0);
    let capped = |s: &SimState| cfg.max_steps > 0 && s.step_count >= cfg.max_steps;
    while t_end - state.t > eps && !capped(state) {
        integ.step(state, t_end)?;
        if state.step_count.is_multiple_of(cfg.ledger_every) {
            emit(state, hooks)?;
        }
        if cfg.snapshot_every > 0 && state.step_count.is_multiple_of(cfg.snapshot_every) {
            hooks.snapshot(state)?;
        }
    }
    let last_t = state.ledger.last().map(|r| r.t);
    if last_t != Some(state.t) {
        emit(state, hooks)?;
        if cfg.snapshot_every > 0 && !state.step_count.is_multiple_of(cfg.snapshot_every) {
            hooks.snapshot(state)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point;
    use crate::init::{random_smooth, stereographic_bubble};
    use alloc::vec;

    #[test]
    fn cfl_formula() {
        let g = Grid::new(256, 16.0).unwrap();
        assert!((cfl_dt(&g, 1.0, 0.0, 0.2) - 3.90625e-4).abs() < 1e-18);
        let a = cfl_dt(&g, 1.0, 0.5, 0.2);
        let b = cfl_dt(&g, 1.0, 1.0, 0.2);
        assert!((b / a - 1.5 / 2.0).abs() < 1e-15);
        let g2 = Grid::new(512, 16.0).unwrap();
        assert!((cfl_dt(&g2, 1.0, 0.0, 0.2) * 4.0 - cfl_dt(&g, 1.0, 0.0, 0.2)).abs() < 1e-18);
    }

    #[test]
    fn config_rejects_bad_alpha() {
        assert!(SimConfig::new(0.0, 1.0).is_err());
        assert!(SimConfig::new(-1.0, 1.0).is_err());
        assert!(SimConfig::new(1.0, -3.0).is_ok());
    }

    #[test]
    fn constant_map_is_fixed() {
        let g = Grid::new(16, 2.0).unwrap();
        let u = SpinField::new(Field::constant(g, &[0.0, 0.0, 1.0]), Target::Sphere).unwrap();
        for scheme in [Scheme::Heun, Scheme::Imex] {
            let mut cfg = SimConfig::new(1.0, 0.5).unwrap();
            cfg.scheme = scheme;
            cfg.t_end = 0.05;
            cfg.ledger_every = 10;
            let s = run(u.clone(), &cfg, &mut NoHooks).unwrap();
            assert_eq!(s.u.field(), u.field());
            assert_eq!(s.max_drift, 0.0);
            assert_eq!(s.ledger.dissipation_residual(), 0.0);
        }
    }

    #[test]
    fn zero_horizon_has_single_row() {
        let g = Grid::new(16, 2.0).unwrap();
        let u = stereographic_bubble(g, 0.5, Point::ORIGIN, 1).unwrap();
        let cfg = SimConfig::new(1.0, 0.0).unwrap();
        let s = run(u, &cfg, &mut NoHooks).unwrap();
        assert_eq!(s.ledger.len(), 1);
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn heun_decreases_energy_on_smooth_data() {
        let g = Grid::new(32, 4.0).unwrap();
        let u = random_smooth(g, Target::Sphere, 0.8, 1.0, 5).unwrap();
        let mut cfg = SimConfig::new(1.0, 0.5).unwrap();
        cfg.t_end = 0.2;
        cfg.ledger_every = 20;
        let s = run(u, &cfg, &mut NoHooks).unwrap();
        assert!(s.ledger.rows().windows(2).all(|w| w[1].energy < w[0].energy));
        assert_eq!(s.monotone_violations, 0);
        assert!(s.max_target_distance <= 1e-12);
        assert!(s.ledger.dissipation_residual() < 1e-2 * s.e0);
    }

    #[test]
    fn imex_agrees_with_heun_to_second_order() {
        let g = Grid::new(32, 4.0).unwrap();
        let u = random_smooth(g, Target::Sphere, 0.6, 1.2, 9).unwrap();
        let cfg = SimConfig::new(1.0, 0.5).unwrap();
        let solver = DirichletSolver::new(g);
        let mut diffs = vec![];
        for &dt in &[2e-3, 1e-3] {
            let mut a = SimState::new(u.clone(), vec![]);
            let mut b = SimState::new(u.clone(), vec![]);
            step_heun(&mut a, &cfg, dt).unwrap();
            step_imex(&mut b, &cfg, dt, &solver).unwrap();
            diffs.push(a.u.field().max_distance(b.u.field()));
        }
        let ratio = diffs[0] / diffs[1];
        assert!(ratio > 3.0, "ratio {ratio}, diffs {diffs:?}");
    }

    struct Count {
        snaps: usize,
        rows: usize,
    }

    impl Hooks for Count {
        fn snapshot(&mut self, _: &SimState) -> Result<()> {
            self.snaps += 1;
            Ok(())
        }
        fn ledger_row(&mut self, _: &LedgerRow) -> Result<()> {
            self.rows += 1;
            Ok(())
        }
    }

    #[test]
    fn hooks_follow_cadence() {
        let g = Grid::new(16, 2.0).unwrap();
        let u = random_smooth(g, Target::CliffordTorus, 0.3, 0.5, 1).unwrap();
        let mut cfg = SimConfig::new(1.0, 0.0).unwrap();
        let dt = cfl_dt(&g, 1.0, 0.0, cfg.dt_safety);
        cfg.t_end = 25.0 * dt;
        cfg.ledger_every = 10;
        cfg.snapshot_every = 5;
        let mut c = Count { snaps: 0, rows: 0 };
        let s = run(u, &cfg, &mut c).unwrap();
        assert_eq!(s.step_count, 25);
        assert_eq!(c.rows, 4); // t=0, 10, 20, final
        assert_eq!(c.snaps, 6); // 0, 5, ..., 25
    }
}
