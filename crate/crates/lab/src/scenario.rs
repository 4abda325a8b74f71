//! Runs a configured scenario: simulation, artifacts and audits, one
//! PASS/FAIL [`Criterion`] per requested audit.

use llflow_core::analytics::{
    concentration_scan, default_radii, default_stride, ladyzhenskaya_audit, local_energy_inequality_audit, mnbv_audit,
    ConcentrationReport, Snapshot, EDGE_MARGIN,
};
use llflow_core::bubble::{bubble_fit, bubble_report};
use llflow_core::dynamics::{run_with, Hooks, Integrator, NoHooks, SimState};
use llflow_core::gauge::{
    build_frame, build_frame_auto, connection_lp_audit, coulomb_fix, curl_identity_residual, differential_fields,
    ginzburg_landau_residual, Frame, GaugeData, TimeDifference,
};
use llflow_core::groundstate::{critical_energy_bound, gn_constant, ground_state_with, DEFAULT_DR};
use llflow_core::init::{calibrate_profile, site_noise, Profile};
use llflow_core::ledger::LedgerRow;
use llflow_core::targets::tension;
use llflow_core::{Grid, Point, SpinField};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{Audit, InitSection, Overrides, ScenarioConfig};
use crate::formats::{fmt17, write_json, write_ledger, write_snapshot_index, Llf1};
use crate::LabError;

/// Reference values of the sharp Gagliardo-Nirenberg constant and of the
/// resulting lower bound for the sphere threshold.
pub const REFERENCE_C12: f64 = 0.64299;
pub const REFERENCE_E_STAR_S2: f64 = 2.92523;
pub const GROUNDSTATE_TOL: f64 = 1e-3;
pub const POHOZAEV_TOL: f64 = 1e-6;
pub const TARGET_DISTANCE_TOL: f64 = 1e-12;
pub const PHI_IDENTITY_TOL: f64 = 1e-10;
/// Controls pass when their refinement slope or residual ratio stays below these.
pub const CONTROL_MAX_SLOPE: f64 = 1.0;
pub const CONTROL_MAX_RATIO: f64 = 1.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Criterion {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.to_owned(), pass, detail }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub name: String,
    pub config: ScenarioConfig,
    pub out_dir: PathBuf,
    pub initial: SpinField,
    /// Final state when the scenario simulated.
    pub state: Option<SimState>,
    pub criteria: Vec<Criterion>,
    /// JSON reports by audit name, as written to disk.
    pub reports: BTreeMap<String, Value>,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    pub fn criterion(&self, name: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> String {
        self.criteria.iter().map(|c| format!("[{}] {c}\n", self.name)).collect()
    }
}

/// Loads a preset or config file, applies overrides and runs it.
pub fn run_scenario<S: AsRef<str>>(name_or_path: &str, overrides: &[S]) -> Result<ScenarioOutcome, LabError> {
    let o = Overrides::parse(overrides)?;
    let (name, cfg) = ScenarioConfig::load(name_or_path, &o)?;
    run_config(&name, cfg)
}

struct LabHooks<'a> {
    dir: &'a Path,
    prefix: &'a str,
    gamma1: f64,
    keep: bool,
    index: Vec<(String, f64, f64)>,
    traj: Vec<Snapshot>,
}

impl Hooks for LabHooks<'_> {
    fn snapshot(&mut self, s: &SimState) -> llflow_core::Result<()> {
        let file = format!("{}_snap_{:08}.llf1", self.prefix, s.step_count);
        let dissipated = s.diss_cum / self.gamma1;
        Llf1::from_field(s.u.field(), s.t)
            .write(&self.dir.join(&file))
            .map_err(|e| llflow_core::Error::Hook(e.to_string()))?;
        self.index.push((file, s.t, dissipated));
        if self.keep {
            self.traj.push(Snapshot { t: s.t, u: s.u.clone(), dissipated });
        }
        Ok(())
    }

    fn ledger_row(&mut self, _row: &LedgerRow) -> llflow_core::Result<()> {
        Ok(())
    }
}

/// States feeding the gauge audits: `u(t0)` and `u(t0 + dt)` per time difference.
struct GaugeSeries {
    reference: [f64; 3],
    u0: SpinField,
    frame0: Frame,
    later: Vec<(f64, SpinField)>,
}

struct Ctx {
    name: String,
    cfg: ScenarioConfig,
    dir: PathBuf,
    prefix: String,
    grid: Grid,
    u0: SpinField,
    state: Option<SimState>,
    integ: Option<Integrator>,
    traj: Vec<Snapshot>,
    scan: Option<ConcentrationReport>,
    gauge: Option<GaugeSeries>,
    reports: BTreeMap<String, Value>,
}

pub fn run_config(name: &str, cfg: ScenarioConfig) -> Result<ScenarioOutcome, LabError> {
    cfg.validate()?;
    let dir = cfg.output_dir(name);
    fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
    let prefix = cfg.prefix(name);
    let grid = cfg.grid()?;
    let u0 = cfg.initial_field()?;
    let cfg_path = dir.join(format!("{prefix}_config.toml"));
    fs::write(&cfg_path, cfg.to_toml()).map_err(|e| LabError::io(&cfg_path, e))?;
    Llf1::from_field(u0.field(), 0.0).write(&dir.join(format!("{prefix}_initial.llf1")))?;

    let mut ctx = Ctx {
        name: name.to_owned(),
        cfg,
        dir,
        prefix,
        grid,
        u0,
        state: None,
        integ: None,
        traj: Vec::new(),
        scan: None,
        gauge: None,
        reports: BTreeMap::new(),
    };
    if ctx.cfg.simulates() {
        ctx.simulate()?;
    }
    let mut criteria = Vec::new();
    for audit in ctx.cfg.analysis.audits.clone() {
        criteria.push(ctx.audit(audit)?);
    }
    if let Some(s) = &ctx.state {
        let pass = s.monotone_violations == 0 && s.max_target_distance <= TARGET_DISTANCE_TOL;
        criteria.push(Criterion::new(
            "monotone",
            pass,
            format!(
                "{} steps, {} energy rises above tol, max rise {:.2e} E(0), max target distance {:.2e}",
                s.step_count, s.monotone_violations, s.max_energy_rise, s.max_target_distance
            ),
        ));
    }
    let summary = json!({
        "scenario": ctx.name,
        "passed": criteria.iter().all(|c| c.pass),
        "criteria": criteria.iter().map(|c| json!({"name": c.name, "pass": c.pass, "detail": c.detail})).collect::<Vec<_>>(),
    });
    write_json(&ctx.dir.join(format!("{}_summary.json", ctx.prefix)), &summary)?;
    Ok(ScenarioOutcome {
        name: ctx.name,
        config: ctx.cfg,
        out_dir: ctx.dir,
        initial: ctx.u0,
        state: ctx.state,
        criteria,
        reports: ctx.reports,
    })
}

fn l2_interior(grid: &Grid, f: &llflow_core::Field, margin: usize) -> f64 {
    let n = grid.n();
    let h = grid.spacing();
    let mut s = 0.0;
    for j in margin..n - margin {
        for i in margin..n - margin {
            s += f.site(grid.index(i, j)).iter().map(|v| v * v).sum::<f64>();
        }
    }
    (h * h * s).sqrt()
}

/// Consecutive log-log slopes of `values` against `h, h/2, h/4, ...`.
fn halving_slopes(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn point_json(p: Point) -> Value {
    json!([p.x, p.y])
}

fn scan_json(r: &ConcentrationReport) -> Value {
    json!({
        "eps1": r.eps1,
        "flag_radius": r.flag_radius,
        "flagged": r.flagged,
        "candidate": r.candidate.map(|(p, rm)| json!({"center": point_json(p), "radius": rm})),
        "scans": r.scans.iter().map(|s| json!({"radius": s.radius, "value": s.value, "center": point_json(s.center)})).collect::<Vec<_>>(),
    })
}

fn phi_identity_error(g: &GaugeData) -> f64 {
    let scale = g.grad_sq.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    g.phi1
        .iter()
        .zip(&g.phi2)
        .zip(&g.grad_sq)
        .map(|((a, b), s)| (a.norm_sqr() + b.norm_sqr() - s).abs())
        .fold(0.0, f64::max)
        / scale
}

fn curl_l2(u: &SpinField) -> Result<f64, LabError> {
    let frame = build_frame_auto(u)?;
    let (fixed, _) = coulomb_fix(&frame, u)?;
    let g = differential_fields(&fixed, u, None)?;
    Ok(curl_identity_residual(&g).l2)
}

impl Ctx {
    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}", self.prefix))
    }

    fn report(&mut self, key: &str, value: Value) -> Result<(), LabError> {
        write_json(&self.path(&format!("{key}.json")), &value)?;
        self.reports.insert(key.to_owned(), value);
        Ok(())
    }

    fn sim(&self, audit: Audit) -> Result<&SimState, LabError> {
        self.state.as_ref().ok_or_else(|| LabError::Config(format!("audit `{}` needs sim.t_end > 0", audit.name())))
    }

    /// Field the static audits look at: the final state, or the initial data.
    fn current(&self) -> (&SpinField, f64) {
        match &self.state {
            Some(s) => (&s.u, s.t),
            None => (&self.u0, 0.0),
        }
    }

    fn simulate(&mut self) -> Result<(), LabError> {
        let sc = self.cfg.sim_config()?;
        let mut integ = Integrator::new(sc.clone(), self.grid)?;
        if self.cfg.sim.dt_align.is_some() {
            integ.set_dt(self.cfg.step_size(&self.grid));
        }
        let mut state = SimState::new(self.u0.clone(), sc.radii.clone());
        let keep = self.cfg.analysis.audits.iter().any(|a| a.needs_trajectory());
        let mut hooks = LabHooks {
            dir: &self.dir,
            prefix: &self.prefix,
            gamma1: sc.gamma1(),
            keep,
            index: Vec::new(),
            traj: Vec::new(),
        };
        let result = run_with(&mut integ, &mut state, &mut hooks);
        let (index, mut traj) = (hooks.index, hooks.traj);
        // artifacts of a failed run still help diagnose it
        write_ledger(&self.path("ledger.csv"), &state.ledger)?;
        write_snapshot_index(&self.path("snapshots.csv"), &index)?;
        result?;
        Llf1::from_field(state.u.field(), state.t).write(&self.path("final.llf1"))?;
        if keep && traj.is_empty() {
            let g1 = sc.gamma1();
            traj.push(Snapshot { t: 0.0, u: self.u0.clone(), dissipated: 0.0 });
            traj.push(Snapshot { t: state.t, u: state.u.clone(), dissipated: state.diss_cum / g1 });
        }
        let run = json!({
            "steps": state.step_count,
            "t": state.t,
            "dt": integ.dt(),
            "E0": state.e0,
            "E_final": state.energy,
            "dissipation_residual": state.ledger.dissipation_residual(),
            "l4_cum": state.l4_cum,
            "max_drift": state.max_drift,
            "max_target_distance": state.max_target_distance,
            "monotone_violations": state.monotone_violations,
            "max_energy_rise": state.max_energy_rise,
            "rejections": state.rejections,
            "grid": {"n": self.grid.n(), "L": self.grid.half_extent()},
        });
        self.report("run", run)?;
        self.traj = traj;
        self.state = Some(state);
        self.integ = Some(integ);
        Ok(())
    }

    fn audit(&mut self, audit: Audit) -> Result<Criterion, LabError> {
        let a = self.cfg.analysis.clone();
        let name = audit.name();
        match audit {
            Audit::Decay => {
                let s = self.sim(audit)?;
                let ratio = s.energy / s.e0;
                Ok(Criterion::new(
                    name,
                    ratio <= a.decay_ratio,
                    format!("E(t_end)/E(0) = {ratio:.4e} (bound {}) at t = {:.4}", a.decay_ratio, s.t),
                ))
            }
            Audit::Dissipation => {
                let s = self.sim(audit)?;
                let r = s.ledger.dissipation_residual() / s.e0;
                Ok(Criterion::new(
                    name,
                    r <= a.diss_tol,
                    format!("max residual {r:.4e} E(0) (bound {:.0e})", a.diss_tol),
                ))
            }
            Audit::DissipationRefinement => self.dissipation_refinement(),
            Audit::L4Convergence => {
                let s = self.sim(audit)?;
                let rows = s.ledger.rows();
                let t_end = s.t;
                let nondecreasing = rows.windows(2).all(|w| w[1].l4_cum >= w[0].l4_cum);
                let tail: Vec<f64> = rows.iter().filter(|r| r.t >= 0.9 * t_end).map(|r| r.l4_cum).collect();
                let incr = tail.last().copied().unwrap_or(0.0) - tail.first().copied().unwrap_or(0.0);
                let l4 = s.l4_cum;
                self.report(
                    "l4",
                    json!({"l4_cum": l4, "final_decade_increment": incr, "nondecreasing": nondecreasing}),
                )?;
                Ok(Criterion::new(
                    name,
                    nondecreasing && incr <= a.l4_tol,
                    format!("l4_cum = {l4:.6}, final-tenth increment {incr:.3e} (bound {:.0e})", a.l4_tol),
                ))
            }
            Audit::NoConcentration => {
                let s = self.sim(audit)?;
                let radii = s.ledger.radii().to_vec();
                let small: Vec<usize> = (0..radii.len()).filter(|&q| radii[q] <= a.flag_radius).collect();
                if small.is_empty() {
                    return Err(LabError::Config("no ledger radius at or below analysis.flag_radius".into()));
                }
                let mut worst = 0.0f64;
                let mut flagged_at = None;
                for r in s.ledger.rows() {
                    for &q in &small {
                        worst = worst.max(r.sup_local[q]);
                        if r.sup_local[q] > a.eps1 && flagged_at.is_none() {
                            flagged_at = Some(r.t);
                        }
                    }
                }
                let (u, _) = self.current();
                let scan = concentration_scan(u, &radii, a.eps1, a.flag_radius, self.cfg.stride(&self.grid))?;
                let mut rep = scan_json(&scan);
                rep["max_small_radius_energy"] = json!(worst);
                self.report("concentration", rep)?;
                Ok(Criterion::new(
                    name,
                    flagged_at.is_none() && !scan.flagged,
                    match flagged_at {
                        Some(t) => format!("flagged at t = {t:.4}"),
                        None => format!(
                            "max sup-local energy at radius <= {} is {worst:.4} < eps1 = {:.4}",
                            a.flag_radius, a.eps1
                        ),
                    },
                ))
            }
            Audit::Stationary => {
                let s = self.sim(audit)?;
                let h = self.grid.spacing();
                let disp = s.u.field().max_distance(self.u0.field());
                let bound = a.stationary_factor * h * h;
                Ok(Criterion::new(
                    name,
                    disp <= bound,
                    format!("max displacement {disp:.4e} after {} steps (bound {bound:.4e})", s.step_count),
                ))
            }
            Audit::TensionRefinement => {
                let mut norms = Vec::new();
                let mut hs = Vec::new();
                for k in 0..a.refine_levels {
                    let g = Grid::new(self.grid.n() << k, self.grid.half_extent())?;
                    let u = self.cfg.initial_field_on(g)?;
                    norms.push(l2_interior(&g, &tension(&u), EDGE_MARGIN));
                    hs.push(g.spacing());
                }
                let slopes = halving_slopes(&norms);
                self.report("tension", json!({"h": hs, "tension_l2": norms, "slopes": slopes}))?;
                Ok(Criterion::new(
                    name,
                    min_of(&slopes) >= a.min_slope,
                    format!("||tau|| = [{}], slopes [{}] (min {})", fmt_list(&norms), fmt_list(&slopes), a.min_slope),
                ))
            }
            Audit::Mnbv => {
                let fields: Vec<(f64, &SpinField)> = if self.traj.is_empty() {
                    vec![(0.0, &self.u0)]
                } else {
                    self.traj.iter().map(|s| (s.t, &s.u)).collect()
                };
                let reps: Vec<(f64, _)> = fields.iter().map(|(t, u)| (*t, mnbv_audit(u))).collect();
                let min_rel = reps.iter().map(|(_, r)| r.relative_slack()).fold(f64::INFINITY, f64::min);
                let tol_h = (-min_rel).max(0.0);
                let rows: Vec<Value> = reps
                    .iter()
                    .map(|(t, r)| json!({"t": t, "lhs": r.lhs, "curvature_term": r.curvature_term, "tension_term": r.tension_term, "rhs": r.rhs, "slack": r.slack, "relative_slack": r.relative_slack()}))
                    .collect();
                self.report("mnbv", json!({"snapshots": rows, "min_relative_slack": min_rel, "tol_h": tol_h}))?;
                Ok(Criterion::new(
                    name,
                    min_rel >= -a.mnbv_tol,
                    format!("min relative slack {min_rel:.4e} over {} fields (tol_h {tol_h:.2e})", reps.len()),
                ))
            }
            Audit::Ladyzhenskaya => {
                self.sim(audit)?;
                let stride = self.cfg.stride(&self.grid);
                let mut rows = Vec::new();
                let mut consts = Vec::new();
                for &r in &a.audit_radii {
                    let rep = ladyzhenskaya_audit(&self.traj, r, stride)?;
                    consts.push(rep.constant);
                    rows.push(json!({"radius": r, "lhs": rep.lhs, "eps": rep.eps, "hessian": rep.hessian, "energy_term": rep.energy_term, "rhs": rep.rhs, "constant": rep.constant}));
                }
                self.report("ladyzhenskaya", json!({"radii": rows}))?;
                let ok = consts.iter().all(|c| c.is_finite() && *c >= 0.0 && *c <= a.constant_band);
                Ok(Criterion::new(
                    name,
                    ok,
                    format!(
                        "constants [{}] at R = {:?} (band [0, {}])",
                        fmt_list(&consts),
                        a.audit_radii,
                        a.constant_band
                    ),
                ))
            }
            Audit::LocalEnergy => {
                self.sim(audit)?;
                let mut rows = Vec::new();
                let mut all = Vec::new();
                for &r in &a.audit_radii {
                    let rep = local_energy_inequality_audit(&self.traj, r)?;
                    all.extend([rep.c3_fwd, rep.c3_bwd, rep.c_outer]);
                    rows.push(json!({"radius": r, "C3_fwd": rep.c3_fwd, "C3_bwd": rep.c3_bwd, "C_outer": rep.c_outer, "pairs": rep.pairs, "centers": rep.centers}));
                }
                self.report("local_energy", json!({"radii": rows}))?;
                let ok = all.iter().all(|c| c.is_finite() && *c >= 0.0 && *c <= a.constant_band);
                Ok(Criterion::new(
                    name,
                    ok,
                    format!(
                        "(C3_fwd, C3_bwd, C_outer) per radius [{}] (band [0, {}])",
                        fmt_list(&all),
                        a.constant_band
                    ),
                ))
            }
            Audit::Concentration => self.concentration(),
            Audit::BubbleFit => self.bubble_fit(),
            Audit::DiffuseControl => self.diffuse_control(),
            Audit::Gauge => self.gauge_audit(),
            Audit::CurlRefinement => {
                let mut norms = Vec::new();
                for k in 0..a.refine_levels {
                    let g = Grid::new(self.grid.n() << k, self.grid.half_extent())?;
                    norms.push(curl_l2(&self.cfg.initial_field_on(g)?)?);
                }
                let slopes = halving_slopes(&norms);
                self.report("curl", json!({"n0": self.grid.n(), "curl_residual_l2": norms, "slopes": slopes}))?;
                Ok(Criterion::new(
                    name,
                    min_of(&slopes) >= a.min_slope,
                    format!(
                        "curl residual [{}], slopes [{}] (min {})",
                        fmt_list(&norms),
                        fmt_list(&slopes),
                        a.min_slope
                    ),
                ))
            }
            Audit::GaugeControls => self.gauge_controls(),
            Audit::Groundstate => self.groundstate(),
        }
    }

    fn dissipation_refinement(&mut self) -> Result<Criterion, LabError> {
        let s = self.sim(Audit::DissipationRefinement)?;
        let coarse = s.ledger.dissipation_residual();
        let e0 = s.e0;
        let mut cfg = self.cfg.clone();
        cfg.sim.dt_safety *= 0.5;
        cfg.sim.steps *= 2;
        cfg.sim.ledger_every *= 2;
        cfg.analysis.radii = Some(vec![self.grid.half_extent()]);
        let mut sc = cfg.sim_config()?;
        sc.snapshot_every = 0;
        let mut integ = Integrator::new(sc.clone(), self.grid)?;
        if cfg.sim.dt_align.is_some() {
            integ.set_dt(cfg.step_size(&self.grid));
        }
        let mut state = SimState::new(self.u0.clone(), sc.radii.clone());
        run_with(&mut integ, &mut state, &mut NoHooks)?;
        let fine = state.ledger.dissipation_residual();
        let ratio = coarse / fine;
        let pass = ratio >= self.cfg.analysis.min_ratio;
        self.report(
            "dissipation",
            json!({"residual": [coarse, fine], "relative": [coarse / e0, fine / e0], "ratio": ratio, "dt_safety": [self.cfg.sim.dt_safety, cfg.sim.dt_safety]}),
        )?;
        Ok(Criterion::new(
            "dissipation_refinement",
            pass,
            format!(
                "residual {:.4e} -> {:.4e} E(0) at half dt, ratio {ratio:.3} (min {})",
                coarse / e0,
                fine / e0,
                self.cfg.analysis.min_ratio
            ),
        ))
    }

    fn concentration(&mut self) -> Result<Criterion, LabError> {
        let a = self.cfg.analysis.clone();
        let (u, _) = self.current();
        let radii = self.cfg.radii(&self.grid);
        let scan = concentration_scan(u, &radii, a.eps1, a.flag_radius, self.cfg.stride(&self.grid))?;
        self.report("concentration", scan_json(&scan))?;
        let h = self.grid.spacing();
        let (pass, detail) = match (scan.candidate, &self.init_bubble()) {
            (None, _) => (false, "no radius carries eps1".to_owned()),
            (Some((x, r)), Some((lambda, c))) => {
                let ratio = r / lambda;
                let d = x.dist(*c);
                (
                    scan.flagged && (0.5..=2.0).contains(&ratio) && d <= 2.0 * h,
                    format!(
                        "flagged {}, R_m = {r} (R_m/lambda = {ratio:.3}), centre error {d:.3e} (2h = {:.3e})",
                        scan.flagged,
                        2.0 * h
                    ),
                )
            }
            (Some((x, r)), None) => {
                (scan.flagged, format!("flagged {} at ({:.4}, {:.4}), R_m = {r}", scan.flagged, x.x, x.y))
            }
        };
        self.scan = Some(scan);
        Ok(Criterion::new("concentration", pass, detail))
    }

    fn init_bubble(&self) -> Option<(f64, Point)> {
        match (&self.cfg.init, &self.state) {
            (InitSection::Bubble { lambda, center, degree: 1, .. }, None) => {
                Some((*lambda, Point::new(center[0], center[1])))
            }
            _ => None,
        }
    }

    fn bubble_fit(&mut self) -> Result<Criterion, LabError> {
        let a = self.cfg.analysis.clone();
        if self.scan.is_none() {
            self.concentration()?;
        }
        let scan = self.scan.clone().expect("scan computed above");
        let (u, t) = self.current();
        let reference = Grid::new(a.fit_grid_n, a.fit_half_extent)?;
        let rep = bubble_report(u, t, &scan, reference)?;
        let fit = rep.fit;
        let fitted = fit.sample(reference)?;
        Llf1::from_field(rep.rescaled.field(), t).write(&self.path("bubble_rescaled.llf1"))?;
        Llf1::from_field(fitted.field(), t).write(&self.path("bubble_fitted.llf1"))?;
        let again = bubble_fit(&fitted)?;
        let idem = (again.lambda - fit.lambda).abs().max(again.center.dist(fit.center));
        let recovery = self.init_bubble().map(|(lambda, c)| {
            let lr = lambda / rep.r_m;
            let cr = Point::new((c.x - rep.x_m.x) / rep.r_m, (c.y - rep.x_m.y) / rep.r_m);
            ((fit.lambda - lr).abs(), fit.center.dist(cr))
        });
        self.report(
            "bubble",
            json!({
                "x_m": point_json(rep.x_m),
                "r_m": rep.r_m,
                "t_m": rep.t_m,
                "lambda": fit.lambda,
                "center": point_json(fit.center),
                "phase": fit.phase,
                "degree": fit.degree,
                "lambda_physical": fit.lambda * rep.r_m,
                "center_physical": point_json(Point::new(rep.x_m.x + rep.r_m * fit.center.x, rep.x_m.y + rep.r_m * fit.center.y)),
                "h1_distance": fit.h1_distance,
                "bubble_energy": fit.bubble_energy,
                "window_energy": fit.window_energy,
                "converged": fit.converged,
                "iterations": fit.iterations,
                "idempotence": idem,
                "recovery_error": recovery.map(|(l, c)| json!({"lambda": l, "center": c})),
                "grid": {"n": reference.n(), "L": reference.half_extent()},
                "rescaled_file": format!("{}_bubble_rescaled.llf1", self.prefix),
                "fitted_file": format!("{}_bubble_fitted.llf1", self.prefix),
            }),
        )?;
        let rec_ok = recovery.is_none_or(|(l, c)| l <= a.fit_tol && c <= a.fit_tol);
        let pass = fit.converged && idem <= a.idempotence_tol && rec_ok;
        let rec = match recovery {
            Some((l, c)) => format!(", recovery error (lambda {l:.2e}, centre {c:.2e}) (tol {:.0e})", a.fit_tol),
            None => String::new(),
        };
        Ok(Criterion::new(
            "bubble_fit",
            pass,
            format!(
                "lambda {:.6}, a ({:.5}, {:.5}), H1 distance {:.3e}, converged {} in {}{rec}, refit drift {idem:.2e} (tol {:.0e})",
                fit.lambda, fit.center.x, fit.center.y, fit.h1_distance, fit.converged, fit.iterations, a.idempotence_tol
            ),
        ))
    }

    fn diffuse_control(&mut self) -> Result<Criterion, LabError> {
        let a = self.cfg.analysis.clone();
        let (u, _) = self.current();
        let energy = u.energy();
        let g = Grid::new(a.control_grid_n, a.control_half_extent)?;
        let cal = calibrate_profile(g, Profile::Arctan { amplitude: 1.0, lambda: a.control_lambda }, 1, 10.0, energy)?;
        let scan = concentration_scan(&cal.field, &default_radii(&g), a.eps1, a.flag_radius, default_stride(&g))?;
        let mut rep = scan_json(&scan);
        rep["energy"] = json!(cal.energy);
        rep["amplitude"] = json!(cal.parameter);
        rep["grid"] = json!({"n": g.n(), "L": g.half_extent()});
        self.report("diffuse_control", rep)?;
        let r_m = scan.candidate.map(|(_, r)| r);
        Ok(Criterion::new(
            "diffuse_control",
            !scan.flagged,
            format!("energy {:.4} (target {energy:.4}), R_m = {r_m:?}, flagged {}", cal.energy, scan.flagged),
        ))
    }

    fn gauge_series(&mut self) -> Result<&GaugeSeries, LabError> {
        if self.gauge.is_none() {
            let state = self.sim(Audit::Gauge)?.clone();
            let mut integ = self.integ.clone().expect("integrator kept with the state");
            let mut dts = self.cfg.analysis.gauge_dts.clone();
            dts.sort_by(|x, y| x.partial_cmp(y).expect("finite dts"));
            let t0 = state.t;
            let u0 = state.u.clone();
            let mut s = state;
            let mut later = Vec::new();
            for &d in &dts {
                while t0 + d - s.t > 1e-12 * (t0 + d) {
                    integ.step(&mut s, t0 + d)?;
                }
                later.push((d, s.u.clone()));
            }
            let frame = build_frame_auto(&u0)?;
            let reference = frame.reference();
            let (frame0, _) = coulomb_fix(&frame, &u0)?;
            Llf1::from_field(u0.field(), t0).write(&self.path("gauge_t0.llf1"))?;
            for (d, u) in &later {
                Llf1::from_field(u.field(), t0 + d).write(&self.path(&format!("gauge_dt{d}.llf1")))?;
            }
            self.gauge = Some(GaugeSeries { reference, u0, frame0, later });
        }
        Ok(self.gauge.as_ref().expect("just filled"))
    }

    /// GL residuals for each time difference, coarse first.
    fn gl_residuals(&mut self, alpha: f64) -> Result<Vec<(f64, f64, f64)>, LabError> {
        let beta = self.cfg.sim.beta;
        let gs = self.gauge_series()?;
        let mut out = Vec::new();
        for (d, b) in gs.later.iter().rev() {
            let (fb, _) = coulomb_fix(&build_frame(b, gs.reference)?, b)?;
            let ga = differential_fields(&gs.frame0, &gs.u0, Some(TimeDifference { other: b, dt: -d }))?;
            let gb = differential_fields(&fb, b, None)?;
            let r = ginzburg_landau_residual(&ga, &gb, *d, alpha, beta)?;
            out.push((*d, r.l2, r.relative));
        }
        Ok(out)
    }

    fn gauge_audit(&mut self) -> Result<Criterion, LabError> {
        let a = self.cfg.analysis.clone();
        let alpha = self.cfg.sim.alpha;
        let gl = self.gl_residuals(alpha)?;
        let gs = self.gauge_series()?;
        let (d_fine, b_fine) = gs.later.first().expect("two time differences");
        let g = differential_fields(&gs.frame0, &gs.u0, Some(TimeDifference { other: b_fine, dt: -d_fine }))?;
        let (div_abs, div_rel) = g.divergence_l2();
        let phi_err = phi_identity_error(&g);
        let curl = curl_identity_residual(&g);
        let masked = gs.frame0.masked_fraction();
        let mut lp_rows = Vec::new();
        for &p in &a.lp_exponents {
            let r = connection_lp_audit(&g, p)?;
            lp_rows.push(json!({"p": p, "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio, "time": r.time.map(|(l, rr, q)| json!({"lhs": l, "rhs": rr, "ratio": q}))}));
        }
        let ratios: Vec<f64> = gl.windows(2).map(|w| w[0].1 / w[1].1).collect();
        let grid = *g.grid();
        self.report(
            "gauge",
            json!({
                "div_a_l2": div_abs,
                "div_a_relative": div_rel,
                "curl_residual_l2": curl.l2,
                "curl_residual_max": curl.max,
                "phi_identity_max": phi_err,
                "lemma21": lp_rows,
                "gl_residual_l2": gl.iter().map(|(d, l, r)| json!({"dt": d, "l2": l, "relative": r})).collect::<Vec<_>>(),
                "gl_ratios": ratios,
                "masked_fraction": masked,
                "grid": {"n": grid.n(), "L": grid.half_extent()},
            }),
        )?;
        let pass = div_rel <= llflow_core::gauge::COULOMB_REL_TOL
            && phi_err <= PHI_IDENTITY_TOL
            && !ratios.is_empty()
            && min_of(&ratios) >= a.min_ratio;
        Ok(Criterion::new(
            "gauge",
            pass,
            format!(
                "div a {div_rel:.2e} relative, phi identity {phi_err:.2e}, GL residual [{}] ratios [{}]",
                fmt_list(&gl.iter().map(|x| x.1).collect::<Vec<_>>()),
                fmt_list(&ratios)
            ),
        ))
    }

    fn gauge_controls(&mut self) -> Result<Criterion, LabError> {
        let a = self.cfg.analysis.clone();
        let mut rough = Vec::new();
        for k in 0..a.refine_levels {
            let g = Grid::new(self.grid.n() << k, self.grid.half_extent())?;
            let u = site_noise(
                &self.cfg.initial_field_on(g)?,
                a.noise_amplitude,
                self.cfg.sim.seed.wrapping_add(k as u64),
            )?;
            rough.push(curl_l2(&u)?);
        }
        let rough_slopes = halving_slopes(&rough);
        let wrong = self.gl_residuals(2.0 * self.cfg.sim.alpha)?;
        let wrong_ratios: Vec<f64> = wrong.windows(2).map(|w| w[0].1 / w[1].1).collect();
        let rough_max = rough_slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let wrong_max = wrong_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.report(
            "gauge_controls",
            json!({
                "rough_noise_amplitude": a.noise_amplitude,
                "rough_curl_residual_l2": rough,
                "rough_slopes": rough_slopes,
                "wrong_alpha": 2.0 * self.cfg.sim.alpha,
                "wrong_alpha_gl_l2": wrong.iter().map(|(d, l, r)| json!({"dt": d, "l2": l, "relative": r})).collect::<Vec<_>>(),
                "wrong_alpha_ratios": wrong_ratios,
            }),
        )?;
        Ok(Criterion::new(
            "gauge_controls",
            rough_max < CONTROL_MAX_SLOPE && wrong_max < CONTROL_MAX_RATIO,
            format!(
                "rough-data curl slopes [{}] (< {CONTROL_MAX_SLOPE}), wrong-alpha GL ratios [{}] (< {CONTROL_MAX_RATIO})",
                fmt_list(&rough_slopes),
                fmt_list(&wrong_ratios)
            ),
        ))
    }

    fn groundstate(&mut self) -> Result<Criterion, LabError> {
        let a = self.cfg.analysis.clone();
        let p = ground_state_with(a.groundstate_tol, a.groundstate_rmax, DEFAULT_DR)?;
        let c12 = gn_constant(&p);
        let thr = critical_energy_bound(c12, 1.0)?;
        let poh = p.pohozaev_residual();
        self.report(
            "groundstate",
            json!({"f0": p.f0, "mass": p.mass(), "C12": c12, "E_star_lower_S2": thr.e_star_lower, "pohozaev_residual": poh, "r_max": p.r_max(), "dr": p.dr}),
        )?;
        write_profile_csv(&self.path("profile.csv"), &p)?;
        let pass = (c12 - REFERENCE_C12).abs() <= GROUNDSTATE_TOL
            && (thr.e_star_lower - REFERENCE_E_STAR_S2).abs() <= GROUNDSTATE_TOL
            && poh <= POHOZAEV_TOL;
        Ok(Criterion::new(
            "groundstate",
            pass,
            format!(
                "f0 = {:.6}, C12 = {c12:.6} (ref {REFERENCE_C12}), E_star lower = {:.6} (ref {REFERENCE_E_STAR_S2}), Pohozaev {poh:.2e}",
                p.f0, thr.e_star_lower
            ),
        ))
    }
}

/// `r,f,df` rows of a radial profile.
pub fn write_profile_csv(path: &Path, p: &llflow_core::groundstate::RadialProfile) -> Result<(), LabError> {
    let mut s = String::from("r,f,df\n");
    for k in 0..p.f.len() {
        s.push_str(&format!("{},{},{}\n", fmt17(p.radius(k)), fmt17(p.f[k]), fmt17(p.df[k])));
    }
    fs::write(path, s).map_err(|e| LabError::io(path, e))
}
