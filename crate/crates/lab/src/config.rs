//! Scenario configuration: TOML sections, `section.key=value` overrides and
//! validation.

use llflow_core::analytics::{default_radii, default_stride, DEFAULT_EPS1, DEFAULT_FLAG_RADIUS};
use llflow_core::dynamics::{cfl_dt, Scheme, SimConfig};
use llflow_core::init::{
    bubble_with_phase, calibrate_profile, equivariant_profile, random_smooth, torus_bump, Profile,
};
use llflow_core::{Field, Grid, Point, SpinField, Target};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::formats::Llf1;
use crate::presets;
use crate::LabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub sim: SimSection,
    pub init: InitSection,
    #[serde(default)]
    pub target: TargetSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Heun,
    Imex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub alpha: f64,
    pub beta: f64,
    pub grid_n: usize,
    pub half_extent: f64,
    pub t_end: f64,
    pub dt_safety: f64,
    pub scheme: SchemeKind,
    pub imex_factor: f64,
    /// Steps between snapshots; 0 disables.
    pub snapshot_every: usize,
    /// Snapshot spacing in time, converted to steps; overrides `snapshot_every`.
    pub snapshot_dt: Option<f64>,
    pub ledger_every: usize,
    /// Hard step cap; 0 runs to `t_end`.
    pub steps: usize,
    /// Shrink the step so that it divides this interval evenly.
    pub dt_align: Option<f64>,
    pub seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            grid_n: 256,
            half_extent: 16.0,
            t_end: 0.0,
            dt_safety: 0.2,
            scheme: SchemeKind::Heun,
            imex_factor: 10.0,
            snapshot_every: 0,
            snapshot_dt: None,
            ledger_every: 100,
            steps: 0,
            dt_align: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Arctan,
    Gauss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSection {
    Constant {
        value: Option<Vec<f64>>,
    },
    Bubble {
        lambda: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default = "one_u32")]
        degree: u32,
        #[serde(default)]
        phase: f64,
    },
    Equivariant {
        profile: ProfileKind,
        #[serde(default = "one_f64")]
        amplitude: f64,
        #[serde(default = "one_f64")]
        lambda: f64,
        #[serde(default = "one_i32")]
        winding: i32,
        /// Replace `amplitude` by the value giving this energy.
        calibrate_energy: Option<f64>,
        #[serde(default = "ten")]
        amplitude_max: f64,
    },
    TorusBump {
        amplitude: f64,
        width: f64,
    },
    Random {
        amplitude: f64,
        width: f64,
    },
    File {
        path: PathBuf,
    },
}

fn one_u32() -> u32 {
    1
}
fn one_i32() -> i32 {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Sphere,
    Torus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub kind: TargetKind,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self { kind: TargetKind::Sphere }
    }
}

/// Checks a scenario can request; each becomes one PASS/FAIL line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Audit {
    Decay,
    Dissipation,
    DissipationRefinement,
    L4Convergence,
    NoConcentration,
    Stationary,
    TensionRefinement,
    Mnbv,
    Ladyzhenskaya,
    LocalEnergy,
    Concentration,
    BubbleFit,
    DiffuseControl,
    Gauge,
    CurlRefinement,
    GaugeControls,
    Groundstate,
}

impl Audit {
    pub fn name(self) -> &'static str {
        match self {
            Audit::Decay => "decay",
            Audit::Dissipation => "dissipation",
            Audit::DissipationRefinement => "dissipation_refinement",
            Audit::L4Convergence => "l4_convergence",
            Audit::NoConcentration => "no_concentration",
            Audit::Stationary => "stationary",
            Audit::TensionRefinement => "tension_refinement",
            Audit::Mnbv => "mnbv",
            Audit::Ladyzhenskaya => "ladyzhenskaya",
            Audit::LocalEnergy => "local_energy",
            Audit::Concentration => "concentration",
            Audit::BubbleFit => "bubble_fit",
            Audit::DiffuseControl => "diffuse_control",
            Audit::Gauge => "gauge",
            Audit::CurlRefinement => "curl_refinement",
            Audit::GaugeControls => "gauge_controls",
            Audit::Groundstate => "groundstate",
        }
    }

    /// Audits reading the in-memory trajectory (initial, snapshots, final).
    pub fn needs_trajectory(self) -> bool {
        matches!(self, Audit::Ladyzhenskaya | Audit::LocalEnergy | Audit::Mnbv)
    }

    /// Audits that regenerate the initial data on finer grids.
    pub fn needs_generator(self) -> bool {
        matches!(self, Audit::TensionRefinement | Audit::CurlRefinement | Audit::GaugeControls)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Ledger and scan radii, strictly descending; dyadic default.
    pub radii: Option<Vec<f64>>,
    pub eps1: f64,
    pub flag_radius: f64,
    pub stride: Option<usize>,
    pub audits: Vec<Audit>,
    /// `E(t_end) / E(0)` bound.
    pub decay_ratio: f64,
    /// Dissipation residual bound relative to `E(0)`.
    pub diss_tol: f64,
    /// Bound on `l4_cum` increments over the final tenth of the run.
    pub l4_tol: f64,
    /// Required residual reduction per halving.
    pub min_ratio: f64,
    /// Required log-log slope of refinement studies.
    pub min_slope: f64,
    /// Number of grids `n, 2n, 4n, ...` in refinement studies.
    pub refine_levels: usize,
    /// Displacement bound in units of `h^2`.
    pub stationary_factor: f64,
    /// `mnbv` slack bound `-tol_h`, relative to the left-hand side.
    pub mnbv_tol: f64,
    /// Radii of the Ladyzhenskaya and local-energy audits.
    pub audit_radii: Vec<f64>,
    /// Upper end of the band for empirical audit constants.
    pub constant_band: f64,
    /// Time differences of the Ginzburg-Landau residual, coarse first.
    pub gauge_dts: Vec<f64>,
    pub lp_exponents: Vec<f64>,
    pub noise_amplitude: f64,
    pub fit_grid_n: usize,
    pub fit_half_extent: f64,
    pub fit_tol: f64,
    pub idempotence_tol: f64,
    pub control_grid_n: usize,
    pub control_half_extent: f64,
    pub control_lambda: f64,
    pub groundstate_tol: f64,
    pub groundstate_rmax: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            radii: None,
            eps1: DEFAULT_EPS1,
            flag_radius: DEFAULT_FLAG_RADIUS,
            stride: None,
            audits: Vec::new(),
            decay_ratio: 0.1,
            diss_tol: 1e-3,
            l4_tol: 1e-3,
            min_ratio: 1.8,
            min_slope: 1.8,
            refine_levels: 3,
            stationary_factor: 10.0,
            mnbv_tol: 1e-2,
            audit_radii: vec![1.0, 2.0],
            constant_band: 1.0,
            gauge_dts: vec![0.04, 0.02],
            lp_exponents: vec![3.0, 4.0, 6.0],
            noise_amplitude: 0.05,
            fit_grid_n: 96,
            fit_half_extent: 2.0,
            fit_tol: 1e-3,
            idempotence_tol: 1e-6,
            control_grid_n: 320,
            control_half_extent: 16.0,
            control_lambda: 4.0,
            groundstate_tol: 1e-10,
            groundstate_rmax: llflow_core::groundstate::DEFAULT_R_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Defaults to `out/<prefix>`.
    pub dir: Option<PathBuf>,
    /// Defaults to the scenario name.
    pub prefix: Option<String>,
}

/// Parsed `section.key=value` overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides(BTreeMap<(String, String), toml::Value>);

impl Overrides {
    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Self, LabError> {
        let mut map: BTreeMap<(String, String), toml::Value> = BTreeMap::new();
        for item in items {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("override `{item}` is not section.key=value")))?;
            let (section, field) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| LabError::Config(format!("override key `{key}` lacks a section")))?;
            let value = parse_value(raw.trim());
            let k = (section.to_owned(), field.to_owned());
            if let Some(prev) = map.get(&k) {
                if *prev != value {
                    return Err(LabError::Config(format!("conflicting overrides for `{key}`")));
                }
            }
            map.insert(k, value);
        }
        Ok(Self(map))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn apply(&self, table: &mut toml::Table) -> Result<(), LabError> {
        for ((section, key), value) in &self.0 {
            let entry = table.entry(section.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(t) = entry else {
                return Err(LabError::Config(format!("`{section}` is not a section")));
            };
            t.insert(key.clone(), value.clone());
        }
        Ok(())
    }
}

/// TOML literal when it parses as one, bare string otherwise.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, overrides: &Overrides) -> Result<Self, LabError> {
        let mut table: toml::Table = text.parse().map_err(|e| LabError::Config(format!("{e}")))?;
        overrides.apply(&mut table)?;
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| LabError::Config(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A preset name or a path to a TOML file. Returns the scenario name too.
    pub fn load(name_or_path: &str, overrides: &Overrides) -> Result<(String, Self), LabError> {
        if let Some(p) = presets::find(name_or_path) {
            return Ok((p.name.to_owned(), Self::from_toml(p.toml, overrides)?));
        }
        let path = PathBuf::from(name_or_path);
        if !path.exists() {
            return Err(LabError::UnknownPreset { name: name_or_path.to_owned(), known: presets::names().join(", ") });
        }
        let text = std::fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into());
        Ok((name, Self::from_toml(&text, overrides)?))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: String| Err(LabError::Config(m));
        let s = &self.sim;
        if !(s.alpha > 0.0 && s.alpha.is_finite()) {
            return bad(format!("sim.alpha = {} must be positive", s.alpha));
        }
        if s.grid_n < Grid::MIN_SITES || !s.grid_n.is_multiple_of(2) {
            return bad(format!("sim.grid_n = {} must be even and >= {}", s.grid_n, Grid::MIN_SITES));
        }
        if !(s.half_extent > 0.0 && s.half_extent.is_finite()) {
            return bad(format!("sim.half_extent = {} must be positive", s.half_extent));
        }
        if let Some(d) = s.snapshot_dt {
            if !(d > 0.0) {
                return bad("sim.snapshot_dt must be positive".into());
            }
        }
        if let Some(d) = s.dt_align {
            if !(d > 0.0) {
                return bad("sim.dt_align must be positive".into());
            }
        }
        self.sim_config()?;
        let a = &self.analysis;
        if let Some(r) = &a.radii {
            if r.is_empty() || r.windows(2).any(|w| !(w[1] < w[0])) || r.iter().any(|x| !(*x > 0.0)) {
                return bad("analysis.radii must be positive and strictly descending".into());
            }
        }
        if a.stride == Some(0) {
            return bad("analysis.stride must be >= 1".into());
        }
        if !(a.eps1 > 0.0) || !(a.flag_radius > 0.0) {
            return bad("analysis.eps1 and analysis.flag_radius must be positive".into());
        }
        if a.refine_levels < 2 && a.audits.iter().any(|x| x.needs_generator()) {
            return bad("refinement audits need analysis.refine_levels >= 2".into());
        }
        if a.gauge_dts.len() < 2 && a.audits.iter().any(|x| matches!(x, Audit::Gauge | Audit::GaugeControls)) {
            return bad("gauge audits need two entries in analysis.gauge_dts".into());
        }
        if a.audits.iter().any(|x| x.needs_generator()) && matches!(self.init, InitSection::File { .. }) {
            return bad("refinement audits cannot regenerate file initial data".into());
        }
        let time_audits = a.audits.iter().any(|x| matches!(x, Audit::Ladyzhenskaya | Audit::LocalEnergy));
        if time_audits && self.sim.snapshot_dt.is_none() && self.sim.snapshot_every == 0 && self.simulates() {
            return bad("trajectory audits need sim.snapshot_every or sim.snapshot_dt".into());
        }
        let target = self.target();
        let sphere_only = matches!(self.init, InitSection::Bubble { .. } | InitSection::Equivariant { .. });
        if sphere_only && target != Target::Sphere {
            return bad("bubble and equivariant data need target.kind = sphere".into());
        }
        if matches!(self.init, InitSection::TorusBump { .. }) && target != Target::CliffordTorus {
            return bad("torus_bump data needs target.kind = torus".into());
        }
        Ok(())
    }

    pub fn target(&self) -> Target {
        match self.target.kind {
            TargetKind::Sphere => Target::Sphere,
            TargetKind::Torus => Target::CliffordTorus,
        }
    }

    pub fn grid(&self) -> Result<Grid, LabError> {
        Ok(Grid::new(self.sim.grid_n, self.sim.half_extent)?)
    }

    pub fn simulates(&self) -> bool {
        self.sim.t_end > 0.0
    }

    pub fn radii(&self, grid: &Grid) -> Vec<f64> {
        self.analysis.radii.clone().unwrap_or_else(|| default_radii(grid))
    }

    pub fn stride(&self, grid: &Grid) -> usize {
        self.analysis.stride.unwrap_or_else(|| default_stride(grid))
    }

    /// Integrator settings; `t_end` is the physical horizon, `steps` a cap.
    pub fn sim_config(&self) -> Result<SimConfig, LabError> {
        let s = &self.sim;
        let mut c = SimConfig::new(s.alpha, s.beta)?;
        c.scheme = match s.scheme {
            SchemeKind::Heun => Scheme::Heun,
            SchemeKind::Imex => Scheme::Imex,
        };
        c.dt_safety = s.dt_safety;
        c.imex_factor = s.imex_factor;
        c.t_end = s.t_end;
        c.max_steps = s.steps;
        c.ledger_every = s.ledger_every;
        let grid = self.grid()?;
        c.radii = self.radii(&grid);
        c.stride = self.stride(&grid);
        c.snapshot_every = self.snapshot_cadence(self.step_size(&grid));
        c.validate()?;
        Ok(c)
    }

    /// Nominal step before guard halvings.
    pub fn step_size(&self, grid: &Grid) -> f64 {
        let s = &self.sim;
        let explicit = cfl_dt(grid, s.alpha, s.beta, s.dt_safety);
        let dt = match s.scheme {
            SchemeKind::Heun => explicit,
            SchemeKind::Imex => explicit * s.imex_factor,
        };
        match s.dt_align {
            Some(a) => a / (a / dt).ceil(),
            None => dt,
        }
    }

    fn snapshot_cadence(&self, dt: f64) -> usize {
        match self.sim.snapshot_dt {
            Some(d) => ((d / dt).round() as usize).max(1),
            None => self.sim.snapshot_every,
        }
    }

    /// Initial data on the configured grid.
    pub fn initial_field(&self) -> Result<SpinField, LabError> {
        self.initial_field_on(self.grid()?)
    }

    /// Initial data regenerated on another grid (refinement studies).
    pub fn initial_field_on(&self, grid: Grid) -> Result<SpinField, LabError> {
        let target = self.target();
        Ok(match &self.init {
            InitSection::Constant { value } => {
                let v = value.clone().unwrap_or_else(|| target.default_boundary());
                if v.len() != target.ambient_dim() {
                    return Err(LabError::Config(format!(
                        "init.value has {} components, target needs {}",
                        v.len(),
                        target.ambient_dim()
                    )));
                }
                SpinField::new(Field::constant(grid, &v), target)?
            }
            InitSection::Bubble { lambda, center, degree, phase } => {
                bubble_with_phase(grid, *lambda, Point::new(center[0], center[1]), *degree, *phase)?
            }
            InitSection::Equivariant { profile, amplitude, lambda, winding, calibrate_energy, amplitude_max } => {
                let p = match profile {
                    ProfileKind::Arctan => Profile::Arctan { amplitude: *amplitude, lambda: *lambda },
                    ProfileKind::Gauss => Profile::Gauss { amplitude: *amplitude, lambda: *lambda },
                };
                match calibrate_energy {
                    Some(e) => calibrate_profile(grid, p, *winding, *amplitude_max, *e)?.field,
                    None => equivariant_profile(grid, p, *winding)?,
                }
            }
            InitSection::TorusBump { amplitude, width } => torus_bump(grid, *amplitude, *width)?,
            InitSection::Random { amplitude, width } => random_smooth(grid, target, *amplitude, *width, self.sim.seed)?,
            InitSection::File { path } => {
                let f = Llf1::read(path)?;
                if f.grid != grid {
                    return Err(LabError::Config(format!(
                        "{} holds n={} L={}, config asks n={} L={}",
                        path.display(),
                        f.grid.n(),
                        f.grid.half_extent(),
                        grid.n(),
                        grid.half_extent()
                    )));
                }
                let u = f.into_spin_field()?;
                if u.target() != target {
                    return Err(LabError::Config(format!("{} does not hold {} data", path.display(), target.name())));
                }
                u
            }
        })
    }

    pub fn output_dir(&self, name: &str) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out").join(self.prefix(name)))
    }

    pub fn prefix(&self, name: &str) -> String {
        self.output.prefix.clone().unwrap_or_else(|| name.to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[sim]\nalpha = 1.0\ngrid_n = 32\nhalf_extent = 4.0\n[init]\nkind = \"bubble\"\nlambda = 1.0\n";

    #[test]
    fn parses_and_overrides() {
        let o = Overrides::parse(&["sim.beta=0.5", "init.center=[0.5, 0.0]"]).unwrap();
        let c = ScenarioConfig::from_toml(BASE, &o).unwrap();
        assert_eq!(c.sim.beta, 0.5);
        assert_eq!(c.init, InitSection::Bubble { lambda: 1.0, center: [0.5, 0.0], degree: 1, phase: 0.0 });
        let s = ScenarioConfig::from_toml(&c.to_toml(), &Overrides::default()).unwrap();
        assert_eq!(s, c);
    }

    #[test]
    fn rejects_bad_configs() {
        let none = Overrides::default();
        assert!(ScenarioConfig::from_toml(&format!("{BASE}bogus = 1\n"), &none).is_err());
        assert!(ScenarioConfig::from_toml(&BASE.replace("alpha = 1.0", "alpha = 0.0"), &none).is_err());
        assert!(ScenarioConfig::from_toml(&BASE.replace("grid_n = 32", "grid_n = 31"), &none).is_err());
        assert!(ScenarioConfig::from_toml(&BASE.replace("half_extent = 4.0", "half_extent = -1.0"), &none).is_err());
        assert!(ScenarioConfig::from_toml(&format!("{BASE}[target]\nkind = \"torus\"\n"), &none).is_err());
        assert!(ScenarioConfig::from_toml(&format!("{BASE}[analysis]\naudits = [\"nope\"]\n"), &none).is_err());
        assert!(Overrides::parse(&["sim.alpha=1", "sim.alpha=2"]).is_err());
        assert!(Overrides::parse(&["sim.alpha=1", "sim.alpha=1"]).is_ok());
        assert!(Overrides::parse(&["alpha=1"]).is_err());
    }

    #[test]
    fn scheme_and_alignment() {
        let o = Overrides::parse(&["sim.scheme=imex", "sim.dt_align=0.01"]).unwrap();
        let c = ScenarioConfig::from_toml(BASE, &o).unwrap();
        let g = c.grid().unwrap();
        let dt = c.step_size(&g);
        assert!(dt <= 10.0 * cfl_dt(&g, 1.0, 0.0, 0.2));
        assert!(((0.01 / dt).round() - 0.01 / dt).abs() < 1e-9);
    }
}
