use clap::{Parser, Subcommand};
use llflow::config::Overrides;
use llflow::formats::{read_snapshot_index, to_json, write_json, Llf1};
use llflow::scenario::write_profile_csv;
use llflow::{presets, run_scenario, LabError, EXIT_CRITERION_FAILED};
use llflow_core::analytics::{
    concentration_scan, default_radii, default_stride, ladyzhenskaya_audit, local_energy_inequality_audit, mnbv_audit,
    ConcentrationReport, Snapshot, DEFAULT_EPS1, DEFAULT_FLAG_RADIUS,
};
use llflow_core::bubble::bubble_report;
use llflow_core::gauge::{
    build_frame, build_frame_auto, connection_lp_audit, coulomb_fix, curl_identity_residual, differential_fields,
    ginzburg_landau_residual, TimeDifference,
};
use llflow_core::groundstate::{critical_energy_bound, gn_constant, ground_state_with, DEFAULT_DR, DEFAULT_R_MAX};
use llflow_core::init::bubble_with_phase;
use llflow_core::{Grid, Point, SpinField};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "llflow", version, about = "Planar Landau-Lifshitz-Gilbert flow laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a preset or TOML scenario and print one PASS/FAIL line per criterion.
    Simulate {
        #[arg(long)]
        config: String,
        /// `section.key=value`, repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Ground state, sharp Gagliardo-Nirenberg constant and threshold bound.
    Groundstate {
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_R_MAX)]
        rmax: f64,
        #[arg(long, default_value_t = DEFAULT_DR)]
        dr: f64,
        /// Write the profile as `r,f,df` CSV.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coulomb gauge diagnostics of an LLF1 snapshot; with `--prev` also the
    /// Ginzburg-Landau residual between the two.
    GaugeAudit {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, requires = "dt")]
        prev: Option<PathBuf>,
        #[arg(long, requires = "prev")]
        dt: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rescale around a concentration point and fit the bubble family.
    BubbleFit {
        #[arg(long)]
        snapshot: PathBuf,
        /// `auto` or `x,y`.
        #[arg(long, default_value = "auto")]
        center: String,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_EPS1)]
        eps1: f64,
        #[arg(long, default_value_t = 96)]
        fit_n: usize,
        #[arg(long, default_value_t = 2.0)]
        fit_half_extent: f64,
        /// Directory for the JSON report and the rescaled and fitted LLF1 files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ladyzhenskaya, local-energy and Hessian audits over a snapshot directory.
    Audit {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0])]
        radii: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a stereographic bubble as LLF1.
    Harmonic {
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 1)]
        degree: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long = "half-extent", default_value_t = 16.0)]
        half_extent: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.0])]
        center: Vec<f64>,
    },
    /// Print a preset's config, the claim it exercises and its PASS criteria.
    Describe { name: String },
    /// List the presets.
    List,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    if let Err(e) = llflow::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn emit(value: &Value, out: Option<&Path>) -> Result<(), LabError> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", to_json(value)?);
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<SpinField, LabError> {
    Llf1::read(path)?.into_spin_field()
}

fn dispatch(cmd: Cmd) -> Result<u8, LabError> {
    match cmd {
        Cmd::Simulate { config, set } => {
            Overrides::parse(&set)?;
            let out = run_scenario(&config, &set)?;
            print!("{}", out.summary());
            println!("artifacts in {}", out.out_dir.display());
            Ok(if out.passed() { 0 } else { EXIT_CRITERION_FAILED as u8 })
        }
        Cmd::Groundstate { tol, rmax, dr, profile, out } => {
            let p = ground_state_with(tol, rmax, dr)?;
            let c12 = gn_constant(&p);
            let thr = critical_energy_bound(c12, 1.0)?;
            if let Some(path) = profile {
                write_profile_csv(&path, &p)?;
            }
            let v = json!({"f0": p.f0, "mass": p.mass(), "C12": c12, "E_star_lower_S2": thr.e_star_lower, "pohozaev_residual": p.pohozaev_residual()});
            emit(&v, out.as_deref())?;
            Ok(0)
        }
        Cmd::GaugeAudit { snapshot, prev, dt, alpha, beta, out } => {
            let u = load(&snapshot)?;
            let frame = build_frame_auto(&u)?;
            let (fixed, _) = coulomb_fix(&frame, &u)?;
            let g = differential_fields(&fixed, &u, None)?;
            let (div, div_rel) = g.divergence_l2();
            let curl = curl_identity_residual(&g);
            let mut lp_rows = Vec::new();
            for p in [3.0, 4.0, 6.0] {
                let r = connection_lp_audit(&g, p)?;
                lp_rows.push(json!({"p": p, "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio}));
            }
            let mut v = json!({
                "div_a_l2": div,
                "div_a_relative": div_rel,
                "curl_residual_l2": curl.l2,
                "lemma21": lp_rows,
                "masked_fraction": fixed.masked_fraction(),
                "grid": {"n": u.grid().n(), "L": u.grid().half_extent()},
            });
            if let (Some(pp), Some(dt)) = (prev, dt) {
                let earlier = load(&pp)?;
                let (fe, _) = coulomb_fix(&build_frame(&earlier, frame.reference())?, &earlier)?;
                let ge = differential_fields(&fe, &earlier, Some(TimeDifference { other: &u, dt: -dt }))?;
                let r = ginzburg_landau_residual(&ge, &g, dt, alpha, beta)?;
                v["gl_residual_l2"] = json!(r.l2);
                v["gl_residual_relative"] = json!(r.relative);
            }
            emit(&v, out.as_deref())?;
            Ok(0)
        }
        Cmd::BubbleFit { snapshot, center, scale, eps1, fit_n, fit_half_extent, out } => {
            let llf = Llf1::read(&snapshot)?;
            let t = llf.t;
            let u = llf.into_spin_field()?;
            let grid = *u.grid();
            let scan = if center == "auto" {
                let mut s =
                    concentration_scan(&u, &default_radii(&grid), eps1, DEFAULT_FLAG_RADIUS, default_stride(&grid))?;
                if let (Some(sc), Some((p, _))) = (scale, s.candidate) {
                    s.candidate = Some((p, sc));
                }
                s
            } else {
                let xy: Vec<f64> = center
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| LabError::Config(format!("--center `{center}` is not auto or x,y")))?;
                let sc = scale.ok_or_else(|| LabError::Config("--center x,y needs --scale".into()))?;
                if xy.len() != 2 {
                    return Err(LabError::Config(format!("--center `{center}` is not auto or x,y")));
                }
                ConcentrationReport {
                    eps1,
                    flag_radius: DEFAULT_FLAG_RADIUS,
                    scans: Vec::new(),
                    candidate: Some((Point::new(xy[0], xy[1]), sc)),
                    flagged: false,
                }
            };
            let reference = Grid::new(fit_n, fit_half_extent)?;
            let rep = bubble_report(&u, t, &scan, reference)?;
            let f = rep.fit;
            let v = json!({
                "x_m": [rep.x_m.x, rep.x_m.y],
                "r_m": rep.r_m,
                "t_m": rep.t_m,
                "flagged": scan.flagged,
                "lambda": f.lambda,
                "center": [f.center.x, f.center.y],
                "phase": f.phase,
                "h1_distance": f.h1_distance,
                "bubble_energy": f.bubble_energy,
                "window_energy": f.window_energy,
                "converged": f.converged,
                "iterations": f.iterations,
            });
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
                    Llf1::from_field(rep.rescaled.field(), t).write(&dir.join("bubble_rescaled.llf1"))?;
                    Llf1::from_field(f.sample(reference)?.field(), t).write(&dir.join("bubble_fitted.llf1"))?;
                    write_json(&dir.join("bubble.json"), &v)?;
                }
                None => emit(&v, None)?,
            }
            Ok(0)
        }
        Cmd::Audit { trajectory, radii, out } => {
            let index = find_index(&trajectory)?;
            let mut traj = Vec::new();
            for (file, t, dissipated) in read_snapshot_index(&index)? {
                traj.push(Snapshot { t, u: load(&file)?, dissipated });
            }
            if traj.len() < 2 {
                return Err(LabError::Config(format!("{} lists fewer than two snapshots", index.display())));
            }
            let stride = default_stride(traj[0].u.grid());
            let mut rows = Vec::new();
            for &r in &radii {
                let l = ladyzhenskaya_audit(&traj, r, stride)?;
                let c = local_energy_inequality_audit(&traj, r)?;
                rows.push(json!({
                    "radius": r,
                    "ladyzhenskaya_constant": l.constant,
                    "ladyzhenskaya_lhs": l.lhs,
                    "ladyzhenskaya_rhs": l.rhs,
                    "C3_fwd": c.c3_fwd,
                    "C3_bwd": c.c3_bwd,
                    "C_outer": c.c_outer,
                }));
            }
            let mnbv: Vec<Value> = traj
                .iter()
                .map(|s| {
                    let m = mnbv_audit(&s.u);
                    json!({"t": s.t, "lhs": m.lhs, "rhs": m.rhs, "slack": m.slack, "relative_slack": m.relative_slack()})
                })
                .collect();
            emit(&json!({"snapshots": traj.len(), "radii": rows, "mnbv": mnbv}), out.as_deref())?;
            Ok(0)
        }
        Cmd::Harmonic { lambda, degree, out, n, half_extent, center } => {
            if center.len() != 2 {
                return Err(LabError::Config("--center takes x,y".into()));
            }
            let g = Grid::new(n, half_extent)?;
            let u = bubble_with_phase(g, lambda, Point::new(center[0], center[1]), degree, 0.0)?;
            Llf1::from_field(u.field(), 0.0).write(&out)?;
            println!("energy {:.12} (ideal {} pi)", u.energy(), 4 * degree);
            Ok(0)
        }
        Cmd::Describe { name } => match presets::find(&name) {
            Some(p) => {
                println!("{}", presets::describe(p));
                Ok(0)
            }
            None => Err(LabError::UnknownPreset { name, known: presets::names().join(", ") }),
        },
        Cmd::List => {
            for n in presets::names() {
                println!("{n}");
            }
            Ok(0)
        }
    }
}

/// The `*_snapshots.csv` index inside a run directory, or the path itself.
fn find_index(path: &Path) -> Result<PathBuf, LabError> {
    if path.is_file() {
        return Ok(path.to_owned());
    }
    let entries = std::fs::read_dir(path).map_err(|e| LabError::io(path, e))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with("_snapshots.csv"))
        .collect();
    found.sort();
    match found.len() {
        1 => Ok(found.remove(0)),
        0 => Err(LabError::Config(format!("no *_snapshots.csv in {}", path.display()))),
        _ => Err(LabError::Config(format!("several snapshot indexes in {}", path.display()))),
    }
}
