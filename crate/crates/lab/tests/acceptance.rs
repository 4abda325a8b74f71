//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
//! if any fails. Scenario artifacts go to a temporary directory.

use llflow::{run_scenario, ScenarioOutcome};
use llflow_core::analytics::mnbv_audit;
use llflow_core::bubble::bubble_fit;
use llflow_core::groundstate::{critical_energy_bound, gn_constant, ground_state};
use llflow_core::init::{bubble_with_phase, stereographic_bubble};
use llflow_core::linalg::dot;
use llflow_core::targets::{m_apply, spectral_bounds_audit, torus_point, MOperatorParams};
use llflow_core::{Grid, Point, Target};
use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

type Check = Result<(bool, String), String>;

struct Runs {
    decay: ScenarioOutcome,
    decay_secs: f64,
    imex: ScenarioOutcome,
    imex_secs: f64,
    torus: ScenarioOutcome,
    torus_secs: f64,
    harmonic: ScenarioOutcome,
    gauge: ScenarioOutcome,
    bubble: ScenarioOutcome,
    refinement: Vec<(String, ScenarioOutcome)>,
}

fn run(name: &str, tag: &str, root: &Path, extra: &[&str]) -> Result<(ScenarioOutcome, f64), String> {
    let mut o = vec![format!("output.dir=\"{}\"", root.join(tag).display())];
    o.extend(extra.iter().map(|s| s.to_string()));
    let t0 = Instant::now();
    let out = run_scenario(name, &o).map_err(|e| format!("{tag}: {e}"))?;
    let secs = t0.elapsed().as_secs_f64();
    eprint!("{}", out.summary().lines().map(|l| format!("  {tag}: {l}\n")).collect::<String>());
    eprintln!("  {tag}: {secs:.1} s");
    Ok((out, secs))
}

fn criteria(o: &ScenarioOutcome, names: &[&str]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in names {
        match o.criterion(n) {
            Some(c) => {
                ok &= c.pass;
                parts.push(format!("{n} {}", if c.pass { "ok" } else { "failed" }));
            }
            None => {
                ok = false;
                parts.push(format!("{n} missing"));
            }
        }
    }
    (ok, format!("{}: {}", o.name, parts.join(", ")))
}

fn c1() -> Check {
    let t0 = Instant::now();
    let q = ground_state(1e-10).map_err(|e| e.to_string())?;
    let c = gn_constant(&q);
    let e = critical_energy_bound(c, 1.0).map_err(|e| e.to_string())?.e_star_lower;
    let secs = t0.elapsed().as_secs_f64();
    let ok = (c - 0.64299).abs() <= 1e-3 && (e - 2.92523).abs() <= 1e-3 && secs <= 10.0;
    Ok((ok, format!("C12 = {c:.6}, E* lower bound = {e:.6}, {secs:.2} s")))
}

fn c2() -> Check {
    let t0 = Instant::now();
    let g = Grid::new(512, 16.0).map_err(|e| e.to_string())?;
    let e1 = stereographic_bubble(g, 1.0, Point::new(0.0, 0.0), 1).map_err(|e| e.to_string())?.energy();
    let e2 = stereographic_bubble(g, 1.0, Point::new(0.0, 0.0), 2).map_err(|e| e.to_string())?.energy();
    let secs = t0.elapsed().as_secs_f64();
    let r1 = e1 / (4.0 * PI);
    let r2 = e2 / (8.0 * PI);
    let ok = (0.99..=1.0).contains(&r1) && (r2 - 1.0).abs() <= 0.02 && secs <= 5.0;
    Ok((ok, format!("E/4pi = {r1:.5} (k=1), E/8pi = {r2:.5} (k=2), {secs:.2} s")))
}

fn c3(r: &Runs) -> Check {
    let (ok, d) = criteria(&r.decay, &["dissipation", "dissipation_refinement"]);
    let secs = r.decay_secs;
    Ok((ok && secs <= 300.0, format!("{d}; {secs:.0} s")))
}

fn c4(r: &Runs) -> Check {
    let mut all: Vec<(&str, &ScenarioOutcome)> = vec![
        ("decay", &r.decay),
        ("imex", &r.imex),
        ("torus", &r.torus),
        ("harmonic", &r.harmonic),
        ("gauge", &r.gauge),
    ];
    all.extend(r.refinement.iter().map(|(t, o)| (t.as_str(), o)));
    let mut ok = true;
    let mut parts = Vec::new();
    for (tag, o) in all {
        let s = o.state.as_ref().ok_or_else(|| format!("{tag} did not simulate"))?;
        let pass = o.criterion("monotone").is_some_and(|c| c.pass);
        ok &= pass;
        parts.push(format!(
            "{tag} {} steps, max rise {:.1e} E0, dist {:.0e}",
            s.step_count, s.max_energy_rise, s.max_target_distance
        ));
    }
    // bubble-synthetic and groundstate do not time-step
    ok &= r.bubble.state.is_none();
    Ok((ok, parts.join("; ")))
}

fn c5(r: &Runs) -> Check {
    let (a, da) = criteria(&r.decay, &["decay", "l4_convergence"]);
    let (b, _) = criteria(&r.imex, &["decay", "l4_convergence"]);
    let e0 = r.decay.initial.energy();
    let target = 0.9 * 4.0 * PI;
    let e0_ok = (e0 - target).abs() <= 1e-6 * target;
    let ok = a && b && e0_ok && r.imex_secs <= 900.0;
    Ok((
        ok,
        format!(
            "E(0)/4pi = {:.4}; heun {da}; imex {} in {:.0} s",
            e0 / (4.0 * PI),
            if b { "ok" } else { "failed" },
            r.imex_secs
        ),
    ))
}

fn c6(r: &Runs) -> Check {
    let (ok, d) = criteria(&r.torus, &["decay", "no_concentration"]);
    let eps_ok = (r.torus.config.analysis.eps1 - 4.0 * PI / 8.0).abs() < 1e-12;
    Ok((ok && eps_ok && r.torus_secs <= 600.0, format!("{d}; eps1 = 4pi/8; {:.0} s", r.torus_secs)))
}

fn c7(r: &Runs) -> Check {
    let (ok, d) = criteria(&r.harmonic, &["stationary", "tension_refinement"]);
    let steps = r.harmonic.state.as_ref().map_or(0, |s| s.step_count);
    let n = r.harmonic.config.sim.grid_n;
    Ok((ok && steps == 1000 && n == 128, format!("{d}; {steps} steps, refinement from n = {n}")))
}

fn c8() -> Check {
    let mut ok = true;
    let mut worst = 0.0f64;
    for target in [Target::Sphere, Target::CliffordTorus] {
        for (k, (a, b)) in [(1.0, 1.0), (0.1, 3.0), (2.0, -0.5)].into_iter().enumerate() {
            let p = MOperatorParams::new(a, b).map_err(|e| e.to_string())?;
            let rep = spectral_bounds_audit(target, p, 100_000, 17 + k as u64).map_err(|e| e.to_string())?;
            ok &= rep.passed();
            // extremal directions: tangent attains alpha, normal attains 1/gamma_1
            let (y, t, nrm): (Vec<f64>, Vec<f64>, Vec<f64>) = match target {
                Target::Sphere => (vec![0.0, 0.6, 0.8], vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8]),
                Target::CliffordTorus => {
                    let y = torus_point(0.4, 1.1).to_vec();
                    let t = vec![-(0.4f64).sin(), (0.4f64).cos(), 0.0, 0.0];
                    let nrm = vec![(0.4f64).cos(), (0.4f64).sin(), 0.0, 0.0];
                    (y, t, nrm)
                }
            };
            let qt = dot(&t, &m_apply(target, &y, &t, p)) / dot(&t, &t);
            let qn = dot(&nrm, &m_apply(target, &y, &nrm, p)) / dot(&nrm, &nrm);
            let et = ((qt - a) / a).abs();
            let en = ((qn - 1.0 / p.gamma1()) * p.gamma1()).abs();
            worst = worst.max(et).max(en);
        }
    }
    ok &= worst <= 1e-12;
    Ok((ok, format!("1e5 samples x 3 parameter pairs x 2 targets within bounds; extremal error {worst:.1e}")))
}

fn c9(r: &Runs) -> Check {
    Ok(criteria(&r.gauge, &["gauge", "curl_refinement", "gauge_controls"]))
}

fn c10(r: &Runs) -> Check {
    let (ok, d) = criteria(&r.bubble, &["concentration", "bubble_fit", "diffuse_control"]);
    let g = Grid::new(96, 2.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut idem = 0.0f64;
    for (lam, ax, ay, psi) in [(1.0, 0.0, 0.0, 0.0), (0.7, 0.2, -0.1, 1.0), (1.3, -0.25, 0.15, -2.5)] {
        let u = bubble_with_phase(g, lam, Point::new(ax, ay), 1, psi).map_err(|e| e.to_string())?;
        let f = bubble_fit(&u).map_err(|e| e.to_string())?;
        worst = worst.max(((f.lambda - lam) / lam).abs()).max(f.center.dist(Point::new(ax, ay)));
        let f2 = bubble_fit(&f.sample(g).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        idem = idem.max((f2.lambda - f.lambda).abs()).max(f2.center.dist(f.center));
    }
    let ok = ok && worst <= 1e-3 && idem <= 1e-6;
    Ok((ok, format!("{d}; family recovery {worst:.1e}, idempotence {idem:.1e}")))
}

fn report_f64s(o: &ScenarioOutcome, audit: &str, key: &str) -> Result<Vec<f64>, String> {
    let v = o.reports.get(audit).ok_or_else(|| format!("{} lacks {audit} report", o.name))?;
    v["radii"]
        .as_array()
        .ok_or("radii missing")?
        .iter()
        .map(|r| r[key].as_f64().ok_or_else(|| format!("{audit}.{key} missing")))
        .collect()
}

fn c11(r: &Runs) -> Check {
    let (base_ok, _) = criteria(&r.decay, &["mnbv", "ladyzhenskaya", "local_energy"]);
    let mut lady: Vec<Vec<f64>> = Vec::new();
    let mut local_max = 0.0f64;
    let mut ok = base_ok;
    let mut tol_h = Vec::new();
    for (tag, o) in &r.refinement {
        let (pass, d) = criteria(o, &["mnbv", "ladyzhenskaya", "local_energy"]);
        if !pass {
            eprintln!("  {tag}: {d}");
        }
        ok &= pass;
        lady.push(report_f64s(o, "ladyzhenskaya", "constant")?);
        for k in ["C3_fwd", "C3_bwd", "C_outer"] {
            for c in report_f64s(o, "local_energy", k)? {
                ok &= c.is_finite();
                local_max = local_max.max(c);
            }
        }
        tol_h.push(o.reports["mnbv"]["tol_h"].as_f64().ok_or("tol_h missing")?);
    }
    // Ladyzhenskaya constants per radius stay within a factor 1.25 across runs
    let mut spread = 1.0f64;
    for k in 0..lady.first().map_or(0, Vec::len) {
        let col: Vec<f64> = lady.iter().map(|c| c[k]).collect();
        let (lo, hi) = col.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        spread = spread.max(if lo > 0.0 { hi / lo } else { f64::INFINITY });
    }
    ok &= spread <= 1.25 && local_max <= 1.0;
    // the h-refined run (last) has tol_h no larger than its coarse partner (first)
    ok &= tol_h.len() == 3 && tol_h[2] <= tol_h[0];
    // bubble refinement: the defect of the Hessian inequality shrinks with h
    let mut bubble_tol = Vec::new();
    for n in [128, 256, 512] {
        let g = Grid::new(n, 16.0).map_err(|e| e.to_string())?;
        let u = stereographic_bubble(g, 2.0, Point::new(0.0, 0.0), 1).map_err(|e| e.to_string())?;
        bubble_tol.push((-mnbv_audit(&u).relative_slack()).max(0.0));
    }
    ok &= bubble_tol.windows(2).all(|w| w[1] <= w[0]);
    Ok((
        ok,
        format!(
            "Ladyzhenskaya spread {spread:.3} (<= 1.25), local-energy max {local_max:.2e} (<= 1), mnbv tol_h decay runs [{}], bubble [{}]",
            sci(&tol_h),
            sci(&bubble_tol)
        ),
    ))
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(", ")
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let root = dir.path();
    let mut results = std::collections::BTreeMap::new();
    let mut emit = |n: usize, c: Check| {
        let (pass, detail) = c.unwrap_or_else(|e| (false, format!("error: {e}")));
        eprintln!("criterion {n} done");
        results.insert(n, (pass, detail));
    };
    emit(1, c1());
    emit(2, c2());
    emit(8, c8());

    let runs = (|| -> Result<Runs, String> {
        let (decay, decay_secs) = run("decay-below-threshold", "decay", root, &[])?;
        let (imex, imex_secs) = run(
            "decay-below-threshold",
            "imex",
            root,
            &["sim.scheme=\"imex\"", "analysis.audits=[\"decay\", \"l4_convergence\"]"],
        )?;
        let (torus, torus_secs) = run("torus-decay", "torus", root, &[])?;
        let (harmonic, _) = run("harmonic-stationary", "harmonic", root, &[])?;
        let (gauge, _) = run("gauge-audit", "gauge", root, &[])?;
        let (bubble, _) = run("bubble-synthetic", "bubble", root, &[])?;
        let audits = "analysis.audits=[\"mnbv\", \"ladyzhenskaya\", \"local_energy\"]";
        let mut refinement = Vec::new();
        for (tag, n, safety) in [("n128_s0.2", 128, 0.2), ("n128_s0.1", 128, 0.1), ("n256_s0.2", 256, 0.2)] {
            let n = format!("sim.grid_n={n}");
            let s = format!("sim.dt_safety={safety}");
            let (o, _) =
                run("decay-below-threshold", tag, root, &["sim.t_end=1.0", "sim.snapshot_dt=0.1", &n, &s, audits])?;
            refinement.push((tag.to_owned(), o));
        }
        Ok(Runs { decay, decay_secs, imex, imex_secs, torus, torus_secs, harmonic, gauge, bubble, refinement })
    })();

    match runs {
        Ok(r) => {
            emit(3, c3(&r));
            emit(4, c4(&r));
            emit(5, c5(&r));
            emit(6, c6(&r));
            emit(7, c7(&r));
            emit(9, c9(&r));
            emit(10, c10(&r));
            emit(11, c11(&r));
        }
        Err(e) => {
            for n in [3, 4, 5, 6, 7, 9, 10, 11] {
                emit(n, Err(e.clone()));
            }
        }
    }
    let mut failed = 0;
    for (n, (pass, detail)) in &results {
        if !pass {
            failed += 1;
        }
        println!("criterion {n:2}: {} {detail}", if *pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
