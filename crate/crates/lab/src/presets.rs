//! Built-in scenarios. Horizons and grids were fixed by pilot runs.

pub struct Preset {
    pub name: &'static str,
    pub toml: &'static str,
    /// What the scenario exercises.
    pub claim: &'static str,
    pub criteria: &'static [&'static str],
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "decay-below-threshold",
        toml: r#"
[sim]
alpha = 1.0
beta = 1.0
grid_n = 128
half_extent = 16.0
t_end = 2.5
dt_safety = 0.2
scheme = "heun"
ledger_every = 20
snapshot_dt = 0.25

[init]
kind = "equivariant"
profile = "arctan"
lambda = 1.0
winding = 1
# 0.9 * 4 pi, below the sphere bubble energy
calibrate_energy = 11.309733552923255
amplitude_max = 10.0

[target]
kind = "sphere"

[analysis]
audits = ["decay", "dissipation", "dissipation_refinement", "l4_convergence", "ladyzhenskaya", "local_energy", "mnbv"]
"#,
        claim: "Data below the bubble energy 4 pi on the sphere: the flow exists globally and converges to a constant map, with the energy drop equal to the accumulated dissipation and a finite space-time L^4 norm of the gradient.",
        criteria: &[
            "decay: E(t_end) <= 0.1 E(0)",
            "dissipation: max |E(0) - E(t) - dissipation(t)| <= 1e-3 E(0)",
            "dissipation_refinement: halving dt shrinks that residual by >= 1.8x",
            "l4_convergence: l4_cum non-decreasing with increments <= 1e-3 over the final tenth",
            "ladyzhenskaya, local_energy: empirical constants finite and inside [0, 1]",
            "mnbv: Hessian inequality slack >= -1e-2 relative on every snapshot",
            "monotone: every step lowers E within 1e-9 E(0) and stays on the target to 1e-12",
        ],
    },
    Preset {
        name: "torus-decay",
        toml: r#"
[sim]
alpha = 1.0
beta = 1.0
grid_n = 128
half_extent = 16.0
t_end = 5.0
ledger_every = 20

[init]
kind = "torus_bump"
amplitude = 3.0
width = 2.5

[target]
kind = "torus"

[analysis]
audits = ["decay", "dissipation", "no_concentration"]
"#,
        claim: "Flat Clifford torus target (non-positive sectional curvature): no energy threshold, so decay to a constant is unconditional even above 4 pi.",
        criteria: &[
            "decay: E(t_end) <= 0.1 E(0)",
            "dissipation: ledger residual <= 1e-3 E(0)",
            "no_concentration: no ledger row has sup-local energy above eps1 = 4 pi / 8 at radius <= 1",
            "monotone: every step lowers E within 1e-9 E(0) and stays on the target to 1e-12",
        ],
    },
    Preset {
        name: "harmonic-stationary",
        toml: r#"
[sim]
alpha = 1.0
beta = 1.0
grid_n = 128
half_extent = 16.0
t_end = 100.0
steps = 1000
ledger_every = 100

[init]
kind = "bubble"
lambda = 2.0
center = [0.0, 0.0]
degree = 1

[target]
kind = "sphere"

[analysis]
audits = ["stationary", "tension_refinement", "mnbv"]
"#,
        claim: "Harmonic maps (bubbles) are the stationary limit profiles of the flow: the degree-1 bubble barely moves and its discrete tension vanishes at second order.",
        criteria: &[
            "stationary: max displacement after 1000 steps <= 10 h^2",
            "tension_refinement: interior ||tau||_L2 on n, 2n, 4n has log-log slope >= 1.8",
            "mnbv: Hessian inequality slack >= -1e-2 relative",
            "monotone: every step lowers E within 1e-9 E(0) and stays on the target to 1e-12",
        ],
    },
    Preset {
        name: "bubble-synthetic",
        toml: r#"
[sim]
alpha = 1.0
beta = 0.0
grid_n = 160
half_extent = 8.0
t_end = 0.0

[init]
kind = "bubble"
# 16 h
lambda = 1.6
center = [0.33, -0.21]
degree = 1

[target]
kind = "sphere"

[analysis]
audits = ["concentration", "bubble_fit", "diffuse_control"]
control_grid_n = 320
control_half_extent = 16.0
control_lambda = 4.0
"#,
        claim: "The eps1 concentration detector on synthetic data: a resolved bubble is flagged at the right scale and place and the rescaled window is fitted by the harmonic family; a diffuse field of the same energy is not flagged.",
        criteria: &[
            "concentration: flagged, R_m within a factor 2 of lambda, centre within 2h",
            "bubble_fit: rescaled (lambda, a) recovered within 1e-3 and refitting the fit moves them <= 1e-6",
            "diffuse_control: equal-energy spread-out field is not flagged",
        ],
    },
    Preset {
        name: "gauge-audit",
        toml: r#"
[sim]
alpha = 1.0
beta = 1.0
grid_n = 128
half_extent = 8.0
t_end = 0.25
dt_align = 0.0025
ledger_every = 100

[init]
kind = "equivariant"
profile = "gauss"
amplitude = 1.2
lambda = 1.0
winding = 1

[target]
kind = "sphere"

[analysis]
audits = ["gauge", "curl_refinement", "gauge_controls"]
gauge_dts = [0.04, 0.02]
"#,
        claim: "Coulomb gauge and differential fields of the pulled-back tangent bundle: divergence-free connection, covariant curl-free identity, the frame L^p bounds and the Ginzburg-Landau system satisfied by the differential fields.",
        criteria: &[
            "gauge: relative div a <= 1e-6, |phi_1|^2 + |phi_2|^2 = |grad u|^2 to 1e-10, GL residual ratio >= 1.8 per dt halving",
            "curl_refinement: curl identity residual on n, 2n, 4n has log-log slope >= 1.8",
            "gauge_controls: rough data and a wrong alpha do not show that decay",
            "monotone: every step lowers E within 1e-9 E(0) and stays on the target to 1e-12",
        ],
    },
    Preset {
        name: "groundstate",
        toml: r#"
[sim]
alpha = 1.0
grid_n = 16
half_extent = 1.0
t_end = 0.0

[init]
kind = "constant"

[analysis]
audits = ["groundstate"]
"#,
        claim: "The sharp 2D Gagliardo-Nirenberg constant is attained by the Townes ground state; it gives the lower bound 1 / (2 C^4 R_N) for the critical energy.",
        criteria: &["groundstate: C12 = 0.64299 and E_star lower bound (S^2) = 2.92523, both within 1e-3; Pohozaev residual <= 1e-6"],
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

/// Config, claim and criteria of a preset.
pub fn describe(p: &Preset) -> String {
    let mut s = format!("{}\n\n{}\n\nPASS criteria:\n", p.name, p.claim);
    for c in p.criteria {
        s.push_str(&format!("  - {c}\n"));
    }
    s.push_str("\nconfig:\n");
    s.push_str(p.toml.trim_start());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Overrides, ScenarioConfig};

    #[test]
    fn every_preset_parses() {
        for p in PRESETS {
            ScenarioConfig::from_toml(p.toml, &Overrides::default()).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
    }

    #[test]
    fn descriptions_mention_their_subject() {
        assert!(describe(find("torus-decay").unwrap()).contains("non-positive"));
        let b = describe(find("bubble-synthetic").unwrap());
        assert!(b.contains("eps1") && b.contains("synthetic"));
        assert!(find("unknown").is_none());
    }
}
