use super::*;
use crate::manifold::{
    conserved_basis, rank_descent_times, BlockKind, DEFAULT_RANK_THRESHOLD,
};
use crate::mechanism::element_matrix;
use crate::stiffode::{integrate, integrate_with_sensitivity, SolverConfig};

#[test]
fn robertson_preset_matches_its_contract() {
    let s = scenario_robertson();
    assert_eq!(s.name, "robertson");
    assert_eq!(s.model, ModelKind::Robertson);
    assert_eq!(s.t_obs_grid.len(), 41);
    assert!((s.t_obs_grid[0] - 1e-4).abs() < 1e-16);
    assert!((s.t_obs_grid[40] - 1.0).abs() < 1e-12);
    // Consecutive grid points are a tenth of a decade apart.
    for w in s.t_obs_grid.windows(2) {
        assert!(((w[1] / w[0]).log10() - 0.1).abs() < 1e-12);
    }
    // Box bounds sit three spreads from the mean.
    for i in 0..3 {
        assert!((s.truth.lower[i] - (s.truth.mu0[i] - 3.0 * s.truth.s0[i])).abs() < 1e-15);
        assert!((s.truth.upper[i] - (s.truth.mu0[i] + 3.0 * s.truth.s0[i])).abs() < 1e-15);
    }
    let dy = s.eigen_perturbation.as_ref().unwrap();
    assert_eq!(dy.as_slice(), &[1e-3, 1e-7, 1e-3]);

    let sys = s.reactor(None).unwrap();
    assert_eq!(crate::stiffode::OdeSystem::dim(&sys), 3);
}

#[test]
fn hydrogen_preset_closes_mass_and_anchors_thermodynamics() {
    let s = scenario_h2_autoignition();
    assert_eq!(s.name, "h2-autoignition");
    assert!((s.truth.mu0.sum() - 1.0).abs() < 1e-12, "mass closure");
    for i in 0..s.truth.mu0.len() {
        assert!((s.truth.s0[i] - s.truth.mu0[i] / 10.0).abs() < 1e-18);
    }
    assert_eq!(s.t_obs_grid.len(), 141);
    assert!((s.t_obs_grid[0] - 1e-8).abs() < 1e-20);
    assert!((s.t_obs_grid[140] - 1e-1).abs() < 1e-13);
    assert_eq!(
        s.model,
        ModelKind::AdiabaticIsobaric {
            t0_kelvin: 1200.0,
            pressure_pa: ATM_PA
        }
    );

    // The composition vector is positional: pin the species order it
    // assumes to the bundled mechanism.
    let mech = s.mechanism().unwrap();
    let order = ["H2", "H", "O", "O2", "OH", "H2O", "HO2", "H2O2", "N2"];
    for (i, name) in order.iter().enumerate() {
        assert_eq!(mech.species_index(name), Some(i), "{name}");
    }
    assert_eq!(s.truth.dim(), mech.n_species());
}

#[test]
fn hydrogen_scenario_drives_its_reactor() {
    let s = scenario_h2_autoignition();
    let mech = s.mechanism().unwrap();
    let sys = s.reactor(Some(&mech)).unwrap();
    let traj = integrate(&sys, &s.truth.mu0, 1e-6, &SolverConfig::inference_grade()).unwrap();
    let y = traj.final_state();
    assert!(y.iter().all(|v| v.is_finite()));
    assert!((y.sum() - 1.0).abs() < 1e-10, "mass closure drifted");
}

#[test]
fn quench_presets_cover_three_temperatures() {
    let temps = [
        ("quench-200", 200.0),
        ("quench-600", 600.0),
        ("quench-1075", 1075.5),
    ];
    let default = quench_default_composition();
    for (name, t_fix) in temps {
        let s = Scenario::by_name(name).unwrap();
        assert_eq!(s.name, name);
        assert_eq!(
            s.model,
            ModelKind::Isothermal {
                t_fix_kelvin: t_fix,
                pressure_pa: ATM_PA
            }
        );
        assert_eq!(s.rank_window, [1e-7, 1.0]);
        let total = default.sum();
        for i in 0..default.len() {
            assert!((s.truth.mu0[i] - default[i] / total).abs() < 1e-15);
        }
    }
}

#[test]
fn shipped_composition_file_matches_the_builtin() {
    let mech = Mechanism::bundled_h2o2();
    let from_file = parse_composition(QUENCH_DEFAULT_TOML, &mech).unwrap();
    let builtin = quench_default_composition();
    let total = builtin.sum();
    assert!((total - 1.0).abs() < 1e-9, "builtin sums to {total}");
    for i in 0..builtin.len() {
        assert!(
            (from_file[i] - builtin[i] / total).abs() < 1e-15,
            "species {i}: {} vs {}",
            from_file[i],
            builtin[i]
        );
    }
}

#[test]
fn every_preset_round_trips_through_toml_and_json() {
    for name in Scenario::NAMES {
        let s = Scenario::by_name(name).unwrap();
        let back = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(s, back, "{name} TOML round-trip");
        let json: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(json["name"], name);
    }
}

#[test]
fn composition_parsing_rejects_bad_input() {
    let mech = Mechanism::bundled_h2o2();
    let cases = [
        "[composition]\nXe = 1.0\n",                   // unknown species
        "[composition]\nN2 = -1.0\nH2 = 2.0\n",       // negative
        "[composition]\nN2 = 0.5\n",                  // bad closure
        "[composition]\nN2 = nan\n",                  // non-finite
    ];
    for text in cases {
        assert!(
            matches!(
                parse_composition(text, &mech),
                Err(ScenarioError::InvalidConfig(_))
            ),
            "accepted: {text}"
        );
    }
    // Partial tables are fine when they close: unlisted species are zero.
    let pure = parse_composition("[composition]\nN2 = 1.0\n", &mech).unwrap();
    assert_eq!(pure[mech.species_index("N2").unwrap()], 1.0);
    assert_eq!(pure.sum(), 1.0);
}

#[test]
fn bad_quench_inputs_are_rejected() {
    let short = DVector::from_vec(vec![1.0]);
    assert!(scenario_quench(600.0, &short).is_err());

    let mut neg = quench_default_composition();
    neg[0] = -0.01;
    assert!(scenario_quench(600.0, &neg).is_err());

    let half = quench_default_composition() * 0.5;
    assert!(scenario_quench(600.0, &half).is_err());

    assert!(scenario_quench(-5.0, &quench_default_composition()).is_err());
}

#[test]
fn unknown_scenarios_are_reported_with_the_known_list() {
    let err = Scenario::by_name("nope").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("nope") && msg.contains("robertson"), "{msg}");
}

/// The experiment constants — compositions, temperatures, grids — must
/// live only in this module (model-intrinsic data such as rate
/// constants belongs to the model implementations). Scans non-test
/// library sources for the distinctive literals.
#[test]
fn scenario_literals_live_only_here() {
    fn rs_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                rs_files(&path, out);
            } else if path.extension().is_some_and(|e| e == "rs") {
                out.push(path);
            }
        }
    }
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let mut files = Vec::new();
    rs_files(&src, &mut files);

    let literals = ["0.694", "1075.5", "1200.0", "0.861599", "5e-6"];
    for path in files {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name == "tests.rs" || path.ends_with("scenarios/mod.rs") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        // Only library code counts; trailing test modules are exempt.
        let library = text.split("#[cfg(test)]").next().unwrap();
        for lit in literals {
            assert!(
                !library.contains(lit),
                "scenario constant '{lit}' leaked into {}",
                path.display()
            );
        }
    }
}

#[test]
fn quench_rank_analysis_runs_end_to_end() {
    let s = Scenario::by_name("quench-1075").unwrap();
    let mech = s.mechanism().unwrap();
    let sys = s.reactor(Some(&mech)).unwrap();
    let mut cfg = SolverConfig::inference_grade();
    cfg.output_times = vec![s.rank_window[0]];
    let sens =
        integrate_with_sensitivity(&sys, &s.truth.mu0, s.rank_window[1], &cfg).unwrap();

    let basis = conserved_basis(&element_matrix(&mech)).unwrap();
    let report = rank_descent_times(&sens, &basis, DEFAULT_RANK_THRESHOLD).unwrap();

    // Conserved directions never decay; reaction directions do.
    assert!(report.qaq_ranks.iter().all(|&r| r == 3), "{:?}", report.qaq_ranks);
    let reaction_descents: Vec<_> = report
        .rank_descent_times
        .iter()
        .filter(|e| e.block == BlockKind::Reaction)
        .collect();
    assert!(
        !reaction_descents.is_empty(),
        "no information loss detected at the no-cooling temperature"
    );
    for ev in &reaction_descents {
        assert!(
            (s.rank_window[0]..=s.rank_window[1]).contains(&ev.time),
            "descent at {:e} outside the analysis window",
            ev.time
        );
    }
}
