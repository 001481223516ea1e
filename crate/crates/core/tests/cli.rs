use std::path::Path;
use std::process::Command;

use proptest::prelude::*;
use restcontrol::cli::*;
use restcontrol::domain::Shape;
use restcontrol::synthesis::ControlPlan;
use restcontrol::Error;

/// A coarse bump scenario that runs in seconds. Step 2 is poorly resolved
/// at this size, hence the loose energy limit.
fn small() -> Scenario {
    let mut s = Scenario::default();
    s.delta = 0.5;
    s.h = 0.05;
    s.boundary_samples = 128;
    s.data = DataFamily::RadialBump {
        center: [0.1, 0.0],
        width: 0.5,
        amplitude: 0.02,
        velocity: 0.01,
    };
    s.solver.n_r = 64;
    s.solver.probe_horizon = 4.0;
    s.synthesis.probes = 3;
    s.max_rel_energy = 0.05;
    s
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn zero_data_scenario_is_trivially_admissible() {
    let mut s = small();
    s.data = DataFamily::Zero;
    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(&s, dir.path()).unwrap();
    assert_eq!(r.e0, 0.0);
    assert_eq!(r.e_final, 0.0);
    assert_eq!(r.sup_u, 0.0);
    assert_eq!(r.t1, 0.0);
    assert!(r.admissible && r.verified());
    for f in ["report.txt", "energy.csv", "control_sup.csv", "energy.svg", "control_sup.svg", "plan/plan.meta"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn boundary_slope_scenario_parses_then_fails_compatibility() {
    let text = "data.family = linear\ndata.slope = 1, 0\ndomain.h = 0.05\ndomain.delta = 0.25\nsolver.n_r = 32\n";
    let s = Scenario::parse(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let e = run_scenario(&s, dir.path()).unwrap_err();
    assert!(matches!(e.root(), Error::IncompatibleData(_)), "{e}");
}

#[test]
fn corrupted_trace_is_not_admissible() {
    let mut s = small();
    s.data = DataFamily::Zero;
    let setup = s.setup().unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&s, dir.path()).unwrap();
    let mut plan = ControlPlan::read_dir(&dir.path().join("plan"), setup.mesh.clone()).unwrap();
    plan.trace2.values[3][5] = 2.0 * plan.eps;
    let r = verify(&plan, &s.initial_fe(&setup.solver), &setup.solver, 1.0).unwrap();
    assert!(!r.admissible);
    assert_eq!(r.sup_u, 2.0 * plan.eps);

    let short = ControlPlan {
        trace2: plan.trace1.clone(),
        ..plan
    };
    let e = verify(&short, &s.initial_fe(&setup.solver), &setup.solver, 1.0).unwrap_err();
    assert!(matches!(e, Error::TraceTooShort { .. }), "{e}");
}

#[test]
fn runs_are_byte_identical_across_thread_counts() {
    let s = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_scenario(&s, a.path()));
    let rb = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| run_scenario(&s, b.path()));
    let (ra, rb) = (ra.unwrap(), rb.unwrap());
    assert!(ra.verified(), "{}", ra.to_text());
    assert!(ra.t1 > 0.0 && ra.step2_reduction > 1.0);
    assert_eq!(ra.e_final, rb.e_final);
    for f in ["energy.csv", "control_sup.csv", "plan/trace1.csv", "plan/trace2.csv", "plan/series.csv", "energy.svg"] {
        assert!(read(a.path(), f) == read(b.path(), f), "{f} differs");
    }

    // The plan directory verifies to the same numbers, up to the rounding
    // of the stored sample times.
    let again = verify_dir(&a.path().join("plan"), &s).unwrap();
    assert!((again.e_final - ra.e_final).abs() <= 1e-8 * ra.e_final);
    assert_eq!(again.sup_u, ra.sup_u);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_restcontrol"))
}

#[test]
fn exit_codes_separate_pipeline_and_verification_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.cfg");

    std::fs::write(&cfg, "eps = 0.05\nnot a pair\n").unwrap();
    let st = bin().args(["run", cfg.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(2));

    let mut s = small();
    s.data = DataFamily::Linear { slope: [1.0, 0.0] };
    std::fs::write(&cfg, s.to_config()).unwrap();
    let st = bin().args(["run", cfg.to_str().unwrap(), "--out"]).arg(dir.path().join("x")).status().unwrap();
    assert_eq!(st.code(), Some(2));

    let mut s = small();
    s.max_rel_energy = 0.0;
    std::fs::write(&cfg, s.to_config()).unwrap();
    let out = dir.path().join("run");
    let st = bin()
        .args(["run", cfg.to_str().unwrap(), "--jobs", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(3));
    let report = String::from_utf8(read(&out, "report.txt")).unwrap();
    assert!(report.contains("admissible = true") && report.contains("verified = false"), "{report}");

    s.max_rel_energy = 0.05;
    std::fs::write(&cfg, s.to_config()).unwrap();
    let st = bin().arg("verify").arg(out.join("plan")).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(0));

    let st = bin().arg("selftest").status().unwrap();
    assert_eq!(st.code(), Some(0));
}

#[test]
fn seed_variable_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.cfg");
    let mut s = small();
    s.data = DataFamily::Zero;
    s.seed = 3;
    std::fs::write(&cfg, s.to_config()).unwrap();
    let out = dir.path().join("o");
    let st = bin()
        .env("RESTCONTROL_SEED", "11")
        .args(["run", cfg.to_str().unwrap(), "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let echoed = Scenario::parse(&String::from_utf8(read(&out, "scenario.cfg")).unwrap()).unwrap();
    assert_eq!(echoed.seed, 11);

    let st = bin()
        .env("RESTCONTROL_SEED", "eleven")
        .args(["run", cfg.to_str().unwrap(), "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}

fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    let shape = prop_oneof![
        (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..3.0).prop_map(|(x, y, r)| Shape::Disk {
            center: [x, y],
            radius: r
        }),
        (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..3.0, 0.1f64..3.0).prop_map(|(x, y, a, b)| Shape::Ellipse {
            center: [x, y],
            a,
            b
        }),
    ];
    let data = prop_oneof![
        Just(DataFamily::Zero),
        (-2.0f64..2.0).prop_map(|a| DataFamily::Constant { a }),
        (-0.5f64..0.5, -0.5f64..0.5, 0.05f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(
            |(x, y, width, amplitude, velocity)| DataFamily::RadialBump {
                center: [x, y],
                width,
                amplitude,
                velocity
            }
        ),
        (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| DataFamily::Linear { slope: [a, b] }),
    ];
    (
        shape,
        data,
        1e-4f64..1.0,
        proptest::option::of(1e-4f64..1e-2),
        8usize..512,
        any::<u64>(),
        1e-9f64..1e-3,
        "[a-z][a-z0-9_/]{0,12}",
    )
        .prop_map(|(shape, data, eps, dt, n_r, seed, tol, out)| {
            let mut s = Scenario::default();
            s.shape = shape;
            s.data = data;
            s.eps = eps;
            s.solver.dt = dt;
            s.solver.n_r = n_r;
            s.seed = seed;
            s.synthesis.tol = tol;
            s.out = out.into();
            s
        })
}

proptest! {
    #[test]
    fn config_round_trips(s in scenario_strategy()) {
        prop_assert_eq!(Scenario::parse(&s.to_config()).unwrap(), s);
    }
}
