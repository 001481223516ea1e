//! Scenario runner: config parsing, the full pipeline, independent
//! verification of a plan, and CSV/SVG reports.

mod config;
pub mod svg;

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

pub use config::{DataFamily, Scenario, SynthesisSettings};

use crate::domain::{boundary_mesh, make_domain, BoundaryMesh, DomainSpec, Point};
use crate::error::{Error, Result};
use crate::fields::ExtensionSpec;
use crate::freespace::{eval_point_with_velocity, CauchySource, QuadratureConfig, Sample};
use crate::solver::{FeState, Mode, Solver, Trajectory};
use crate::synthesis::{assemble_plan, ControlPlan, InitialData, SynthesisEnv};

pub const SEED_VAR: &str = "RESTCONTROL_SEED";

/// Everything a scenario needs, built once.
pub struct Setup {
    pub spec: DomainSpec,
    pub mesh: Arc<BoundaryMesh>,
    pub solver: Solver,
    pub env: SynthesisEnv,
}

impl Scenario {
    pub fn setup(&self) -> Result<Setup> {
        let spec = make_domain(self.shape, self.delta, self.h)?;
        let mesh = boundary_mesh(&spec, self.boundary_samples)?;
        self.quad.validate()?;
        let solver = Solver::new(&spec, &self.solver, mesh.clone())?;
        let y = &self.synthesis;
        let mut env = SynthesisEnv::new(&spec, mesh.clone(), self.quad, solver.dt);
        env.ext = ExtensionSpec::new(y.extension_order).with_taper(y.plateau, y.reach);
        env.seed = self.seed;
        env.probes = y.probes;
        env.tol = y.tol;
        env.max_terms = y.max_terms;
        env.trace_dt = y.trace_dt;
        env.trace_samples_per_cell = y.trace_samples_per_cell;
        env.t1_max = y.t1_max;
        Ok(Setup {
            spec,
            mesh,
            solver,
            env,
        })
    }

    pub fn initial_fe(&self, solver: &Solver) -> FeState {
        FeState::from_fn(&solver.fe, |p| (self.data.phi(p), self.data.psi(p)))
    }

    /// Applies `RESTCONTROL_SEED` when set.
    pub fn apply_seed_override(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_VAR) {
            self.seed = v.trim().parse().map_err(|e| Error::Config {
                line: 0,
                key: SEED_VAR.into(),
                msg: format!("`{v}`: {e}"),
            })?;
        }
        Ok(())
    }
}

/// Outcome of a verified run.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// `sup|u| ≤ eps`, recomputed from the trace samples.
    pub admissible: bool,
    pub sup_u: f64,
    pub eps: f64,
    pub e0: f64,
    pub e_t1: f64,
    /// Energy of `(w − C, w_t)` at the end of the verification run.
    pub e_final: f64,
    pub rel_terminal_energy: f64,
    /// `E(T1)/E_final`: what step 2 achieved in the verification run.
    pub step2_reduction: f64,
    pub c_achieved: f64,
    pub c_formula: f64,
    /// Spatial mean of `w − C` at the end.
    pub final_mean_offset: f64,
    /// `max(|w − C|, |w_t|)` at the end of the verification run.
    pub terminal_sup: f64,
    /// The synthesis' own prediction of the same quantity.
    pub predicted_terminal_sup: f64,
    pub k: f64,
    pub t1: f64,
    pub t2: f64,
    pub opnorm: f64,
    pub series_terms: usize,
    pub series_residual: f64,
    pub series_tol: f64,
    pub max_rel_energy: f64,
    /// Seconds per stage.
    pub timings: Vec<(String, f64)>,
}

impl Report {
    /// Admissible and within the terminal-energy tolerance.
    pub fn verified(&self) -> bool {
        self.admissible && self.rel_terminal_energy <= self.max_rel_energy
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("admissible", self.admissible.to_string());
        kv("verified", self.verified().to_string());
        kv("sup_u", format!("{:e}", self.sup_u));
        kv("eps", format!("{:e}", self.eps));
        kv("E0", format!("{:e}", self.e0));
        kv("E_T1", format!("{:e}", self.e_t1));
        kv("E_final", format!("{:e}", self.e_final));
        kv("rel_terminal_energy", format!("{:e}", self.rel_terminal_energy));
        kv("step2_reduction", format!("{:e}", self.step2_reduction));
        kv("C_achieved", format!("{:e}", self.c_achieved));
        kv("C_formula", format!("{:e}", self.c_formula));
        kv("final_mean_offset", format!("{:e}", self.final_mean_offset));
        kv("terminal_sup", format!("{:e}", self.terminal_sup));
        kv("predicted_terminal_sup", format!("{:e}", self.predicted_terminal_sup));
        kv("k", format!("{:e}", self.k));
        kv("T1", format!("{:e}", self.t1));
        kv("T2", format!("{:e}", self.t2));
        kv("opnorm", format!("{:e}", self.opnorm));
        kv("series_terms", self.series_terms.to_string());
        kv("series_residual", format!("{:e}", self.series_residual));
        kv("tol.series", format!("{:e}", self.series_tol));
        kv("tol.max_rel_energy", format!("{:e}", self.max_rel_energy));
        for (stage, secs) in &self.timings {
            kv(&format!("time.{stage}"), format!("{secs:.3}"));
        }
        s
    }
}

/// Re-simulates the damped-then-controlled problem from `initial` under the
/// plan's traces, without touching the free-space machinery.
pub fn verify(plan: &ControlPlan, initial: &FeState, solver: &Solver, max_rel_energy: f64) -> Result<Report> {
    verify_run(plan, initial, solver, max_rel_energy).map(|(r, _)| r)
}

/// [`verify`], also returning the trajectory.
pub fn verify_run(
    plan: &ControlPlan,
    initial: &FeState,
    solver: &Solver,
    max_rel_energy: f64,
) -> Result<(Report, Trajectory)> {
    let schedule = plan.schedule();
    let t_end = plan.t_end();
    if !schedule.covers(0.0, t_end) {
        return Err(Error::TraceTooShort {
            covered: schedule.covered_until(),
            needed: t_end,
        });
    }
    let mut quiet = solver.clone();
    quiet.cfg.record_every = usize::MAX;
    quiet.cfg.snapshot_every = 0;
    let traj = quiet.run(initial, Mode::Control(schedule), t_end)?;
    let fe = &solver.fe;
    let c = plan.c_achieved;
    let e0 = initial.energy(fe);
    let e_final = traj.final_state.energy(fe);
    let e_t1 = traj
        .times
        .iter()
        .position(|&t| t >= plan.t1 - 0.5 * traj.dt)
        .map_or(e_final, |i| traj.energies[i]);
    let sup_u = plan.recomputed_sup();
    let d = &plan.diagnostics;
    let report = Report {
        admissible: sup_u <= plan.eps,
        sup_u,
        eps: plan.eps,
        e0,
        e_t1,
        e_final,
        rel_terminal_energy: if e0 > 0.0 { e_final / e0 } else { 0.0 },
        step2_reduction: if e_final > 0.0 { e_t1 / e_final } else { f64::INFINITY },
        c_achieved: c,
        c_formula: plan.c_formula,
        final_mean_offset: traj.final_state.mean(fe) - c,
        terminal_sup: traj.final_state.proxy_norm(c),
        predicted_terminal_sup: d.predicted_terminal_sup,
        k: plan.k,
        t1: plan.t1,
        t2: plan.t2,
        opnorm: d.opnorm,
        series_terms: d.series_terms,
        series_residual: d.residual,
        series_tol: 0.0,
        max_rel_energy,
        timings: Vec::new(),
    };
    Ok((report, traj))
}

/// Builds a plan for `scn`, verifies it and writes `report.txt`,
/// `energy.csv`, `control_sup.csv`, `plan/`, `energy.svg` and
/// `control_sup.svg` under `out`.
pub fn run_scenario(scn: &Scenario, out: &Path) -> Result<Report> {
    let clock = Instant::now();
    let setup = scn.setup().map_err(|e| e.in_stage("setup"))?;
    let t_setup = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let phi = |p: Point| scn.data.phi(p);
    let psi = |p: Point| scn.data.psi(p);
    let mut plan = assemble_plan(&InitialData { phi: &phi, psi: &psi }, scn.eps, &setup.solver, &setup.env)
        .map_err(|e| e.in_stage("plan"))?;
    let t_plan = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let fe0 = scn.initial_fe(&setup.solver);
    let (mut report, traj) =
        verify_run(&plan, &fe0, &setup.solver, scn.max_rel_energy).map_err(|e| e.in_stage("verify"))?;
    let t_verify = clock.elapsed().as_secs_f64();
    report.series_tol = scn.synthesis.tol;
    report.timings = vec![
        ("setup".into(), t_setup),
        ("plan".into(), t_plan),
        ("verify".into(), t_verify),
    ];
    plan.diagnostics.terminal_energy = Some(report.e_final);

    write_outputs(scn, out, &plan, &report, &traj)?;
    Ok(report)
}

fn write_outputs(scn: &Scenario, out: &Path, plan: &ControlPlan, report: &Report, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("scenario.cfg"), scn.to_config())?;
    fs::write(out.join("report.txt"), report.to_text())?;
    plan.write_dir(&out.join("plan"))?;
    traj.write_energy_csv(BufWriter::new(File::create(out.join("energy.csv"))?))?;
    let sup = plan.sup_series();
    let mut f = BufWriter::new(File::create(out.join("control_sup.csv"))?);
    writeln!(f, "t,max_abs_u")?;
    for (t, u) in &sup {
        writeln!(f, "{t:.12e},{u:.17e}")?;
    }
    f.flush()?;
    let energy: Vec<(f64, f64)> = traj.times.iter().copied().zip(traj.energies.iter().copied()).collect();
    fs::write(
        out.join("energy.svg"),
        svg::line_plot("Energy of the verification run", "t", "E (log10)", &energy, true),
    )?;
    fs::write(
        out.join("control_sup.svg"),
        svg::line_plot("Control magnitude", "t", "max |u|", &sup, false),
    )?;
    Ok(())
}

/// Verifies a plan directory against the scenario's initial data and writes
/// `verify_report.txt` next to it.
pub fn verify_dir(plan_dir: &Path, scn: &Scenario) -> Result<Report> {
    let setup = scn.setup().map_err(|e| e.in_stage("setup"))?;
    let plan = ControlPlan::read_dir(plan_dir, setup.mesh.clone()).map_err(|e| e.in_stage("read plan"))?;
    let fe0 = scn.initial_fe(&setup.solver);
    let mut report = verify(&plan, &fe0, &setup.solver, scn.max_rel_energy).map_err(|e| e.in_stage("verify"))?;
    report.series_tol = scn.synthesis.tol;
    fs::write(plan_dir.join("verify_report.txt"), report.to_text())?;
    Ok(report)
}

/// One check of [`selftest`].
#[derive(Debug, Clone)]
pub struct SelfCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

struct Uniform {
    w0: f64,
    w1: f64,
}

impl CauchySource for Uniform {
    fn sample(&self, _: Point) -> Sample {
        Sample {
            w0: self.w0,
            w1: self.w1,
            ..Sample::default()
        }
    }
    fn support_bbox(&self) -> Option<[f64; 4]> {
        None
    }
    fn resolution(&self) -> Option<f64> {
        None
    }
}

/// Closed-form and round-trip checks that run in a few seconds.
pub fn selftest() -> Vec<SelfCheck> {
    let q = QuadratureConfig::default();
    let xs = [[0.0, 0.0], [0.7, -0.3], [2.0, 1.5]];
    let ts = [0.3, 1.0, 2.5];
    let mut out = Vec::new();

    let one = Uniform { w0: 1.0, w1: 0.0 };
    let mut err: f64 = 0.0;
    for x in xs {
        for t in ts {
            err = err.max((eval_point_with_velocity(&one, x, t, &q).0 - 1.0).abs());
        }
    }
    out.push(SelfCheck {
        name: "constant displacement stays 1",
        pass: err <= 1e-6,
        detail: format!("max error {err:.2e} (tol 1e-6)"),
    });

    let c = 0.7;
    let vel = Uniform { w0: 0.0, w1: c };
    let (mut ew, mut ev): (f64, f64) = (0.0, 0.0);
    for x in xs {
        for t in ts {
            let (w, v) = eval_point_with_velocity(&vel, x, t, &q);
            ew = ew.max((w - c * t).abs());
            ev = ev.max((v - c).abs());
        }
    }
    out.push(SelfCheck {
        name: "constant velocity gives w = c t",
        pass: ew <= 1e-5 && ev <= 1e-5,
        detail: format!("w error {ew:.2e}, w_t error {ev:.2e} (tol 1e-5)"),
    });

    let mut demo = Scenario::default();
    let a = Scenario::parse(&demo.to_config());
    demo.shape = crate::domain::Shape::Ellipse {
        center: [0.1, -0.2],
        a: 1.3,
        b: 0.7,
    };
    demo.data = DataFamily::Linear { slope: [0.25, -1.5] };
    demo.solver.dt = Some(1.0 / 3.0 * 1e-2);
    let b = Scenario::parse(&demo.to_config());
    let ok = a.as_ref().is_ok_and(|s| *s == Scenario::default()) && b.as_ref().is_ok_and(|s| *s == demo);
    out.push(SelfCheck {
        name: "config round trip",
        pass: ok,
        detail: if ok { "ok".into() } else { format!("{a:?} / {b:?}") },
    });

    out.push(trace_round_trip());
    out
}

fn trace_round_trip() -> SelfCheck {
    use crate::solver::BoundaryTrace;
    let name = "trace CSV round trip";
    let run = || -> Result<bool> {
        let spec = make_domain(
            crate::domain::Shape::Disk {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            0.25,
            0.05,
        )?;
        let mesh = boundary_mesh(&spec, 32)?;
        let values = (0..7)
            .map(|j| (0..32).map(|i| ((i * 7 + j * 3) as f64 * 0.37).sin() / 3.0).collect())
            .collect();
        let tr = BoundaryTrace::new(mesh.clone(), 1.25, 0.01, values)?;
        let mut buf = Vec::new();
        tr.write_csv(&mut buf)?;
        let back = BoundaryTrace::read_csv(&buf[..], mesh)?;
        Ok(back.values == tr.values && (back.dt - tr.dt).abs() < 1e-12 && back.t0 == tr.t0)
    };
    match run() {
        Ok(pass) => SelfCheck {
            name,
            pass,
            detail: if pass { "ok".into() } else { "values differ".into() },
        },
        Err(e) => SelfCheck {
            name,
            pass: false,
            detail: e.to_string(),
        },
    }
}
