//! Step 2 of the control: the contraction `L`, Neumann-series inversion of
//! `I + L`, choice of `T2`, the control trace over `[0, T2]`, and assembly of
//! the full two-step plan.

mod plan;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use plan::{ControlPlan, Diagnostics};

use crate::domain::{build_grids, BoundaryMesh, DomainSpec, GridSet, Point};
use crate::error::{Error, Result};
use crate::fields::{extend, restrict, ExtensionSpec, Region, StatePair};
use crate::freespace::{
    backward_to_zero, eval_point_with_velocity, forward_solve, normal_trace_series, t_star, CauchyData,
    QuadratureConfig,
};
use crate::solver::{check_compatibility, BoundaryTrace, FeState, Mode, Recorder, Solver};

/// Everything the step-2 operators need besides the state.
#[derive(Debug, Clone)]
pub struct SynthesisEnv {
    pub spec: DomainSpec,
    pub grid: Arc<GridSet>,
    pub ext: ExtensionSpec,
    pub quad: QuadratureConfig,
    pub mesh: Arc<BoundaryMesh>,
    /// `T2` is rounded up to a multiple of this (the solver step).
    pub time_grid: f64,
    pub seed: u64,
    pub probes: usize,
    /// Relative truncation tolerance of the Neumann series.
    pub tol: f64,
    pub max_terms: usize,
    /// Time spacing of the synthesized trace.
    pub trace_dt: f64,
    /// Angular and radial density of the circular means behind the trace.
    pub trace_samples_per_cell: f64,
    /// Spacing of the recorded step-1 trace.
    pub record_dt: f64,
    /// Step 1 gives up after this long.
    pub t1_max: f64,
}

impl SynthesisEnv {
    pub fn new(spec: &DomainSpec, mesh: Arc<BoundaryMesh>, quad: QuadratureConfig, time_grid: f64) -> Self {
        Self {
            spec: spec.clone(),
            grid: build_grids(spec),
            ext: ExtensionSpec::new(0).with_taper(0.0, 2.0 / 3.0),
            quad,
            mesh,
            time_grid,
            seed: 7,
            probes: 5,
            tol: 1e-6,
            max_terms: 50,
            trace_dt: 0.01,
            trace_samples_per_cell: 3.0,
            record_dt: 0.01,
            t1_max: 400.0,
        }
    }

    fn trace_quad(&self) -> QuadratureConfig {
        QuadratureConfig {
            samples_per_cell: self.trace_samples_per_cell,
            ..self.quad
        }
    }
}

/// `L s`: extend, evolve to `T2`, restrict, negate, extend, evolve back to
/// time zero, restrict.
pub fn apply_l(state: &StatePair, t2: f64, env: &SynthesisEnv) -> Result<StatePair> {
    let d1 = CauchyData::new(extend(state, &env.ext)?)?;
    let fw = forward_solve(&d1, t2, &env.quad)?;
    let target = extend(&restrict(&fw)?.scaled(-1.0), &env.ext)?;
    let back = backward_to_zero(&target, t2, &env.grid, Region::Omega, &env.quad)?;
    restrict(&back)
}

/// `C⁴` tensor bump `Π (1 − ((x_i − c_i)/ρ_i)²)⁵`.
fn tensor_bump(p: Point, c: Point, rho: [f64; 2]) -> f64 {
    let f = |x: f64, c: f64, r: f64| {
        let s = (x - c) / r;
        if s.abs() < 1.0 {
            (1.0 - s * s).powi(5)
        } else {
            0.0
        }
    };
    f(p[0], c[0], rho[0]) * f(p[1], c[1], rho[1])
}

/// Seeded random probe states on Ω: one tensor bump in each component,
/// centred inside Ω with widths between 0.2 and 0.6 of the smaller semi-axis.
pub fn probe_states(env: &SynthesisEnv, count: usize) -> Vec<StatePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(env.seed);
    let (a, b) = env.spec.shape.semi_axes();
    let c0 = env.spec.shape.center();
    let m = a.min(b);
    let draw = |rng: &mut ChaCha8Rng| {
        let r = 0.6 * rng.gen::<f64>().sqrt();
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        let c = [c0[0] + r * a * th.cos(), c0[1] + r * b * th.sin()];
        let rho = [m * rng.gen_range(0.2..0.6), m * rng.gen_range(0.2..0.6)];
        let amp = rng.gen_range(0.5..1.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        (c, rho, amp)
    };
    (0..count)
        .map(|_| {
            let (cw, rw, aw) = draw(&mut rng);
            let (cv, rv, av) = draw(&mut rng);
            StatePair::from_fn(env.grid.clone(), Region::Omega, |p| {
                (aw * tensor_bump(p, cw, rw), av * tensor_bump(p, cv, rv))
            })
            .expect("probe samples are finite")
        })
        .collect()
}

/// Largest `‖L s‖/‖s‖` over seeded probes, each iterated twice.
pub fn estimate_opnorm(t2: f64, probes: usize, env: &SynthesisEnv) -> Result<f64> {
    let mut best = 0.0f64;
    for s in probe_states(env, probes) {
        let n0 = s.sup_norm();
        let s1 = apply_l(&s, t2, env)?;
        let n1 = s1.sup_norm();
        best = best.max(n1 / n0);
        if n1 == 0.0 {
            continue;
        }
        let s2 = apply_l(&s1.scaled(1.0 / n1), t2, env)?;
        best = best.max(s2.sup_norm());
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct T2Choice {
    pub t2: f64,
    pub opnorm: f64,
    /// Every `(T2, estimate)` tried, in order.
    pub tried: Vec<(f64, f64)>,
}

/// First `T2 = 2^j · ⌈t*⌉_dt` whose estimated `‖L‖` is at most 0.8.
pub fn choose_t2(env: &SynthesisEnv) -> Result<T2Choice> {
    let ts = t_star(&env.spec, &env.quad);
    let mut t2 = (ts / env.time_grid).ceil() * env.time_grid;
    let mut tried = Vec::new();
    for _ in 0..=8 {
        let est = estimate_opnorm(t2, env.probes, env)?;
        tried.push((t2, est));
        if est <= 0.8 {
            return Ok(T2Choice { t2, opnorm: est, tried });
        }
        t2 *= 2.0;
    }
    Err(Error::BudgetExhausted(format!(
        "no T2 up to {} gives an estimated ‖L‖ ≤ 0.8",
        t2 / 2.0
    )))
}

#[derive(Debug, Clone)]
pub struct SeriesResult {
    pub x: StatePair,
    /// Number of `L` applications in the sum.
    pub terms: usize,
    /// Sup-norm of each term, starting with `‖b‖`.
    pub term_norms: Vec<f64>,
    /// `‖(I+L)x − b‖ / ‖b‖`.
    pub residual: f64,
}

/// `x = Σ (−L)ⁿ b`, stopped once a term drops to `tol·‖b‖`, then checked by
/// one more application of `L`.
pub fn neumann_invert(b: &StatePair, t2: f64, tol: f64, max_terms: usize, env: &SynthesisEnv) -> Result<SeriesResult> {
    let nb = b.sup_norm();
    if nb == 0.0 {
        return Ok(SeriesResult {
            x: b.clone(),
            terms: 0,
            term_norms: vec![0.0],
            residual: 0.0,
        });
    }
    let mut x = b.clone();
    let mut term = b.clone();
    let mut term_norms = vec![nb];
    let mut done = false;
    for _ in 0..max_terms {
        term = apply_l(&term, t2, env)?.scaled(-1.0);
        x = x.axpy(1.0, &term);
        let n = term.sup_norm();
        term_norms.push(n);
        if n <= tol * nb {
            done = true;
            break;
        }
    }
    let terms = term_norms.len() - 1;
    if !done {
        let k = term_norms.len();
        return Err(Error::NoConvergence {
            terms,
            ratio: term_norms[k - 1] / term_norms[k - 2],
        });
    }
    let r = x.axpy(1.0, &apply_l(&x, t2, env)?).axpy(-1.0, b);
    let residual = r.sup_norm() / nb;
    // (I+L)x − b = −(−L)^{N+1} b, so the residual is one more contraction
    // of the last term.
    let gain = term_norms
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .fold(0.0, f64::max)
        .min(1.0);
    if residual > (tol + gain * tol) * 1.0001 + 1e-14 {
        return Err(Error::NoConvergence {
            terms,
            ratio: residual / tol,
        });
    }
    Ok(SeriesResult {
        x,
        terms,
        term_norms,
        residual,
    })
}

/// Output of [`synthesize_control`].
#[derive(Debug, Clone)]
pub struct Step2 {
    /// Control on `[0, T2]` (relative time).
    pub trace: BoundaryTrace,
    /// Combined solution on Ω at `T2`, expected near zero.
    pub predicted_terminal: StatePair,
    pub series: SeriesResult,
    /// Sup-norm of the shifted entry state.
    pub entry_norm: f64,
}

/// The state `(w − c, w_t)` on Ω.
pub fn shift(entry: &StatePair, c: f64) -> Result<StatePair> {
    let e = restrict(entry)?;
    let mask = Region::Omega.mask(&e.grid);
    let w = e.w.iter().zip(mask.iter()).map(|(w, m)| if *m { w - c } else { 0.0 }).collect();
    StatePair::new(e.grid.clone(), Region::Omega, w, e.v)
}

/// Control trace over `[0, T2]` driving `entry` (on Ω) to `(c, 0)`.
///
/// The combined solution is the forward wave of `E x` minus the wave of
/// `E R (forward wave at T2)` run backwards from `T2`, where
/// `(I + L) x = entry − (c, 0)`.
pub fn synthesize_control(entry: &StatePair, c: f64, t2: f64, eps: f64, env: &SynthesisEnv) -> Result<Step2> {
    let b = shift(entry, c)?;
    let entry_norm = b.sup_norm();
    let series = neumann_invert(&b, t2, env.tol, env.max_terms, env).map_err(|e| e.in_stage("neumann series"))?;
    let d1 = CauchyData::new(extend(&series.x, &env.ext)?)?;
    let fw = forward_solve(&d1, t2, &env.quad)?;
    let end = restrict(&fw)?;
    let d2 = CauchyData::new(extend(&end, &env.ext)?.time_reversed())?;

    let steps = (t2 / env.trace_dt).ceil().max(1.0) as usize;
    let dt = t2 / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|j| j as f64 * dt).collect();
    let rev: Vec<f64> = times.iter().map(|t| (t2 - t).max(0.0)).collect();
    let h_nu = 0.5 * env.grid.h;
    let q = env.trace_quad();
    let (u1, u2) = if series.x.sup_norm() == 0.0 {
        let z = vec![vec![0.0; env.mesh.n]; times.len()];
        (z.clone(), z)
    } else {
        (
            normal_trace_series(&d1, &times, &env.mesh, h_nu, &q)?,
            normal_trace_series(&d2, &rev, &env.mesh, h_nu, &q)?,
        )
    };
    let values: Vec<Vec<f64>> = u1
        .iter()
        .zip(&u2)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let trace = BoundaryTrace::new(env.mesh.clone(), 0.0, dt, values)?;

    // Combined solution at T2: the forward wave re-evaluated pointwise minus
    // its restriction. Once T2 ≥ t* both sides take the far path, so this is
    // zero to rounding and only checks the bookkeeping.
    let n = env.grid.len();
    let mut w = vec![0.0; n];
    let mut v = vec![0.0; n];
    if !d1.is_zero() {
        for k in b.nodes() {
            let (a, bb) = eval_point_with_velocity(&d1, env.grid.point(k), t2, &q);
            w[k] = a - end.w[k];
            v[k] = bb - end.v[k];
        }
    }
    let predicted_terminal = StatePair::new(env.grid.clone(), Region::Omega, w, v)?;

    if trace.sup_abs > eps {
        return Err(Error::ControlBoundExceeded {
            sup_u: trace.sup_abs,
            eps,
        });
    }
    Ok(Step2 {
        trace,
        predicted_terminal,
        series,
        entry_norm,
    })
}

/// Initial data as analytic closures.
pub struct InitialData<'a> {
    pub phi: &'a (dyn Fn(Point) -> f64 + Sync),
    pub psi: &'a (dyn Fn(Point) -> f64 + Sync),
}

/// Runs both steps and certifies `sup|u| ≤ eps` over the result.
///
/// Step 1 damps with the friction chosen by [`Solver::choose_k`] until the
/// proxy `max(|w − C|, |w_t|)` falls to `η₁ = eps/(2κ̂)`, where `κ̂` is the
/// trace gain of a calibration probe, raised whenever a synthesized trace
/// comes out over the bound.
pub fn assemble_plan(init: &InitialData, eps: f64, solver: &Solver, env: &SynthesisEnv) -> Result<ControlPlan> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveParameter("eps", eps));
    }
    let compat = check_compatibility(init.phi, init.psi, &env.mesh, 1e-6);
    if !compat.pass {
        return Err(Error::IncompatibleData(compat.max_violation));
    }
    let fe0 = FeState::from_fn(&solver.fe, |p| ((init.phi)(p), (init.psi)(p)));
    let chosen = solver.choose_k(&fe0, eps, 12).map_err(|e| e.in_stage("choose_k"))?;
    let k = chosen.k;
    let c = solver.discrete_rest_constant(&fe0, k);
    let c_formula = {
        let lattice = StatePair::from_fn(env.grid.clone(), Region::Omega, |p| ((init.phi)(p), (init.psi)(p)))?;
        crate::fields::rest_constant(&lattice, k, &env.mesh)?
    };

    let zero = fe0.proxy_norm(c) == 0.0;
    let t2c = if zero {
        let t2 = (t_star(&env.spec, &env.quad) / env.time_grid).ceil() * env.time_grid;
        T2Choice {
            t2,
            opnorm: 0.0,
            tried: Vec::new(),
        }
    } else {
        choose_t2(env).map_err(|e| e.in_stage("choose_T2"))?
    };
    let t2 = t2c.t2;

    let mut kappa = if zero {
        1.0
    } else {
        let probe = &probe_states(env, 1)[0];
        let s = synthesize_control(probe, 0.0, t2, f64::INFINITY, env).map_err(|e| e.in_stage("calibration"))?;
        s.trace.sup_abs / s.entry_norm
    };

    let every = ((env.record_dt / solver.dt).round() as usize).max(1);
    let mut rec_solver = solver.clone();
    rec_solver.cfg.record_every = every;
    let mut st = rec_solver.stepper(&fe0, Mode::Damping(k), 0.0, solver.dt)?;
    let mut rec = Recorder::new(&rec_solver, st.mode_tag(), solver.dt, 0.0);
    let mut attempts = 0;
    let (entry_fe, step2) = loop {
        let eta = eps / (2.0 * kappa);
        loop {
            st.step()?;
            rec.push(&st);
            if (st.steps_taken() - 1) % every == 0 && st.state().proxy_norm(c) <= eta {
                break;
            }
            if st.time() > env.t1_max {
                return Err(Error::BudgetExhausted(format!(
                    "damping did not reach the step-2 entry level {eta:e} by t = {}",
                    env.t1_max
                ))
                .in_stage("step 1"));
            }
        }
        let fe_entry = st.state();
        let entry = fe_entry.to_state(&solver.fe, &env.grid)?;
        match synthesize_control(&entry, c, t2, eps, env) {
            Ok(s) => break (fe_entry, s),
            Err(Error::ControlBoundExceeded { sup_u, .. }) if attempts < 6 => {
                attempts += 1;
                let n = fe_entry.proxy_norm(c);
                kappa = kappa.max(sup_u / n) * 1.1;
            }
            Err(e) => return Err(e.in_stage("synthesis")),
        }
    };
    let t1 = st.time();
    let e_t1 = entry_fe.energy(&solver.fe);
    let traj = rec.finish(&st);
    let trace1 = crate::solver::damping_trace(&traj, k, &env.mesh)?;
    let mut trace2 = step2.trace.clone();
    trace2.t0 = t1;

    let plan = ControlPlan {
        k,
        t1,
        t2,
        eps,
        c_achieved: c,
        c_formula,
        trace1,
        trace2,
        diagnostics: Diagnostics {
            opnorm: t2c.opnorm,
            t2_tried: t2c.tried,
            series_terms: step2.series.terms,
            term_norms: step2.series.term_norms.clone(),
            residual: step2.series.residual,
            kappa,
            eta1: eps / (2.0 * kappa),
            entry_norm: step2.entry_norm,
            entry_energy: e_t1,
            predicted_terminal_sup: step2.predicted_terminal.sup_norm(),
            sup_u_step1_probe: chosen.sup_u,
            terminal_energy: None,
        },
    };
    let sup = plan.recomputed_sup();
    if sup > eps {
        return Err(Error::ControlBoundExceeded { sup_u: sup, eps }.in_stage("certificate"));
    }
    Ok(plan)
}
