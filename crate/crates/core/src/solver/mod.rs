//! Initial-boundary-value solver for the membrane on Ω: closed Neumann,
//! boundary friction `∂w/∂ν = −k·w_t`, and prescribed control traces.
//!
//! Space is P1 finite elements with lumped mass on a ring mesh fitted to Γ;
//! time is leapfrog in velocity form. The friction term is centred, which
//! makes the discrete energy exactly nonincreasing.

mod mesh;
mod trace;

use std::f64::consts::SQRT_2;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

pub use mesh::{Csr, FeMesh};
pub use trace::{BoundaryTrace, TraceSchedule};

use crate::domain::{BoundaryMesh, DomainSpec, GridSet, Point};
use crate::error::{Error, Result};
use crate::fields::{interp_masked, Region, StatePair};
use crate::quad::compensated_sum;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Explicit step; derived from the stability bound when `None`.
    pub dt: Option<f64>,
    pub cfl_safety: f64,
    /// Number of rings between centre and boundary.
    pub n_r: usize,
    /// Nodes on the innermost ring; outer rings double as needed.
    pub n_theta: usize,
    /// Keep every n-th step in the recorded boundary velocity.
    pub record_every: usize,
    /// Keep a full snapshot every n-th step (0: none).
    pub snapshot_every: usize,
    /// Horizon of the damped probe runs in [`Solver::choose_k`].
    pub probe_horizon: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: None,
            cfl_safety: 0.8,
            n_r: 128,
            n_theta: 6,
            record_every: 1,
            snapshot_every: 0,
            probe_horizon: 8.0,
        }
    }
}

/// Displacement and velocity at the mesh nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeState {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

impl FeState {
    pub fn zeros(fe: &FeMesh) -> Self {
        Self {
            w: vec![0.0; fe.len()],
            v: vec![0.0; fe.len()],
        }
    }

    pub fn from_fn(fe: &FeMesh, f: impl Fn(Point) -> (f64, f64)) -> Self {
        let (w, v) = fe.nodes.iter().map(|&p| f(p)).unzip();
        Self { w, v }
    }

    /// Samples a lattice state on Ω at the mesh nodes.
    pub fn from_state(fe: &FeMesh, s: &StatePair) -> Self {
        let g = &s.grid;
        let mask = s.region.mask(g);
        let at = |field: &[f64], p: Point| interp_masked(g, field, &mask, p).unwrap_or_else(|| g.bilinear(field, p));
        let (w, v) = fe.nodes.par_iter().map(|&p| (at(&s.w, p), at(&s.v, p))).unzip();
        Self { w, v }
    }

    /// Resamples onto the Ω nodes of `grid`.
    pub fn to_state(&self, fe: &FeMesh, grid: &Arc<GridSet>) -> Result<StatePair> {
        let n = grid.len();
        let vals: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|k| {
                if grid.mask_omega[k] {
                    let p = grid.point(k);
                    (fe.interpolate(&self.w, p), fe.interpolate(&self.v, p))
                } else {
                    (0.0, 0.0)
                }
            })
            .collect();
        let (w, v) = vals.into_iter().unzip();
        StatePair::new(grid.clone(), Region::Omega, w, v)
    }

    pub fn energy(&self, fe: &FeMesh) -> f64 {
        let kin = compensated_sum(self.v.iter().zip(&fe.mass).map(|(v, m)| m * v * v));
        kin + fe.stiffness.bilinear(&self.w, &self.w)
    }

    pub fn mean(&self, fe: &FeMesh) -> f64 {
        let area: f64 = fe.mass.iter().sum();
        compensated_sum(self.w.iter().zip(&fe.mass).map(|(w, m)| w * m)) / area
    }

    pub fn boundary_mean(&self, fe: &FeMesh) -> f64 {
        let len: f64 = fe.boundary_len.iter().sum();
        fe.boundary
            .iter()
            .zip(&fe.boundary_len)
            .map(|(&i, l)| self.w[i] * l)
            .sum::<f64>()
            / len
    }

    /// `max(sup|w − c|, sup|w_t|)`.
    pub fn proxy_norm(&self, c: f64) -> f64 {
        let a = self.w.iter().fold(0.0f64, |m, w| m.max((w - c).abs()));
        let b = self.v.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.max(b)
    }
}

#[derive(Debug, Clone)]
pub enum Mode {
    Closed,
    Damping(f64),
    Control(TraceSchedule),
}

impl Mode {
    pub fn friction(&self) -> f64 {
        match self {
            Mode::Damping(k) => *k,
            _ => 0.0,
        }
    }
}

/// Mesh, boundary sampling and step size for one domain and configuration.
#[derive(Debug, Clone)]
pub struct Solver {
    pub spec: DomainSpec,
    pub cfg: SolverConfig,
    pub fe: Arc<FeMesh>,
    pub mesh: Arc<BoundaryMesh>,
    pub dt: f64,
    /// Arc-length coordinate of each mesh boundary node.
    boundary_arc: Vec<f64>,
}

impl Solver {
    pub fn new(spec: &DomainSpec, cfg: &SolverConfig, mesh: Arc<BoundaryMesh>) -> Result<Self> {
        if cfg.n_r < 2 {
            return Err(Error::NonPositiveParameter("n_r - 1", cfg.n_r as f64 - 1.0));
        }
        if cfg.n_theta < 3 {
            return Err(Error::NonPositiveParameter("n_theta - 2", cfg.n_theta as f64 - 2.0));
        }
        if !(cfg.cfl_safety > 0.0 && cfg.cfl_safety <= 1.0) {
            return Err(Error::NonPositiveParameter("cfl_safety", cfg.cfl_safety));
        }
        let fe = Arc::new(FeMesh::build(spec, cfg.n_r, cfg.n_theta));
        let geometric = fe.h_min / SQRT_2;
        let spectral = 2.0 / fe.lambda_max().sqrt();
        let limit = cfg.cfl_safety * geometric.min(spectral);
        let dt = match cfg.dt {
            Some(dt) if dt > limit => return Err(Error::CflViolation { dt, limit }),
            Some(dt) if !(dt > 0.0) => return Err(Error::NonPositiveParameter("dt", dt)),
            Some(dt) => dt,
            None => limit,
        };
        let boundary_arc = fe.boundary_param.iter().map(|&t| spec.arc_length(t)).collect();
        Ok(Self {
            spec: spec.clone(),
            cfg: cfg.clone(),
            fe,
            mesh,
            dt,
            boundary_arc,
        })
    }

    /// Largest stable step for this mesh (before the safety factor is applied
    /// it is `min(h_min/√2, 2/√λ_max)`).
    pub fn dt_limit(&self) -> f64 {
        self.cfg.cfl_safety * (self.fe.h_min / SQRT_2).min(2.0 / self.fe.lambda_max().sqrt())
    }

    pub fn stepper(&self, initial: &FeState, mode: Mode, t0: f64, dt: f64) -> Result<Stepper<'_>> {
        Stepper::new(self, initial, mode, t0, dt)
    }

    /// Runs for duration `t` (the step is shrunk so it divides `t`).
    pub fn run(&self, initial: &FeState, mode: Mode, t: f64) -> Result<Trajectory> {
        self.run_from(initial, mode, 0.0, t)
    }

    pub fn run_from(&self, initial: &FeState, mode: Mode, t0: f64, t: f64) -> Result<Trajectory> {
        if !(t >= 0.0) {
            return Err(Error::NonPositiveParameter("duration", t));
        }
        if let Mode::Control(s) = &mode {
            if !s.covers(t0, t0 + t) {
                return Err(Error::TraceTooShort {
                    covered: s.covered_until(),
                    needed: t0 + t,
                });
            }
        }
        let steps = (t / self.dt).ceil().max(1.0) as usize;
        let dt = if t > 0.0 { t / steps as f64 } else { self.dt };
        let steps = if t > 0.0 { steps } else { 0 };
        let mut st = self.stepper(initial, mode, t0, dt)?;
        let mut rec = Recorder::new(self, st.mode_tag(), dt, t0);
        for _ in 0..=steps {
            st.step()?;
            rec.push(&st);
        }
        Ok(rec.finish(&st))
    }

    /// `w_t` sampled at the boundary mesh points.
    pub fn boundary_samples(&self, field: &[f64]) -> Vec<f64> {
        let vals: Vec<f64> = self.fe.boundary.iter().map(|&i| field[i]).collect();
        self.mesh.params.iter().map(|&p| self.fe.boundary_value(&vals, p)).collect()
    }

    /// Starts at `k = 1` and halves until a damped probe run keeps
    /// `sup |k·w_t|` on Γ within `eps`.
    pub fn choose_k(&self, initial: &FeState, eps: f64, budget: usize) -> Result<ChosenK> {
        if !(eps > 0.0) {
            return Err(Error::NonPositiveParameter("eps", eps));
        }
        let mut k = 1.0;
        for _ in 0..=budget {
            let traj = self.run(initial, Mode::Damping(k), self.cfg.probe_horizon)?;
            let sup_u = k * traj.sup_boundary_velocity;
            if sup_u <= eps {
                return Ok(ChosenK { k, sup_u });
            }
            k *= 0.5;
        }
        Err(Error::BudgetExhausted(format!(
            "no friction coefficient down to {} keeps |u| ≤ {eps}",
            2.0 * k
        )))
    }

    /// Level the damped discrete solution settles at, from the exactly
    /// conserved `Σ M w_t + k Σ L w`.
    pub fn discrete_rest_constant(&self, initial: &FeState, k: f64) -> f64 {
        let fe = &self.fe;
        let mom = compensated_sum(initial.v.iter().zip(&fe.mass).map(|(v, m)| v * m));
        let len: f64 = fe.boundary_len.iter().sum();
        let bw: f64 = fe.boundary.iter().zip(&fe.boundary_len).map(|(&i, l)| l * initial.w[i]).sum();
        bw / len + mom / (k * len)
    }
}

/// Convenience wrapper: run from a lattice state on Ω.
pub fn run(initial: &StatePair, mode: Mode, t: f64, cfg: &SolverConfig, mesh: Arc<BoundaryMesh>) -> Result<Trajectory> {
    let spec = initial
        .grid
        .domain()
        .ok_or_else(|| Error::RegionMismatch("state lattice carries no domain".into()))?
        .clone();
    let solver = Solver::new(&spec, cfg, mesh)?;
    let init = FeState::from_state(&solver.fe, initial);
    solver.run(&init, mode, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChosenK {
    pub k: f64,
    pub sup_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeTag {
    Closed,
    Damping(f64),
    Control,
}

/// Resumable leapfrog integrator. Holds `w^n` and `v^{n−½}`; each
/// [`step`](Self::step) computes `v^{n+½}`, exposes `(w^n, w_t^n)` at `t_n`
/// and the leapfrog energy of the interval `[t_n, t_{n+1}]`, then advances.
pub struct Stepper<'a> {
    solver: &'a Solver,
    mode: Mode,
    dt: f64,
    t0: f64,
    n: usize,
    w: Vec<f64>,
    v_minus: Vec<f64>,
    prev_w: Vec<f64>,
    wt: Vec<f64>,
    kw: Vec<f64>,
    g: Vec<f64>,
    energy: f64,
    sup_boundary_wt: f64,
    /// (segment index, per-node arc stencil) for control mode.
    stencils: Vec<(usize, usize, f64)>,
}

impl<'a> Stepper<'a> {
    fn new(solver: &'a Solver, initial: &FeState, mode: Mode, t0: f64, dt: f64) -> Result<Self> {
        let fe = &solver.fe;
        let n = fe.len();
        if initial.w.len() != n || initial.v.len() != n {
            return Err(Error::RegionMismatch(format!(
                "initial state of {} nodes for a mesh of {n}",
                initial.w.len()
            )));
        }
        if let Some(k) = initial.w.iter().chain(&initial.v).position(|x| !x.is_finite()) {
            return Err(Error::NonFinite("initial", k % n));
        }
        if let Mode::Damping(k) = mode {
            if !(k > 0.0) {
                return Err(Error::NonPositiveParameter("k", k));
            }
        }
        let stencils = match &mode {
            Mode::Control(s) => {
                let m = &s.segments.first().ok_or(Error::TraceTooShort {
                    covered: f64::NEG_INFINITY,
                    needed: t0,
                })?;
                solver.boundary_arc.iter().map(|&a| m.mesh.arc_stencil(a)).collect()
            }
            _ => Vec::new(),
        };
        let mut st = Self {
            solver,
            mode,
            dt,
            t0,
            n: 0,
            w: initial.w.clone(),
            v_minus: vec![0.0; n],
            prev_w: initial.w.clone(),
            wt: initial.v.clone(),
            kw: vec![0.0; n],
            g: vec![0.0; fe.boundary.len()],
            energy: initial.energy(fe),
            sup_boundary_wt: 0.0,
            stencils,
        };
        // v^{−½} = w1 − (dt/2)·M⁻¹(−K w0 + b(w1)) keeps the start second order.
        fe.stiffness.mul(&st.w, &mut st.kw);
        st.load_boundary(t0, &initial.v)?;
        let mut acc = st.kw.iter().map(|x| -x).collect::<Vec<_>>();
        for (j, &i) in fe.boundary.iter().enumerate() {
            acc[i] += fe.boundary_len[j] * st.g[j];
        }
        for i in 0..n {
            st.v_minus[i] = initial.v[i] - 0.5 * dt * acc[i] / fe.mass[i];
        }
        Ok(st)
    }

    /// Boundary data `g` at time `t`. In damping mode this is `−k·w_t` for
    /// the start-up only; steps use the implicit centred form.
    fn load_boundary(&mut self, t: f64, wt: &[f64]) -> Result<()> {
        let fe = &self.solver.fe;
        match &self.mode {
            Mode::Closed => self.g.iter_mut().for_each(|g| *g = 0.0),
            Mode::Damping(k) => {
                for (j, &i) in fe.boundary.iter().enumerate() {
                    self.g[j] = -k * wt[i];
                }
            }
            Mode::Control(s) => {
                let seg = s.segment_at(t).ok_or(Error::TraceTooShort {
                    covered: s.covered_until(),
                    needed: t,
                })?;
                if !seg.covers(t, t) {
                    return Err(Error::TraceTooShort {
                        covered: s.covered_until(),
                        needed: t,
                    });
                }
                let (j0, j1, wt_) = seg.time_stencil(t);
                let (r0, r1) = (&seg.values[j0], &seg.values[j1]);
                for (j, &(a, b, ws)) in self.stencils.iter().enumerate() {
                    let u0 = (1.0 - ws) * r0[a] + ws * r0[b];
                    let u1 = (1.0 - ws) * r1[a] + ws * r1[b];
                    self.g[j] = (1.0 - wt_) * u0 + wt_ * u1;
                }
            }
        }
        Ok(())
    }

    pub fn mode_tag(&self) -> ModeTag {
        match self.mode {
            Mode::Closed => ModeTag::Closed,
            Mode::Damping(k) => ModeTag::Damping(k),
            Mode::Control(_) => ModeTag::Control,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time of the state exposed by the last step.
    pub fn time(&self) -> f64 {
        self.t0 + (self.n.max(1) - 1) as f64 * self.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.n
    }

    pub fn displacement(&self) -> &[f64] {
        &self.prev_w
    }

    pub fn velocity(&self) -> &[f64] {
        &self.wt
    }

    pub fn state(&self) -> FeState {
        FeState {
            w: self.prev_w.clone(),
            v: self.wt.clone(),
        }
    }

    /// Leapfrog energy `Σ M (v^{n+½})² + (w^{n+1})ᵀ K w^n` of the last step.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Largest |w_t| seen at boundary nodes so far.
    pub fn sup_boundary_velocity(&self) -> f64 {
        self.sup_boundary_wt
    }

    pub fn step(&mut self) -> Result<()> {
        let fe = &self.solver.fe;
        let dt = self.dt;
        let t = self.t0 + self.n as f64 * self.dt;
        let k = self.mode.friction();
        fe.stiffness.mul(&self.w, &mut self.kw);
        if !matches!(self.mode, Mode::Damping(_)) {
            self.load_boundary(t, &[])?;
        }
        let n = fe.len();
        // v⁺ into `wt` first, then centre it.
        for i in 0..n {
            self.wt[i] = self.v_minus[i] - dt * self.kw[i] / fe.mass[i];
        }
        for (j, &i) in fe.boundary.iter().enumerate() {
            let m = fe.mass[i];
            let l = fe.boundary_len[j];
            if k > 0.0 {
                let rhs = (m / dt - 0.5 * k * l) * self.v_minus[i] - self.kw[i];
                self.wt[i] = rhs / (m / dt + 0.5 * k * l);
            } else {
                self.wt[i] += dt * l * self.g[j] / m;
            }
        }
        // wt holds v⁺ here.
        let kin = compensated_sum(self.wt.iter().zip(&fe.mass).map(|(v, m)| m * v * v));
        std::mem::swap(&mut self.prev_w, &mut self.w);
        for i in 0..n {
            let vp = self.wt[i];
            self.w[i] = self.prev_w[i] + dt * vp;
            self.wt[i] = 0.5 * (vp + self.v_minus[i]);
            self.v_minus[i] = vp;
        }
        self.energy = kin + fe.stiffness.bilinear(&self.w, &self.prev_w);
        let sb = fe.boundary.iter().fold(0.0f64, |m, &i| m.max(self.wt[i].abs()));
        self.sup_boundary_wt = self.sup_boundary_wt.max(sb);
        if !self.energy.is_finite() {
            return Err(Error::NonFinite("energy", self.n));
        }
        self.n += 1;
        Ok(())
    }
}

/// One full snapshot of a run.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub state: FeState,
}

/// Recorded run. `times` and `energies` have one entry per step (the energy
/// is the leapfrog energy of `[t_n, t_{n+1}]`); boundary velocities and
/// means are kept every `record_every` steps.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub fe: Arc<FeMesh>,
    pub mesh: Arc<BoundaryMesh>,
    pub mode: ModeTag,
    pub dt: f64,
    pub record_every: usize,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub record_times: Vec<f64>,
    /// `w_t` at the boundary mesh points, one row per recorded time.
    pub boundary_velocity: Vec<Vec<f64>>,
    /// Spatial mean of `w` over Ω per recorded time.
    pub means: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: FeState,
    /// Largest |w_t| at boundary nodes over all steps.
    pub sup_boundary_velocity: f64,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn snapshot_state(&self, i: usize, grid: &Arc<GridSet>) -> Result<StatePair> {
        self.snapshots[i].state.to_state(&self.fe, grid)
    }

    pub fn final_lattice_state(&self, grid: &Arc<GridSet>) -> Result<StatePair> {
        self.final_state.to_state(&self.fe, grid)
    }

    /// CSV `t,E`.
    pub fn write_energy_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,E")?;
        for (t, e) in self.times.iter().zip(&self.energies) {
            writeln!(out, "{t:.12e},{e:.17e}")?;
        }
        Ok(())
    }
}

/// Accumulates a trajectory from a stepper.
pub struct Recorder {
    fe: Arc<FeMesh>,
    mesh: Arc<BoundaryMesh>,
    mode: ModeTag,
    dt: f64,
    every: usize,
    snap_every: usize,
    times: Vec<f64>,
    energies: Vec<f64>,
    record_times: Vec<f64>,
    boundary_velocity: Vec<Vec<f64>>,
    means: Vec<f64>,
    snapshots: Vec<Snapshot>,
    params: Vec<f64>,
}

impl Recorder {
    pub fn new(solver: &Solver, mode: ModeTag, dt: f64, _t0: f64) -> Self {
        Self {
            fe: solver.fe.clone(),
            mesh: solver.mesh.clone(),
            mode,
            dt,
            every: solver.cfg.record_every.max(1),
            snap_every: solver.cfg.snapshot_every,
            times: Vec::new(),
            energies: Vec::new(),
            record_times: Vec::new(),
            boundary_velocity: Vec::new(),
            means: Vec::new(),
            snapshots: Vec::new(),
            params: solver.mesh.params.clone(),
        }
    }

    pub fn push(&mut self, st: &Stepper) {
        let idx = st.steps_taken() - 1;
        let t = st.time();
        self.times.push(t);
        self.energies.push(st.energy());
        if idx % self.every == 0 {
            let fe = &self.fe;
            let vals: Vec<f64> = fe.boundary.iter().map(|&i| st.velocity()[i]).collect();
            self.boundary_velocity
                .push(self.params.iter().map(|&p| fe.boundary_value(&vals, p)).collect());
            self.record_times.push(t);
            let area: f64 = fe.mass.iter().sum();
            self.means.push(
                compensated_sum(st.displacement().iter().zip(&fe.mass).map(|(w, m)| w * m)) / area,
            );
        }
        if self.snap_every > 0 && idx % self.snap_every == 0 {
            self.snapshots.push(Snapshot { t, state: st.state() });
        }
    }

    pub fn finish(self, st: &Stepper) -> Trajectory {
        Trajectory {
            fe: self.fe,
            mesh: self.mesh,
            mode: self.mode,
            dt: self.dt,
            record_every: self.every,
            times: self.times,
            energies: self.energies,
            record_times: self.record_times,
            boundary_velocity: self.boundary_velocity,
            means: self.means,
            snapshots: self.snapshots,
            final_state: st.state(),
            sup_boundary_velocity: st.sup_boundary_velocity(),
        }
    }
}

/// `u = −k·w_t` on the recorded boundary samples of a damped run.
pub fn damping_trace(traj: &Trajectory, k: f64, mesh: &Arc<BoundaryMesh>) -> Result<BoundaryTrace> {
    match traj.mode {
        ModeTag::Damping(kk) if kk == k => {}
        _ => return Err(Error::ModeMismatch(k)),
    }
    if mesh.n != traj.mesh.n {
        return Err(Error::RegionMismatch(format!(
            "trace mesh of {} points, trajectory recorded on {}",
            mesh.n, traj.mesh.n
        )));
    }
    let values = traj
        .boundary_velocity
        .iter()
        .map(|r| r.iter().map(|v| -k * v).collect())
        .collect();
    let t0 = traj.record_times.first().copied().unwrap_or(0.0);
    BoundaryTrace::new(mesh.clone(), t0, traj.dt * traj.record_every as f64, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityReport {
    pub pass: bool,
    pub max_violation: f64,
    pub max_normal_derivative: f64,
    pub max_velocity: f64,
}

/// `|∂φ/∂ν|` (central difference along ν) and `|ψ|` at the mesh points.
pub fn check_compatibility(
    phi: &dyn Fn(Point) -> f64,
    psi: &dyn Fn(Point) -> f64,
    mesh: &BoundaryMesh,
    tol: f64,
) -> CompatibilityReport {
    let h = 1e-5;
    let mut dn = 0.0f64;
    let mut ps = 0.0f64;
    for (p, n) in mesh.points.iter().zip(&mesh.normals) {
        let a = phi([p[0] + h * n[0], p[1] + h * n[1]]);
        let b = phi([p[0] - h * n[0], p[1] - h * n[1]]);
        dn = dn.max(((a - b) / (2.0 * h)).abs());
        ps = ps.max(psi(*p).abs());
    }
    let max_violation = dn.max(ps);
    CompatibilityReport {
        pass: max_violation <= tol,
        max_violation,
        max_normal_derivative: dn,
        max_velocity: ps,
    }
}
