use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::domain::BoundaryMesh;
use crate::error::{Error, Result};

/// Boundary control samples `u(t_j, s_i)` on a uniform time grid and an
/// arc-length-uniform boundary mesh.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    pub mesh: Arc<BoundaryMesh>,
    pub t0: f64,
    pub dt: f64,
    /// One row per time, one column per mesh point.
    pub values: Vec<Vec<f64>>,
    pub sup_abs: f64,
}

impl PartialEq for BoundaryTrace {
    fn eq(&self, other: &Self) -> bool {
        self.t0 == other.t0 && self.dt == other.dt && self.values == other.values
    }
}

impl BoundaryTrace {
    pub fn new(mesh: Arc<BoundaryMesh>, t0: f64, dt: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::NonPositiveParameter("trace dt", dt));
        }
        if let Some(row) = values.iter().find(|r| r.len() != mesh.n) {
            return Err(Error::Format(format!(
                "trace row of {} values for a mesh of {}",
                row.len(),
                mesh.n
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trace", 0));
        }
        let sup_abs = values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self {
            mesh,
            t0,
            dt,
            values,
            sup_abs,
        })
    }

    /// All-zero trace over `[t0, t0 + (len−1)·dt]`.
    pub fn zeros(mesh: Arc<BoundaryMesh>, t0: f64, dt: f64, len: usize) -> Self {
        let n = mesh.n;
        Self {
            mesh,
            t0,
            dt,
            values: vec![vec![0.0; n]; len],
            sup_abs: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + (self.len().max(1) - 1) as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|j| self.t0 + j as f64 * self.dt)
    }

    /// Whether `[a, b]` lies in the sampled interval (with rounding slack).
    pub fn covers(&self, a: f64, b: f64) -> bool {
        let slack = 1e-9 * self.dt;
        !self.is_empty() && a >= self.t0 - slack && b <= self.t_end() + slack
    }

    /// Maximum of |u| recomputed from the samples.
    pub fn recomputed_sup(&self) -> f64 {
        self.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Linear in time, periodic linear in arc length. Clamped in time.
    pub fn value(&self, t: f64, s: f64) -> f64 {
        let (i0, i1, ws) = self.mesh.arc_stencil(s);
        let (j0, j1, wt) = self.time_stencil(t);
        let row = |j: usize| (1.0 - ws) * self.values[j][i0] + ws * self.values[j][i1];
        (1.0 - wt) * row(j0) + wt * row(j1)
    }

    pub fn time_stencil(&self, t: f64) -> (usize, usize, f64) {
        let last = self.len() - 1;
        let u = ((t - self.t0) / self.dt).clamp(0.0, last as f64);
        let j = (u.floor() as usize).min(last);
        let j1 = (j + 1).min(last);
        (j, j1, u - j as f64)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            mesh: self.mesh.clone(),
            t0: self.t0,
            dt: self.dt,
            values: self.values.iter().map(|r| r.iter().map(|v| alpha * v).collect()).collect(),
            sup_abs: alpha.abs() * self.sup_abs,
        }
    }

    /// Per-time maximum of |u|.
    pub fn sup_per_time(&self) -> Vec<(f64, f64)> {
        self.times()
            .zip(&self.values)
            .map(|(t, r)| (t, r.iter().fold(0.0f64, |m, v| m.max(v.abs()))))
            .collect()
    }

    /// CSV with header `t,s,u`, one line per sample.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,s,u")?;
        for (t, row) in self.times().zip(&self.values) {
            for (s, u) in self.mesh.arc_coords.iter().zip(row) {
                writeln!(out, "{t:.12e},{s:.12e},{u:.17e}")?;
            }
        }
        Ok(())
    }

    /// Reads a trace written by [`write_csv`](Self::write_csv) for `mesh`.
    pub fn read_csv(input: impl BufRead, mesh: Arc<BoundaryMesh>) -> Result<Self> {
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "t,s,u" => {}
            _ => return Err(Error::Format("trace CSV header must be t,s,u".into())),
        }
        let mut times = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (no, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("trace CSV line {}: {e}", no + 2)))?;
            if f.len() != 3 {
                return Err(Error::Format(format!("trace CSV line {}: expected 3 fields", no + 2)));
            }
            if values.last().map_or(true, |r| r.len() == mesh.n) {
                times.push(f[0]);
                values.push(Vec::with_capacity(mesh.n));
            }
            values.last_mut().unwrap().push(f[2]);
        }
        if times.is_empty() {
            return Err(Error::Format("empty trace CSV".into()));
        }
        let dt = if times.len() > 1 {
            (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
        } else {
            1.0
        };
        Self::new(mesh, times[0], dt, values)
    }
}

/// Consecutive trace segments; a time is served by the first segment whose
/// interval contains it.
#[derive(Debug, Clone, Default)]
pub struct TraceSchedule {
    pub segments: Vec<BoundaryTrace>,
}

impl TraceSchedule {
    pub fn new(segments: Vec<BoundaryTrace>) -> Self {
        Self {
            segments: segments.into_iter().filter(|s| !s.is_empty()).collect(),
        }
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        if self.segments.is_empty() {
            return false;
        }
        let mut reach = a;
        for s in &self.segments {
            if s.covers(reach, reach) {
                reach = reach.max(s.t_end());
            }
        }
        reach >= b - 1e-9 * self.segments[0].dt
    }

    pub fn covered_until(&self) -> f64 {
        self.segments.iter().map(|s| s.t_end()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn segment_at(&self, t: f64) -> Option<&BoundaryTrace> {
        self.segments
            .iter()
            .find(|s| s.covers(t, t))
            .or_else(|| self.segments.last())
    }

    pub fn sup_abs(&self) -> f64 {
        self.segments.iter().map(|s| s.recomputed_sup()).fold(0.0, f64::max)
    }
}
