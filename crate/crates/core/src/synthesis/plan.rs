use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::domain::BoundaryMesh;
use crate::error::{Error, Result};
use crate::solver::{BoundaryTrace, TraceSchedule};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Estimated `‖L‖` at the chosen `T2`.
    pub opnorm: f64,
    pub t2_tried: Vec<(f64, f64)>,
    pub series_terms: usize,
    pub term_norms: Vec<f64>,
    /// Relative residual of the series solution.
    pub residual: f64,
    /// Trace gain used to set the entry level.
    pub kappa: f64,
    /// Step-2 entry level.
    pub eta1: f64,
    /// Sup-norm of the shifted entry state on the lattice.
    pub entry_norm: f64,
    pub entry_energy: f64,
    pub predicted_terminal_sup: f64,
    /// `sup|u|` of the damped probe run behind the choice of `k`.
    pub sup_u_step1_probe: f64,
    /// Filled in by verification.
    pub terminal_energy: Option<f64>,
}

/// The assembled two-step control: damping on `[0, T1]`, then the
/// synthesized trace on `[T1, T1 + T2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPlan {
    pub k: f64,
    pub t1: f64,
    pub t2: f64,
    pub eps: f64,
    /// Level the plan drives the membrane to.
    pub c_achieved: f64,
    /// The same level from the continuum formula on lattice data.
    pub c_formula: f64,
    pub trace1: BoundaryTrace,
    pub trace2: BoundaryTrace,
    pub diagnostics: Diagnostics,
}

impl ControlPlan {
    pub fn t_end(&self) -> f64 {
        self.t1 + self.t2
    }

    pub fn schedule(&self) -> TraceSchedule {
        TraceSchedule::new(vec![self.trace1.clone(), self.trace2.clone()])
    }

    /// `sup|u|` over both traces, from the samples.
    pub fn recomputed_sup(&self) -> f64 {
        self.trace1.recomputed_sup().max(self.trace2.recomputed_sup())
    }

    /// `(t, max_s |u|)` over both segments, in time order.
    pub fn sup_series(&self) -> Vec<(f64, f64)> {
        let mut s = self.trace1.sup_per_time();
        s.extend(self.trace2.sup_per_time());
        s
    }

    /// Writes `plan.meta`, `trace1.csv`, `trace2.csv` and `series.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let d = &self.diagnostics;
        let mut m = BufWriter::new(File::create(dir.join("plan.meta"))?);
        writeln!(m, "k = {:e}", self.k)?;
        writeln!(m, "T1 = {:e}", self.t1)?;
        writeln!(m, "T2 = {:e}", self.t2)?;
        writeln!(m, "eps = {:e}", self.eps)?;
        writeln!(m, "C_achieved = {:e}", self.c_achieved)?;
        writeln!(m, "C_formula = {:e}", self.c_formula)?;
        writeln!(m, "sup_u = {:e}", self.recomputed_sup())?;
        writeln!(m, "opnorm = {:e}", d.opnorm)?;
        writeln!(m, "series_terms = {}", d.series_terms)?;
        writeln!(m, "residual = {:e}", d.residual)?;
        writeln!(m, "kappa = {:e}", d.kappa)?;
        writeln!(m, "eta1 = {:e}", d.eta1)?;
        writeln!(m, "entry_norm = {:e}", d.entry_norm)?;
        writeln!(m, "entry_energy = {:e}", d.entry_energy)?;
        writeln!(m, "predicted_terminal_sup = {:e}", d.predicted_terminal_sup)?;
        writeln!(m, "sup_u_step1_probe = {:e}", d.sup_u_step1_probe)?;
        if let Some(e) = d.terminal_energy {
            writeln!(m, "terminal_energy = {e:e}")?;
        }
        m.flush()?;
        self.trace1.write_csv(BufWriter::new(File::create(dir.join("trace1.csv"))?))?;
        self.trace2.write_csv(BufWriter::new(File::create(dir.join("trace2.csv"))?))?;
        let mut s = BufWriter::new(File::create(dir.join("series.csv"))?);
        writeln!(s, "n,term_norm")?;
        for (n, t) in d.term_norms.iter().enumerate() {
            writeln!(s, "{n},{t:.17e}")?;
        }
        let mut t = BufWriter::new(File::create(dir.join("t2_search.csv"))?);
        writeln!(t, "T2,opnorm")?;
        for (a, b) in &d.t2_tried {
            writeln!(t, "{a:.12e},{b:.17e}")?;
        }
        Ok(())
    }

    /// Reads a plan directory written by [`write_dir`](Self::write_dir).
    /// Diagnostics beyond those in `plan.meta` come back empty.
    pub fn read_dir(dir: &Path, mesh: Arc<BoundaryMesh>) -> Result<Self> {
        let text = fs::read_to_string(dir.join("plan.meta"))?;
        let mut kv = std::collections::HashMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("plan.meta line {}: expected key = value", no + 1)))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str| -> Result<f64> {
            kv.get(key)
                .ok_or_else(|| Error::Format(format!("plan.meta lacks `{key}`")))?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("plan.meta `{key}`: {e}")))
        };
        let opt = |key: &str| num(key).unwrap_or(0.0);
        let trace = |name: &str| -> Result<BoundaryTrace> {
            BoundaryTrace::read_csv(BufReader::new(File::open(dir.join(name))?), mesh.clone())
        };
        Ok(Self {
            k: num("k")?,
            t1: num("T1")?,
            t2: num("T2")?,
            eps: num("eps")?,
            c_achieved: num("C_achieved")?,
            c_formula: opt("C_formula"),
            trace1: trace("trace1.csv")?,
            trace2: trace("trace2.csv")?,
            diagnostics: Diagnostics {
                opnorm: opt("opnorm"),
                series_terms: opt("series_terms") as usize,
                residual: opt("residual"),
                kappa: opt("kappa"),
                eta1: opt("eta1"),
                entry_norm: opt("entry_norm"),
                entry_energy: opt("entry_energy"),
                predicted_terminal_sup: opt("predicted_terminal_sup"),
                sup_u_step1_probe: opt("sup_u_step1_probe"),
                terminal_energy: num("terminal_energy").ok(),
                ..Diagnostics::default()
            },
        })
    }
}
