use std::fmt::Write as _;
use std::path::PathBuf;

use crate::domain::{Point, Shape};
use crate::error::{Error, Result};
use crate::freespace::QuadratureConfig;
use crate::solver::SolverConfig;

/// Analytic initial data, sampled wherever the pipeline needs them.
#[derive(Debug, Clone, PartialEq)]
pub enum DataFamily {
    Zero,
    /// `φ ≡ a`, `ψ ≡ 0`.
    Constant { a: f64 },
    /// `φ = amplitude·b`, `ψ = velocity·b` with the C⁴ bump
    /// `b = (1 − |x − center|²/width²)⁵` inside `width`.
    RadialBump {
        center: Point,
        width: f64,
        amplitude: f64,
        velocity: f64,
    },
    /// `φ = slope · x`, `ψ ≡ 0`.
    Linear { slope: Point },
}

impl DataFamily {
    pub fn name(&self) -> &'static str {
        match self {
            DataFamily::Zero => "zero",
            DataFamily::Constant { .. } => "constant",
            DataFamily::RadialBump { .. } => "radial-bump",
            DataFamily::Linear { .. } => "linear",
        }
    }

    pub fn phi(&self, p: Point) -> f64 {
        match *self {
            DataFamily::Zero => 0.0,
            DataFamily::Constant { a } => a,
            DataFamily::RadialBump {
                center,
                width,
                amplitude,
                ..
            } => amplitude * bump(p, center, width),
            DataFamily::Linear { slope } => slope[0] * p[0] + slope[1] * p[1],
        }
    }

    pub fn psi(&self, p: Point) -> f64 {
        match *self {
            DataFamily::RadialBump {
                center,
                width,
                velocity,
                ..
            } => velocity * bump(p, center, width),
            _ => 0.0,
        }
    }
}

fn bump(p: Point, c: Point, width: f64) -> f64 {
    let r2 = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (width * width);
    if r2 < 1.0 {
        (1.0 - r2).powi(5)
    } else {
        0.0
    }
}

/// Step-2 settings that are not part of the geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSettings {
    pub tol: f64,
    pub max_terms: usize,
    pub probes: usize,
    pub trace_dt: f64,
    pub trace_samples_per_cell: f64,
    pub extension_order: usize,
    pub plateau: f64,
    pub reach: f64,
    pub t1_max: f64,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_terms: 50,
            probes: 5,
            trace_dt: 0.01,
            trace_samples_per_cell: 3.0,
            extension_order: 0,
            plateau: 0.0,
            reach: 2.0 / 3.0,
            t1_max: 400.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub shape: Shape,
    pub delta: f64,
    pub h: f64,
    pub boundary_samples: usize,
    pub data: DataFamily,
    pub eps: f64,
    pub solver: SolverConfig,
    pub quad: QuadratureConfig,
    pub synthesis: SynthesisSettings,
    /// Largest verified terminal energy, relative to the initial energy,
    /// that counts as a pass.
    pub max_rel_energy: f64,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for Scenario {
    /// The demo: unit disk, centred bump of amplitude 0.1, eps = 0.05.
    fn default() -> Self {
        Self {
            shape: Shape::Disk {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            delta: 0.5,
            h: 0.025,
            boundary_samples: 256,
            data: DataFamily::RadialBump {
                center: [0.0, 0.0],
                width: 0.5,
                amplitude: 0.1,
                velocity: 0.0,
            },
            eps: 0.05,
            solver: SolverConfig::default(),
            quad: QuadratureConfig::default(),
            synthesis: SynthesisSettings::default(),
            max_rel_energy: 1e-2,
            out: PathBuf::from("out"),
            seed: 7,
        }
    }
}

fn err(line: usize, key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn num(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|e| err(line, key, format!("`{v}` is not a number: {e}")))
}

fn count(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|e| err(line, key, format!("`{v}` is not a count: {e}")))
}

fn point(line: usize, key: &str, v: &str) -> Result<Point> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(err(line, key, format!("`{v}` is not a point `x, y`")));
    }
    Ok([num(line, key, parts[0])?, num(line, key, parts[1])?])
}

/// Keys in the order [`Scenario::to_config`] writes them.
#[derive(Default)]
struct Raw {
    entries: Vec<(usize, String, String)>,
}

impl Raw {
    fn parse(text: &str) -> Result<Self> {
        let mut raw = Raw::default();
        for (i, line) in text.lines().enumerate() {
            let no = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(no, line, "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(err(no, k, "empty key"));
            }
            if let Some((first, _, _)) = raw.entries.iter().find(|(_, key, _)| key == k) {
                return Err(err(no, k, format!("duplicate key, first set on line {first}")));
            }
            raw.entries.push((no, k.to_string(), v.to_string()));
        }
        Ok(raw)
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        let i = self.entries.iter().position(|(_, k, _)| k == key)?;
        let (no, _, v) = self.entries.remove(i);
        Some((no, v))
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            Some((no, v)) => num(no, key, &v),
            None => Ok(default),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            Some((no, v)) => count(no, key, &v),
            None => Ok(default),
        }
    }

    fn point(&mut self, key: &str, default: Point) -> Result<Point> {
        match self.take(key) {
            Some((no, v)) => point(no, key, &v),
            None => Ok(default),
        }
    }
}

impl Scenario {
    /// Parses `key = value` lines with `#` comments. Unset keys keep the
    /// demo defaults; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let d = Scenario::default();
        let mut r = Raw::parse(text)?;

        let (shape_line, shape_name) = r.take("domain.shape").unwrap_or((0, "disk".into()));
        let center = r.point("domain.center", [0.0, 0.0])?;
        let shape = match shape_name.as_str() {
            "disk" => Shape::Disk {
                center,
                radius: r.f64("domain.radius", 1.0)?,
            },
            "ellipse" => Shape::Ellipse {
                center,
                a: r.f64("domain.a", 1.0)?,
                b: r.f64("domain.b", 1.0)?,
            },
            other => {
                return Err(err(
                    shape_line,
                    "domain.shape",
                    format!("unknown shape `{other}` (disk, ellipse)"),
                ))
            }
        };
        let delta = r.f64("domain.delta", d.delta)?;
        let h = r.f64("domain.h", d.h)?;
        let boundary_samples = r.usize("domain.boundary_samples", d.boundary_samples)?;

        let (fam_line, fam) = r.take("data.family").unwrap_or((0, "radial-bump".into()));
        let data = match fam.as_str() {
            "zero" => DataFamily::Zero,
            "constant" => DataFamily::Constant {
                a: r.f64("data.a", 0.0)?,
            },
            "radial-bump" => DataFamily::RadialBump {
                center: r.point("data.center", [0.0, 0.0])?,
                width: r.f64("data.width", 0.5)?,
                amplitude: r.f64("data.amplitude", 0.1)?,
                velocity: r.f64("data.velocity", 0.0)?,
            },
            "linear" => DataFamily::Linear {
                slope: r.point("data.slope", [1.0, 0.0])?,
            },
            other => {
                return Err(err(
                    fam_line,
                    "data.family",
                    format!("unknown family `{other}` (radial-bump, constant, zero, linear)"),
                ))
            }
        };
        if let DataFamily::RadialBump { width, .. } = data {
            if !(width > 0.0) {
                let line = fam_line.max(1);
                return Err(err(line, "data.width", "must be positive"));
            }
        }

        let eps_line = r.entries.iter().find(|e| e.1 == "eps").map_or(0, |e| e.0);
        let eps = r.f64("eps", d.eps)?;
        if !(eps > 0.0) {
            return Err(err(eps_line, "eps", "must be positive"));
        }
        let seed = match r.take("seed") {
            Some((no, v)) => v
                .parse::<u64>()
                .map_err(|e| err(no, "seed", format!("`{v}`: {e}")))?,
            None => d.seed,
        };
        let out = r.take("output.dir").map_or(d.out.clone(), |(_, v)| PathBuf::from(v));

        let sd = &d.solver;
        let dt = match r.take("solver.dt") {
            Some((no, v)) => Some(num(no, "solver.dt", &v)?),
            None => sd.dt,
        };
        let solver = SolverConfig {
            dt,
            cfl_safety: r.f64("solver.cfl_safety", sd.cfl_safety)?,
            n_r: r.usize("solver.n_r", sd.n_r)?,
            n_theta: r.usize("solver.n_theta", sd.n_theta)?,
            probe_horizon: r.f64("solver.probe_horizon", sd.probe_horizon)?,
            ..sd.clone()
        };
        let qd = &d.quad;
        let quad = QuadratureConfig {
            n_theta: r.usize("quadrature.n_theta", qd.n_theta)?,
            n_rad: r.usize("quadrature.n_rad", qd.n_rad)?,
            far_threshold: r.f64("quadrature.far_threshold", qd.far_threshold)?,
            samples_per_cell: r.f64("quadrature.samples_per_cell", qd.samples_per_cell)?,
        };
        let yd = &d.synthesis;
        let synthesis = SynthesisSettings {
            tol: r.f64("synthesis.tol", yd.tol)?,
            max_terms: r.usize("synthesis.max_terms", yd.max_terms)?,
            probes: r.usize("synthesis.probes", yd.probes)?,
            trace_dt: r.f64("synthesis.trace_dt", yd.trace_dt)?,
            trace_samples_per_cell: r.f64("synthesis.trace_samples_per_cell", yd.trace_samples_per_cell)?,
            extension_order: r.usize("synthesis.extension_order", yd.extension_order)?,
            plateau: r.f64("synthesis.plateau", yd.plateau)?,
            reach: r.f64("synthesis.reach", yd.reach)?,
            t1_max: r.f64("synthesis.t1_max", yd.t1_max)?,
        };
        let max_rel_energy = r.f64("verify.max_rel_energy", d.max_rel_energy)?;

        if let Some((no, k, _)) = r.entries.first() {
            return Err(err(*no, k, "unknown key"));
        }
        Ok(Scenario {
            shape,
            delta,
            h,
            boundary_samples,
            data,
            eps,
            solver,
            quad,
            synthesis,
            max_rel_energy,
            out,
            seed,
        })
    }

    /// Text that [`parse`](Self::parse) maps back to `self`.
    pub fn to_config(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let pt = |p: Point| format!("{}, {}", p[0], p[1]);
        match self.shape {
            Shape::Disk { center, radius } => {
                kv("domain.shape", "disk".into());
                kv("domain.center", pt(center));
                kv("domain.radius", radius.to_string());
            }
            Shape::Ellipse { center, a, b } => {
                kv("domain.shape", "ellipse".into());
                kv("domain.center", pt(center));
                kv("domain.a", a.to_string());
                kv("domain.b", b.to_string());
            }
        }
        kv("domain.delta", self.delta.to_string());
        kv("domain.h", self.h.to_string());
        kv("domain.boundary_samples", self.boundary_samples.to_string());
        kv("data.family", self.data.name().into());
        match self.data {
            DataFamily::Zero => {}
            DataFamily::Constant { a } => kv("data.a", a.to_string()),
            DataFamily::RadialBump {
                center,
                width,
                amplitude,
                velocity,
            } => {
                kv("data.center", pt(center));
                kv("data.width", width.to_string());
                kv("data.amplitude", amplitude.to_string());
                kv("data.velocity", velocity.to_string());
            }
            DataFamily::Linear { slope } => kv("data.slope", pt(slope)),
        }
        kv("eps", self.eps.to_string());
        kv("seed", self.seed.to_string());
        kv("output.dir", self.out.display().to_string());
        if let Some(dt) = self.solver.dt {
            kv("solver.dt", dt.to_string());
        }
        kv("solver.cfl_safety", self.solver.cfl_safety.to_string());
        kv("solver.n_r", self.solver.n_r.to_string());
        kv("solver.n_theta", self.solver.n_theta.to_string());
        kv("solver.probe_horizon", self.solver.probe_horizon.to_string());
        kv("quadrature.n_theta", self.quad.n_theta.to_string());
        kv("quadrature.n_rad", self.quad.n_rad.to_string());
        kv("quadrature.far_threshold", self.quad.far_threshold.to_string());
        kv("quadrature.samples_per_cell", self.quad.samples_per_cell.to_string());
        let y = &self.synthesis;
        kv("synthesis.tol", y.tol.to_string());
        kv("synthesis.max_terms", y.max_terms.to_string());
        kv("synthesis.probes", y.probes.to_string());
        kv("synthesis.trace_dt", y.trace_dt.to_string());
        kv("synthesis.trace_samples_per_cell", y.trace_samples_per_cell.to_string());
        kv("synthesis.extension_order", y.extension_order.to_string());
        kv("synthesis.plateau", y.plateau.to_string());
        kv("synthesis.reach", y.reach.to_string());
        kv("synthesis.t1_max", y.t1_max.to_string());
        kv("verify.max_rel_energy", self.max_rel_energy.to_string());
        s
    }
}
