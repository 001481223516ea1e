//! Poisson's formula for the plane wave equation,
//!
//! `w(t,x) = 1/(2πt) ∫_{|y−x|<t} (w0 + (y−x)·∇w0)/√(t²−|y−x|²) dy
//!         + 1/(2π)  ∫_{|y−x|<t} w1/√(t²−|y−x|²) dy`,
//!
//! evaluated either in polar coordinates about `x` with `r = t·sin θ'` (which
//! removes the rim singularity) or, when the whole support sits well inside
//! the cone, as a plain node sum.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use crate::domain::Point;
use crate::quad::GaussLegendre;

use super::cauchy::{CauchySource, FarNodes};

const GL_ORDER: usize = 8;

fn gl8() -> &'static GaussLegendre {
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(GL_ORDER))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Minimum angular nodes over a full turn.
    pub n_theta: usize,
    /// Minimum radial nodes over `θ' ∈ [0, π/2]`.
    pub n_rad: usize,
    /// Far path requires `t² − |y−x|² ≥ far_threshold` over the support.
    pub far_threshold: f64,
    /// Quadrature nodes per lattice spacing when the source has one.
    pub samples_per_cell: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            n_theta: 32,
            n_rad: 16,
            far_threshold: 0.5,
            samples_per_cell: 1.5,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error::NonPositiveParameter;
        if self.n_theta < 8 {
            return Err(NonPositiveParameter("n_theta - 7", self.n_theta as f64 - 7.0));
        }
        if self.n_rad < 8 {
            return Err(NonPositiveParameter("n_rad - 7", self.n_rad as f64 - 7.0));
        }
        if !(self.far_threshold > 0.0) {
            return Err(NonPositiveParameter("far_threshold", self.far_threshold));
        }
        if !(self.samples_per_cell > 0.0) {
            return Err(NonPositiveParameter("samples_per_cell", self.samples_per_cell));
        }
        Ok(())
    }
}

/// Angular window `[lo, hi]` and radial range `[rmin, rmax]` of a box seen
/// from `x`.
pub(crate) fn window(x: Point, bbox: [f64; 4]) -> (f64, f64, f64, f64) {
    let [x0, x1, y0, y1] = bbox;
    let corners = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
    let rmax = corners
        .iter()
        .map(|c| (c[0] - x[0]).hypot(c[1] - x[1]))
        .fold(0.0, f64::max);
    let dx = (x0 - x[0]).max(0.0).max(x[0] - x1);
    let dy = (y0 - x[1]).max(0.0).max(x[1] - y1);
    let rmin = dx.hypot(dy);
    if rmin == 0.0 {
        return (0.0, 2.0 * PI, 0.0, rmax);
    }
    let mid = [(x0 + x1) / 2.0 - x[0], (y0 + y1) / 2.0 - x[1]];
    let base = mid[1].atan2(mid[0]);
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for c in corners {
        let a = (c[1] - x[1]).atan2(c[0] - x[0]) - base;
        let a = (a + PI).rem_euclid(2.0 * PI) - PI;
        lo = lo.min(a);
        hi = hi.max(a);
    }
    (base + lo, base + hi, rmin, rmax)
}

/// Singularity-free polar quadrature of the Poisson integral.
pub fn eval_near(src: &dyn CauchySource, x: Point, t: f64, q: &QuadratureConfig) -> f64 {
    let bbox = src.support_bbox();
    let (lo, hi, rmin, rmax) = match bbox {
        Some(b) => window(x, b),
        None => (0.0, 2.0 * PI, 0.0, t),
    };
    if rmin >= t || hi <= lo {
        return 0.0;
    }
    let rmax = rmax.min(t);
    let ta = (rmin / t).clamp(0.0, 1.0).asin();
    let tb = if rmax >= t {
        FRAC_PI_2
    } else {
        (rmax / t).asin()
    };
    let span = hi - lo;
    let full = span >= 2.0 * PI - 1e-12;
    let (mut n_phi, mut n_r) = (
        ((q.n_theta as f64) * span / (2.0 * PI)).ceil() as usize,
        ((q.n_rad as f64) * (tb - ta) / FRAC_PI_2).ceil() as usize,
    );
    if let Some(h) = src.resolution() {
        let dens = q.samples_per_cell / h;
        n_phi = n_phi.max((span * rmax * dens).ceil() as usize);
        n_r = n_r.max(((tb - ta) * t * dens).ceil() as usize);
    }
    let n_phi = n_phi.max(4);
    let panels = n_r.div_ceil(GL_ORDER).max(1);
    let gl = gl8();
    let dphi = span / n_phi as f64;
    let inv2pi = 1.0 / (2.0 * PI);
    let mut total = 0.0;
    for m in 0..n_phi {
        // periodic trapezoid for a full turn, midpoint on a window
        let phi = if full { lo + m as f64 * dphi } else { lo + (m as f64 + 0.5) * dphi };
        let (s, c) = phi.sin_cos();
        let mut ray = 0.0;
        for (th, wt) in gl.composite(ta, tb, panels) {
            let r = t * th.sin();
            let y = [x[0] + r * c, x[1] + r * s];
            let smp = src.sample(y);
            let radial = r * (c * smp.gx + s * smp.gy);
            ray += wt * r * ((smp.w0 + radial) / t + smp.w1);
        }
        total += ray;
    }
    total * dphi * inv2pi
}

/// Whether the far (nonsingular) node sum is valid for target `x` at `t`.
pub fn far_valid(nodes: &FarNodes, bbox: [f64; 4], x: Point, t: f64, alpha: f64) -> bool {
    if nodes.is_empty() {
        return true;
    }
    let (_, _, _, rmax_box) = window(x, bbox);
    if t * t - rmax_box * rmax_box >= alpha {
        return true;
    }
    let rmax = nodes.max_distance(x);
    t * t - rmax * rmax >= alpha
}

/// Far-path node sums at several times sharing the distance computations.
pub fn eval_far_multi<const N: usize>(nodes: &FarNodes, x: Point, times: [f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    let t2: [f64; N] = times.map(|t| t * t);
    for k in 0..nodes.len() {
        let dx = nodes.x[k] - x[0];
        let dy = nodes.y[k] - x[1];
        let r2 = dx * dx + dy * dy;
        let a = nodes.c0[k] - x[0] * nodes.gx[k] - x[1] * nodes.gy[k];
        let b = nodes.w1[k];
        for i in 0..N {
            out[i] += (a / times[i] + b) / (t2[i] - r2).sqrt();
        }
    }
    let scale = nodes.weight / (2.0 * PI);
    out.map(|v| v * scale)
}
