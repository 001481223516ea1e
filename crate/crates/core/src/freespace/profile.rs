//! Poisson's formula through circular means about a fixed target.
//!
//! Swapping the order of integration gives
//! `w(t,x) = ∫₀ᵗ r (m₀(r)/t + m₁(r)) / √(t²−r²) dr`, where `m₀`, `m₁` are the
//! circular means of `w0 + (y−x)·∇w0` and `w1` on `|y−x| = r`. The means are
//! tabulated once per target, after which every time costs a 1D integral.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::domain::Point;

use super::cauchy::CauchySource;
use super::poisson::{window, QuadratureConfig};
use crate::quad::GaussLegendre;

#[derive(Debug, Clone)]
pub struct MeanProfile {
    dr: f64,
    m0: Vec<f64>,
    m1: Vec<f64>,
    /// Means vanish beyond this radius.
    r_cap: f64,
    gl: GaussLegendre,
}

impl MeanProfile {
    /// Tabulates the means out to `min(t_max, support reach)`.
    pub fn new(src: &dyn CauchySource, x: Point, t_max: f64, q: &QuadratureConfig) -> Self {
        let r_cap = match src.support_bbox() {
            Some(b) => {
                let (_, _, rmin, rmax) = window(x, b);
                if rmin >= t_max {
                    0.0
                } else {
                    rmax.min(t_max)
                }
            }
            None => t_max,
        };
        let h = src.resolution().unwrap_or(t_max.max(1.0) / q.n_rad as f64);
        // A radial table twice as dense as the angular sampling keeps the
        // cubic interpolation error at the level of the direct quadrature.
        let dr = h / (2.0 * q.samples_per_cell);
        let arc = h / q.samples_per_cell;
        let n = (r_cap / dr).ceil() as usize + 3;
        let mut m0 = Vec::with_capacity(n);
        let mut m1 = Vec::with_capacity(n);
        for j in 0..n {
            let r = j as f64 * dr;
            if r > r_cap + 2.0 * dr {
                m0.push(0.0);
                m1.push(0.0);
                continue;
            }
            let n_phi = q.n_theta.max((2.0 * PI * r / arc).ceil() as usize);
            let dphi = 2.0 * PI / n_phi as f64;
            let (mut a, mut b) = (0.0, 0.0);
            for m in 0..n_phi {
                let (s, c) = (m as f64 * dphi).sin_cos();
                let smp = src.sample([x[0] + r * c, x[1] + r * s]);
                a += smp.w0 + r * (c * smp.gx + s * smp.gy);
                b += smp.w1;
            }
            m0.push(a / n_phi as f64);
            m1.push(b / n_phi as f64);
        }
        Self {
            dr,
            m0,
            m1,
            r_cap,
            gl: GaussLegendre::new(8),
        }
    }

    /// Cubic Lagrange interpolation of both tables.
    fn means(&self, r: f64) -> (f64, f64) {
        let n = self.m0.len();
        let f = r / self.dr;
        let i = (f.floor() as usize).saturating_sub(1).min(n - 4);
        let s = f - i as f64;
        let w = [
            -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
            s * (s - 2.0) * (s - 3.0) / 2.0,
            -s * (s - 1.0) * (s - 3.0) / 2.0,
            s * (s - 1.0) * (s - 2.0) / 6.0,
        ];
        let mut out = (0.0, 0.0);
        for k in 0..4 {
            out.0 += w[k] * self.m0[i + k];
            out.1 += w[k] * self.m1[i + k];
        }
        out
    }

    /// Displacement at time `t ≥ 0` (`t = 0` returns the data itself).
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.m0[0];
        }
        // r = t·sin θ turns r dr/√(t²−r²) into t·sin θ dθ.
        let tb = if self.r_cap >= t {
            FRAC_PI_2
        } else {
            (self.r_cap / t).asin()
        };
        let panels = ((tb * t / self.dr) / 8.0).ceil().max(1.0) as usize;
        let mut s = 0.0;
        for (th, wt) in self.gl.composite(0.0, tb, panels) {
            let sn = th.sin();
            let (a, b) = self.means(t * sn);
            s += wt * sn * (a + t * b);
        }
        s
    }
}
