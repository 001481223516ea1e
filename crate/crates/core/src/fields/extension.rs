use crate::error::{Error, Result};
use crate::quad::solve_dense;

use super::state::{interp_masked, Region, StatePair};

/// Normal-line reflection extension with a polynomial collar cutoff.
///
/// A collar node at distance `s` outside Γ, with foot `p` and normal `ν`,
/// receives `cutoff(s) · Σ_j a_j · w(p − j·s·ν)`, `j = 1..=order+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionSpec {
    pub order: usize,
    pub coeffs: Vec<f64>,
    /// The cutoff is one on `[0, plateau·δ]` and falls to zero at `reach·δ`.
    pub plateau: f64,
    pub reach: f64,
}

impl Default for ExtensionSpec {
    fn default() -> Self {
        Self::new(4)
    }
}

impl ExtensionSpec {
    /// Solves `Σ_j a_j (−j)^p = 1` for `p = 0..=order`.
    pub fn new(order: usize) -> Self {
        let m = order + 1;
        let a: Vec<Vec<f64>> = (0..m)
            .map(|p| (1..=m).map(|j| (-(j as f64)).powi(p as i32)).collect())
            .collect();
        let coeffs = solve_dense(a, vec![1.0; m]).expect("Vandermonde system is nonsingular");
        Self {
            order,
            coeffs,
            plateau: 1.0 / 3.0,
            reach: 2.0 / 3.0,
        }
    }

    /// Cutoff falling from one at `plateau·δ` to zero at `reach·δ`
    /// (`0 ≤ plateau < reach ≤ 1`).
    pub fn with_taper(mut self, plateau: f64, reach: f64) -> Self {
        self.reach = reach.clamp(1e-3, 1.0);
        self.plateau = plateau.clamp(0.0, self.reach - 1e-3);
        self
    }

    /// Largest residual of the derivative-matching conditions.
    pub fn residual(&self) -> f64 {
        (0..=self.order)
            .map(|p| {
                let s: f64 = self
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, a)| a * (-((j + 1) as f64)).powi(p as i32))
                    .sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn abs_sum(&self) -> f64 {
        self.coeffs.iter().map(|a| a.abs()).sum()
    }
}

/// C⁴ collar profile: 1 on `[0, δ/3]`, 0 beyond `2δ/3`.
pub fn cutoff(s: f64, delta: f64) -> f64 {
    taper(s, delta / 3.0, 2.0 * delta / 3.0)
}

/// C⁴ step from 1 at `a` to 0 at `b` (degree-9 polynomial, derivatives up
/// to order four vanish at both ends).
pub fn taper(s: f64, a: f64, b: f64) -> f64 {
    let tau = (s - a) / (b - a);
    if tau <= 0.0 {
        return 1.0;
    }
    if tau >= 1.0 {
        return 0.0;
    }
    let t5 = tau.powi(5);
    1.0 - t5 * (126.0 + tau * (-420.0 + tau * (540.0 + tau * (-315.0 + tau * 70.0))))
}

/// Extends a state on Ω to the plane box of its lattice.
pub fn extend(state: &StatePair, ext: &ExtensionSpec) -> Result<StatePair> {
    if !state.region.covers(Region::Omega) {
        return Err(Error::RegionMismatch("extension needs a state on Ω".into()));
    }
    let g = &state.grid;
    let spec = g
        .domain()
        .ok_or_else(|| Error::RegionMismatch("lattice has no domain".into()))?;
    let delta = spec.delta;
    let n = g.len();
    let mut w = vec![0.0; n];
    let mut v = vec![0.0; n];
    for k in 0..n {
        let d = g.signed_distance[k];
        if g.mask_omega[k] {
            w[k] = state.w[k];
            v[k] = state.v[k];
            continue;
        }
        let s = d.max(0.0);
        let c = taper(s, ext.plateau * delta, ext.reach * delta);
        if c == 0.0 {
            continue;
        }
        let x = g.point(k);
        let cl = spec.closest(x);
        let (mut sw, mut sv) = (0.0, 0.0);
        for (j, a) in ext.coeffs.iter().enumerate() {
            let depth = (j + 1) as f64 * s;
            let q = [cl.foot[0] - depth * cl.normal[0], cl.foot[1] - depth * cl.normal[1]];
            if depth > 0.0 && spec.closest(q).signed_distance >= 0.0 {
                return Err(Error::ExtensionTooWide(q));
            }
            let qw = interp_masked(g, &state.w, &g.mask_omega, q).ok_or(Error::ExtensionTooWide(q))?;
            let qv = interp_masked(g, &state.v, &g.mask_omega, q).ok_or(Error::ExtensionTooWide(q))?;
            sw += a * qw;
            sv += a * qv;
        }
        w[k] = c * sw;
        v[k] = c * sv;
    }
    StatePair::new(g.clone(), Region::PlaneBox, w, v)
}

/// Copies the Ω nodes of a state on a covering region.
pub fn restrict(state: &StatePair) -> Result<StatePair> {
    if !state.region.covers(Region::Omega) {
        return Err(Error::RegionMismatch("restriction needs a state covering Ω".into()));
    }
    StatePair::new(state.grid.clone(), Region::Omega, state.w.clone(), state.v.clone())
}
