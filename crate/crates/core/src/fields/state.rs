use std::sync::Arc;

use crate::domain::{GridSet, Point};
use crate::error::{Error, Result};
use crate::quad::solve_dense_checked;

/// Which lattice nodes a state is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Omega,
    OmegaDelta,
    PlaneBox,
}

impl Region {
    pub fn tag(self) -> u64 {
        match self {
            Region::Omega => 0,
            Region::OmegaDelta => 1,
            Region::PlaneBox => 2,
        }
    }

    pub fn from_tag(tag: u64) -> Option<Self> {
        match tag {
            0 => Some(Region::Omega),
            1 => Some(Region::OmegaDelta),
            2 => Some(Region::PlaneBox),
            _ => None,
        }
    }

    /// Whether a state on `self` has values on every node of `other`.
    pub fn covers(self, other: Region) -> bool {
        use Region::*;
        matches!(
            (self, other),
            (PlaneBox, _) | (OmegaDelta, OmegaDelta | Omega) | (Omega, Omega)
        )
    }

    pub fn mask(self, grid: &GridSet) -> std::borrow::Cow<'_, [bool]> {
        match self {
            Region::Omega => grid.mask_omega.as_slice().into(),
            Region::OmegaDelta => grid.mask_omega_delta.as_slice().into(),
            Region::PlaneBox => vec![true; grid.len()].into(),
        }
    }
}

/// Displacement and velocity sampled on one region of a lattice. Nodes
/// outside the region hold zero.
#[derive(Debug, Clone)]
pub struct StatePair {
    pub region: Region,
    pub grid: Arc<GridSet>,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

impl PartialEq for StatePair {
    fn eq(&self, other: &Self) -> bool {
        self.region == other.region && self.w == other.w && self.v == other.v
    }
}

impl StatePair {
    pub fn new(grid: Arc<GridSet>, region: Region, mut w: Vec<f64>, mut v: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if w.len() != n || v.len() != n {
            return Err(Error::RegionMismatch(format!(
                "field lengths {}/{} for a lattice of {n} nodes",
                w.len(),
                v.len()
            )));
        }
        let mask = region.mask(&grid);
        for k in 0..n {
            if !mask[k] {
                w[k] = 0.0;
                v[k] = 0.0;
            } else if !w[k].is_finite() {
                return Err(Error::NonFinite("w", k));
            } else if !v[k].is_finite() {
                return Err(Error::NonFinite("v", k));
            }
        }
        Ok(Self { region, grid, w, v })
    }

    pub fn zeros(grid: Arc<GridSet>, region: Region) -> Self {
        let n = grid.len();
        Self {
            region,
            grid,
            w: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Samples `f(point) -> (w, v)` on the region's nodes.
    pub fn from_fn(grid: Arc<GridSet>, region: Region, f: impl Fn(Point) -> (f64, f64)) -> Result<Self> {
        let n = grid.len();
        let mask = region.mask(&grid);
        let mut w = vec![0.0; n];
        let mut v = vec![0.0; n];
        for k in 0..n {
            if mask[k] {
                let (a, b) = f(grid.point(k));
                w[k] = a;
                v[k] = b;
            }
        }
        Self::new(grid, region, w, v)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            region: self.region,
            grid: self.grid.clone(),
            w: self.w.iter().map(|x| alpha * x).collect(),
            v: self.v.iter().map(|x| alpha * x).collect(),
        }
    }

    /// `self + alpha * other`; both must share the lattice and region.
    pub fn axpy(&self, alpha: f64, other: &StatePair) -> Self {
        debug_assert_eq!(self.w.len(), other.w.len());
        debug_assert_eq!(self.region, other.region);
        Self {
            region: self.region,
            grid: self.grid.clone(),
            w: self.w.iter().zip(&other.w).map(|(a, b)| a + alpha * b).collect(),
            v: self.v.iter().zip(&other.v).map(|(a, b)| a + alpha * b).collect(),
        }
    }

    /// Discrete sup-norm of the pair: `max(sup|w|, sup|v|)`.
    pub fn sup_norm(&self) -> f64 {
        self.w
            .iter()
            .chain(&self.v)
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn sup_w(&self) -> f64 {
        self.w.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn sup_v(&self) -> f64 {
        self.v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Velocity negated: the data of the time-reversed problem.
    pub fn time_reversed(&self) -> Self {
        Self {
            region: self.region,
            grid: self.grid.clone(),
            w: self.w.clone(),
            v: self.v.iter().map(|x| -x).collect(),
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        let mask = self.region.mask(&self.grid).into_owned();
        (0..self.grid.len()).filter(move |&k| mask[k])
    }
}

/// Interpolates `field` at `p` using only nodes where `mask` holds:
/// biquadratic Lagrange on the nearest 3×3 block when it is fully masked,
/// otherwise a local quadratic least-squares fit. Both are exact for
/// quadratics. `None` when too few masked nodes are nearby.
pub fn interp_masked(grid: &GridSet, field: &[f64], mask: &[bool], p: Point) -> Option<f64> {
    let fx = (p[0] - grid.origin[0]) / grid.h;
    let fy = (p[1] - grid.origin[1]) / grid.h;
    let ci = fx.round() as i64;
    let cj = fy.round() as i64;
    if ci >= 1 && cj >= 1 && ci + 1 < grid.nx as i64 && cj + 1 < grid.ny as i64 {
        let (ci, cj) = (ci as usize, cj as usize);
        let block = (cj - 1..=cj + 1).all(|j| (ci - 1..=ci + 1).all(|i| mask[grid.index(i, j)]));
        if block {
            let wx = lagrange3(fx - ci as f64);
            let wy = lagrange3(fy - cj as f64);
            let mut s = 0.0;
            for (b, wyb) in wy.iter().enumerate() {
                for (a, wxa) in wx.iter().enumerate() {
                    s += wxa * wyb * field[grid.index(ci + a - 1, cj + b - 1)];
                }
            }
            return Some(s);
        }
    }
    [2.5, 3.5, 4.5]
        .into_iter()
        .find_map(|r| local_quadratic_fit(grid, field, mask, p, r))
}

/// Quadratic Lagrange weights on nodes −1, 0, 1.
fn lagrange3(t: f64) -> [f64; 3] {
    [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)]
}

fn local_quadratic_fit(grid: &GridSet, field: &[f64], mask: &[bool], p: Point, radius: f64) -> Option<f64> {
    let h = grid.h;
    let fx = (p[0] - grid.origin[0]) / h;
    let fy = (p[1] - grid.origin[1]) / h;
    let r = radius.ceil() as i64;
    let ci = fx.round() as i64;
    let cj = fy.round() as i64;
    let mut rows: Vec<([f64; 6], usize)> = Vec::new();
    for dj in -r..=r {
        for di in -r..=r {
            let i = ci + di;
            let j = cj + dj;
            if i < 0 || j < 0 || i >= grid.nx as i64 || j >= grid.ny as i64 {
                continue;
            }
            let k = grid.index(i as usize, j as usize);
            if !mask[k] {
                continue;
            }
            let x = i as f64 - fx;
            let y = j as f64 - fy;
            if x * x + y * y > radius * radius {
                continue;
            }
            rows.push(([1.0, x, y, x * x, x * y, y * y], k));
        }
    }
    if rows.len() < 12 {
        return None;
    }
    let mut ata = vec![vec![0.0; 6]; 6];
    for (basis, _) in &rows {
        for a in 0..6 {
            for b in 0..6 {
                ata[a][b] += basis[a] * basis[b];
            }
        }
    }
    // Data-independent weights keep the fit exactly linear in `field`.
    let z = solve_dense_checked(ata, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1e-8)?;
    Some(
        rows.iter()
            .map(|(basis, k)| basis.iter().zip(&z).map(|(b, z)| b * z).sum::<f64>() * field[*k])
            .sum(),
    )
}
