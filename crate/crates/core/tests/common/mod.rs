#![allow(dead_code)]

use std::sync::Arc;

use restcontrol::domain::{build_grids, make_domain, DomainSpec, GridSet, Point, Shape};
use restcontrol::fields::{Region, StatePair};

pub fn unit_disk(h: f64) -> DomainSpec {
    make_domain(
        Shape::Disk {
            center: [0.0, 0.0],
            radius: 1.0,
        },
        0.25,
        h,
    )
    .unwrap()
}

/// `amp·(1 − (r/rho)²)^5` for `r < rho`: a C⁴ radial bump.
pub fn bump(p: Point, c: Point, rho: f64, amp: f64) -> f64 {
    let r2 = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (rho * rho);
    if r2 < 1.0 {
        amp * (1.0 - r2).powi(5)
    } else {
        0.0
    }
}

pub fn bump_state(grid: Arc<GridSet>, region: Region, rho: f64, amp_w: f64, amp_v: f64) -> StatePair {
    StatePair::from_fn(grid, region, |p| {
        let b = bump(p, [0.0, 0.0], rho, 1.0);
        (amp_w * b, amp_v * b)
    })
    .unwrap()
}

pub fn disk_grid(h: f64) -> Arc<GridSet> {
    build_grids(&unit_disk(h))
}

/// Free-space reference: leapfrog with the 5-point Laplacian on a square
/// `[-half, half]²` with spacing `h`, zero Dirichlet edge (kept causally
/// invisible by the caller). Returns `(w, w_t)` at time `t` as closures'
/// lattice values with bilinear lookup.
pub struct Fdtd {
    pub grid: Arc<GridSet>,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

impl Fdtd {
    pub fn run(half: f64, h: f64, t: f64, init: impl Fn(Point) -> (f64, f64)) -> Self {
        let grid = GridSet::plane_box([0.0, 0.0], half, h, None);
        let (nx, ny) = (grid.nx, grid.ny);
        let n = grid.len();
        let steps = (t / (0.25 * h)).ceil() as usize;
        let dt = t / steps as f64;
        let lap = |u: &[f64], out: &mut [f64]| {
            for j in 1..ny - 1 {
                for i in 1..nx - 1 {
                    let k = j * nx + i;
                    out[k] = (u[k - 1] + u[k + 1] + u[k - nx] + u[k + nx] - 4.0 * u[k]) / (h * h);
                }
            }
        };
        let mut w0 = vec![0.0; n];
        let mut w1 = vec![0.0; n];
        for k in 0..n {
            let (a, b) = init(grid.point(k));
            w0[k] = a;
            w1[k] = b;
        }
        let mut l = vec![0.0; n];
        lap(&w0, &mut l);
        // Taylor start to third order: w(dt) = w0 + dt w1 + dt²/2 Δw0 + dt³/6 Δw1.
        let mut l1 = vec![0.0; n];
        lap(&w1, &mut l1);
        let mut prev = w0.clone();
        let mut cur: Vec<f64> = (0..n)
            .map(|k| w0[k] + dt * w1[k] + 0.5 * dt * dt * l[k] + dt * dt * dt / 6.0 * l1[k])
            .collect();
        let mut hist_prev = prev.clone();
        for _ in 1..steps {
            lap(&cur, &mut l);
            let next: Vec<f64> = (0..n).map(|k| 2.0 * cur[k] - prev[k] + dt * dt * l[k]).collect();
            hist_prev = std::mem::replace(&mut prev, std::mem::replace(&mut cur, next));
        }
        // cur = w(t), prev = w(t − dt); one more step for a centred velocity.
        lap(&cur, &mut l);
        let next: Vec<f64> = (0..n).map(|k| 2.0 * cur[k] - prev[k] + dt * dt * l[k]).collect();
        let v = (0..n).map(|k| (next[k] - prev[k]) / (2.0 * dt)).collect();
        let _ = hist_prev;
        Self { grid, w: cur, v }
    }

    pub fn w_at(&self, p: Point) -> f64 {
        self.grid.bilinear(&self.w, p)
    }

    pub fn v_at(&self, p: Point) -> f64 {
        self.grid.bilinear(&self.v, p)
    }
}
