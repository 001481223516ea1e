//! Free-space evaluation of the plane wave equation from compactly supported
//! Cauchy data: Poisson's formula, time derivatives, boundary-normal traces,
//! forward evolution and time reversal.

mod cauchy;
mod poisson;
mod profile;

use std::sync::Arc;

use rayon::prelude::*;

pub use cauchy::{gradient, CauchyData, CauchySource, FarNodes, Sample};
pub use poisson::{eval_far_multi, eval_near, far_valid, QuadratureConfig};
pub use profile::MeanProfile;

use crate::domain::{BoundaryMesh, DomainSpec, GridSet, Point};
use crate::error::{Error, Result};
use crate::fields::{Region, StatePair};

/// Smallest time for which every pair of points of the enlarged domain sits
/// at least `α` inside the cone: `t* = √(diam(Ω_δ)² + α)`.
pub fn t_star(spec: &DomainSpec, q: &QuadratureConfig) -> f64 {
    (spec.diameter_delta().powi(2) + q.far_threshold).sqrt()
}

/// Time step used to difference the Poisson integral in time.
pub fn velocity_step(t: f64) -> f64 {
    1e-3 * t.max(1.0)
}

fn far_ok(src: &dyn CauchySource, x: Point, t: f64, q: &QuadratureConfig) -> Option<bool> {
    let nodes = src.far_nodes()?;
    let bbox = src.support_bbox()?;
    Some(far_valid(nodes, bbox, x, t, q.far_threshold))
}

/// Displacement at one point, choosing the far path when it is valid.
pub fn eval_point(src: &dyn CauchySource, x: Point, t: f64, q: &QuadratureConfig) -> f64 {
    if far_ok(src, x, t, q) == Some(true) {
        eval_far_multi(src.far_nodes().unwrap(), x, [t])[0]
    } else {
        eval_near(src, x, t, q)
    }
}

/// Displacement and velocity at one point. The path is chosen at `t`; the
/// differencing stencil shares it.
pub fn eval_point_with_velocity(src: &dyn CauchySource, x: Point, t: f64, q: &QuadratureConfig) -> (f64, f64) {
    let dt = velocity_step(t).min(0.5 * t);
    let times = [t, t - dt, t + dt];
    let far = far_ok(src, x, t, q) == Some(true);
    let [w, wm, wp] = if far {
        eval_far_multi(src.far_nodes().unwrap(), x, times)
    } else {
        times.map(|s| eval_near(src, x, s, q))
    };
    (w, (wp - wm) / (2.0 * dt))
}

pub fn poisson_eval(src: &dyn CauchySource, t: f64, targets: &[Point], q: &QuadratureConfig) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(targets.par_iter().map(|&x| eval_point(src, x, t, q)).collect())
}

/// Time derivative by central differencing of the Poisson integral with
/// step `1e−3·max(1, t)` (halved toward `t/2` for small `t`).
pub fn poisson_velocity(src: &dyn CauchySource, t: f64, targets: &[Point], q: &QuadratureConfig) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(targets
        .par_iter()
        .map(|&x| eval_point_with_velocity(src, x, t, q).1)
        .collect())
}

/// `∂w/∂ν` at the mesh points by central differences along the normal with
/// step `h_nu`.
pub fn normal_trace(
    src: &dyn CauchySource,
    t: f64,
    mesh: &BoundaryMesh,
    h_nu: f64,
    q: &QuadratureConfig,
) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok((0..mesh.n)
        .into_par_iter()
        .map(|i| {
            let p = mesh.points[i];
            let nu = mesh.normals[i];
            let out = [p[0] + h_nu * nu[0], p[1] + h_nu * nu[1]];
            let inn = [p[0] - h_nu * nu[0], p[1] - h_nu * nu[1]];
            (eval_point(src, out, t, q) - eval_point(src, inn, t, q)) / (2.0 * h_nu)
        })
        .collect())
}

/// `∂w/∂ν` at the mesh points for many times `t ≥ 0`, one row per time.
/// Same differencing as [`normal_trace`], evaluated through circular-mean
/// profiles so the per-time cost is one-dimensional.
pub fn normal_trace_series(
    src: &dyn CauchySource,
    times: &[f64],
    mesh: &BoundaryMesh,
    h_nu: f64,
    q: &QuadratureConfig,
) -> Result<Vec<Vec<f64>>> {
    if let Some(&t) = times.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::NonPositiveTime(t));
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let cols: Vec<Vec<f64>> = (0..mesh.n)
        .into_par_iter()
        .map(|i| {
            let p = mesh.points[i];
            let nu = mesh.normals[i];
            let out = MeanProfile::new(src, [p[0] + h_nu * nu[0], p[1] + h_nu * nu[1]], t_max, q);
            let inn = MeanProfile::new(src, [p[0] - h_nu * nu[0], p[1] - h_nu * nu[1]], t_max, q);
            times
                .iter()
                .map(|&t| (out.eval(t) - inn.eval(t)) / (2.0 * h_nu))
                .collect()
        })
        .collect();
    Ok((0..times.len())
        .map(|j| cols.iter().map(|c| c[j]).collect())
        .collect())
}

/// Evaluates `(w, w_t)` at time `t` on the nodes of `region` of `grid`.
/// With `strict`, every node must satisfy the far-path condition.
pub fn evolve(
    src: &dyn CauchySource,
    t: f64,
    grid: &Arc<GridSet>,
    region: Region,
    q: &QuadratureConfig,
    strict: bool,
) -> Result<StatePair> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let mask = region.mask(grid);
    let nodes: Vec<usize> = (0..grid.len()).filter(|&k| mask[k]).collect();
    if strict {
        if let Some(&bad) = nodes
            .iter()
            .find(|&&k| far_ok(src, grid.point(k), t, q) != Some(true))
        {
            let reach = src
                .far_nodes()
                .map_or(f64::INFINITY, |f| f.max_distance(grid.point(bad)));
            return Err(Error::TimeTooSmall {
                t,
                t_star: (reach * reach + q.far_threshold).sqrt(),
            });
        }
    }
    let values: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|&k| eval_point_with_velocity(src, grid.point(k), t, q))
        .collect();
    let mut w = vec![0.0; grid.len()];
    let mut v = vec![0.0; grid.len()];
    for (&k, (a, b)) in nodes.iter().zip(values) {
        w[k] = a;
        v[k] = b;
    }
    StatePair::new(grid.clone(), region, w, v)
}

/// `(w^s(T2), w^s_t(T2))` on the enlarged domain via the far path.
pub fn forward_solve(data: &CauchyData, t2: f64, q: &QuadratureConfig) -> Result<StatePair> {
    let grid = data.state.grid.clone();
    evolve(data, t2, &grid, Region::OmegaDelta, q, true)
}

/// Time reversal: runs the data `(w, −v)` forward for `t2` and negates the
/// resulting velocity, giving the state that evolves into `state_t` after
/// `t2`. Evaluated on `region` of `grid`.
pub fn backward_to_zero(
    state_t: &StatePair,
    t2: f64,
    grid: &Arc<GridSet>,
    region: Region,
    q: &QuadratureConfig,
) -> Result<StatePair> {
    let data = CauchyData::unrestricted(state_t.time_reversed());
    if data.is_zero() {
        return Ok(StatePair::zeros(grid.clone(), region));
    }
    let s = evolve(&data, t2, grid, region, q, false)?;
    Ok(s.time_reversed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grids, make_domain, Shape};

    fn const_box(half: f64, h: f64, w0: f64, w1: f64) -> CauchyData {
        let g = GridSet::plane_box([0.0, 0.0], half, h, None);
        let s = StatePair::from_fn(g, Region::PlaneBox, |p| {
            let inside = p[0].hypot(p[1]) <= 2.0;
            if inside {
                (w0, w1)
            } else {
                (0.0, 0.0)
            }
        })
        .unwrap();
        CauchyData::unrestricted(s)
    }

    #[test]
    fn constant_displacement_closed_form() {
        let d = const_box(2.2, 0.05, 1.0, 0.0);
        let w = poisson_eval(&d, 1.0, &[[0.0, 0.0]], &QuadratureConfig::default()).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-6, "{}", w[0]);
        let v = poisson_velocity(&d, 1.0, &[[0.0, 0.0]], &QuadratureConfig::default()).unwrap();
        assert!(v[0].abs() < 1e-5, "{}", v[0]);
    }

    #[test]
    fn constant_velocity_closed_form() {
        let c = 0.7;
        let d = const_box(2.2, 0.05, 0.0, c);
        for t in [0.3, 1.0, 1.5] {
            let w = poisson_eval(&d, t, &[[0.1, -0.2]], &QuadratureConfig::default()).unwrap();
            assert!((w[0] - c * t).abs() < 1e-6, "{t}: {}", w[0]);
            let v = poisson_velocity(&d, t, &[[0.1, -0.2]], &QuadratureConfig::default()).unwrap();
            assert!((v[0] - c).abs() < 1e-5);
        }
        assert!(matches!(
            poisson_eval(&d, 0.0, &[[0.0, 0.0]], &QuadratureConfig::default()),
            Err(Error::NonPositiveTime(_))
        ));
    }

    #[test]
    fn finite_speed_gives_zero_trace() {
        let spec = make_domain(
            Shape::Disk {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            0.25,
            0.05,
        )
        .unwrap();
        let g = build_grids(&spec);
        let s = StatePair::from_fn(g, Region::Omega, |p| {
            let r2 = (p[0] * p[0] + p[1] * p[1]) / 0.09;
            (if r2 < 1.0 { (1.0 - r2).powi(5) } else { 0.0 }, 0.0)
        })
        .unwrap();
        let d = CauchyData::new(s).unwrap();
        let mesh = crate::domain::boundary_mesh(&spec, 32).unwrap();
        // sampled support reaches radius 0.45; inner stencil points sit at 0.975
        let tr = normal_trace(&d, 0.45, &mesh, 0.025, &QuadratureConfig::default()).unwrap();
        assert!(tr.iter().all(|u| u.abs() < 1e-8));
    }

    #[test]
    fn zero_data_evolves_to_zero() {
        let spec = make_domain(
            Shape::Disk {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            0.25,
            0.05,
        )
        .unwrap();
        let g = build_grids(&spec);
        let d = CauchyData::new(StatePair::zeros(g.clone(), Region::PlaneBox)).unwrap();
        let s = forward_solve(&d, 3.0, &QuadratureConfig::default()).unwrap();
        assert_eq!(s.sup_norm(), 0.0);
        let b = backward_to_zero(&s, 3.0, &g, Region::Omega, &QuadratureConfig::default()).unwrap();
        assert_eq!(b.sup_norm(), 0.0);
    }
}
