//! Geometry of the membrane: the smooth domain, its delta-enlargement, the
//! Cartesian sampling lattice and an arc-length boundary mesh.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad::GaussLegendre;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disk { center: Point, radius: f64 },
    /// Axis-aligned ellipse with semi-axes `a` (along x) and `b` (along y).
    Ellipse { center: Point, a: f64, b: f64 },
}

impl Shape {
    pub fn center(&self) -> Point {
        match *self {
            Shape::Disk { center, .. } | Shape::Ellipse { center, .. } => center,
        }
    }

    pub fn semi_axes(&self) -> (f64, f64) {
        match *self {
            Shape::Disk { radius, .. } => (radius, radius),
            Shape::Ellipse { a, b, .. } => (a, b),
        }
    }
}

/// Closest-point data for a query point.
#[derive(Debug, Clone, Copy)]
pub struct Closest {
    pub foot: Point,
    /// Unit outward normal at the foot point.
    pub normal: Point,
    /// Negative inside the domain.
    pub signed_distance: f64,
    /// Ellipse parameter of the foot point.
    pub param: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub shape: Shape,
    pub delta: f64,
    pub h: f64,
    /// `[xmin, xmax, ymin, ymax]` of the enlarged domain.
    pub bbox: [f64; 4],
}

pub fn make_domain(shape: Shape, delta: f64, h: f64) -> Result<DomainSpec> {
    let (a, b) = shape.semi_axes();
    for (name, v) in [("semi-axis", a), ("semi-axis", b), ("delta", delta), ("h", h)] {
        if !(v > 0.0) {
            return Err(Error::NonPositiveParameter(name, v));
        }
    }
    if h > delta / 4.0 + 1e-15 {
        return Err(Error::GridTooCoarse {
            h,
            limit: delta / 4.0,
        });
    }
    let c = shape.center();
    let bbox = [c[0] - a - delta, c[0] + a + delta, c[1] - b - delta, c[1] + b + delta];
    Ok(DomainSpec {
        shape,
        delta,
        h,
        bbox,
    })
}

impl DomainSpec {
    pub fn contains(&self, p: Point) -> bool {
        self.closest(p).signed_distance < 0.0
    }

    /// Diameter of the enlarged domain.
    pub fn diameter_delta(&self) -> f64 {
        let (a, b) = self.shape.semi_axes();
        2.0 * (a.max(b) + self.delta)
    }

    pub fn boundary_point(&self, param: f64) -> (Point, Point) {
        let c = self.shape.center();
        let (a, b) = self.shape.semi_axes();
        let (s, co) = param.sin_cos();
        let p = [c[0] + a * co, c[1] + b * s];
        let n = [co / a, s / b];
        let len = n[0].hypot(n[1]);
        (p, [n[0] / len, n[1] / len])
    }

    /// Boundary speed |dp/dparam|.
    fn speed(&self, param: f64) -> f64 {
        let (a, b) = self.shape.semi_axes();
        let (s, c) = param.sin_cos();
        (a * s).hypot(b * c)
    }

    /// Arc length from parameter 0 to `param` (any real; not wrapped).
    pub fn arc_length(&self, param: f64) -> f64 {
        match self.shape {
            Shape::Disk { radius, .. } => radius * param,
            Shape::Ellipse { .. } => {
                let gl = GaussLegendre::new(16);
                let panels = ((param.abs() / (PI / 16.0)).ceil() as usize).max(1);
                gl.integrate(0.0, param, panels, |t| self.speed(t))
            }
        }
    }

    pub fn perimeter(&self) -> f64 {
        self.arc_length(2.0 * PI)
    }

    /// Parameter whose arc-length coordinate equals `s` (in [0, |Γ|]).
    pub fn param_at_arc(&self, s: f64) -> f64 {
        match self.shape {
            Shape::Disk { radius, .. } => s / radius,
            Shape::Ellipse { .. } => {
                let total = self.perimeter();
                let mut t = 2.0 * PI * s / total;
                for _ in 0..50 {
                    let f = self.arc_length(t) - s;
                    let dt = f / self.speed(t);
                    t -= dt;
                    if dt.abs() < 1e-14 {
                        break;
                    }
                }
                t
            }
        }
    }

    pub fn closest(&self, p: Point) -> Closest {
        match self.shape {
            Shape::Disk { center, radius } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                let r = d[0].hypot(d[1]);
                let (normal, param) = if r > 0.0 {
                    ([d[0] / r, d[1] / r], d[1].atan2(d[0]))
                } else {
                    ([1.0, 0.0], 0.0)
                };
                Closest {
                    foot: [center[0] + radius * normal[0], center[1] + radius * normal[1]],
                    normal,
                    signed_distance: r - radius,
                    param,
                }
            }
            Shape::Ellipse { center, a, b } => {
                let x = p[0] - center[0];
                let y = p[1] - center[1];
                let param = ellipse_foot_param(a, b, x, y);
                let (foot, normal) = self.boundary_point(param);
                let dist = (p[0] - foot[0]).hypot(p[1] - foot[1]);
                let inside = (x / a).powi(2) + (y / b).powi(2) < 1.0;
                Closest {
                    foot,
                    normal,
                    signed_distance: if inside { -dist } else { dist },
                    param,
                }
            }
        }
    }
}

/// Parameter of the closest ellipse point: coarse scan, then Newton on the
/// stationarity condition; bisection along the ray to the center when Newton
/// does not converge.
fn ellipse_foot_param(a: f64, b: f64, x: f64, y: f64) -> f64 {
    let dist2 = |t: f64| (x - a * t.cos()).powi(2) + (y - b * t.sin()).powi(2);
    let mut best = 0.0;
    let mut best_d = f64::INFINITY;
    for k in 0..64 {
        let t = 2.0 * PI * k as f64 / 64.0;
        let d = dist2(t);
        if d < best_d {
            best_d = d;
            best = t;
        }
    }
    let mut t = best;
    for _ in 0..50 {
        let (s, c) = t.sin_cos();
        let f = (a * a - b * b) * s * c - x * a * s + y * b * c;
        let df = (a * a - b * b) * (c * c - s * s) - x * a * c - y * b * s;
        if df.abs() < 1e-300 {
            break;
        }
        let dt = f / df;
        t -= dt;
        if dt.abs() < 1e-12 {
            return t;
        }
    }
    if dist2(t) <= best_d {
        return t;
    }
    // Fallback: where the ray from the center through (x, y) meets the curve.
    let ang = y.atan2(x);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let g = |r: f64| (r * ang.cos() / a).powi(2) + (r * ang.sin() / b).powi(2) - 1.0;
    let mut far = a.max(b);
    while g(far) < 0.0 {
        far *= 2.0;
    }
    hi *= far;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    (r * ang.sin() / b).atan2(r * ang.cos() / a)
}

/// Uniform Cartesian lattice over the bounding box of the enlarged domain.
#[derive(Debug, Clone)]
pub struct GridSet {
    pub origin: Point,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub mask_omega: Vec<bool>,
    pub mask_omega_delta: Vec<bool>,
    pub signed_distance: Vec<f64>,
    pub domain: Option<DomainSpec>,
}

pub fn build_grids(spec: &DomainSpec) -> Arc<GridSet> {
    let [x0, x1, y0, y1] = spec.bbox;
    let nx = ((x1 - x0) / spec.h).round() as usize + 1;
    let ny = ((y1 - y0) / spec.h).round() as usize + 1;
    Arc::new(GridSet::new([x0, y0], spec.h, nx, ny, Some(spec.clone())))
}

impl GridSet {
    /// Lattice with `nx × ny` nodes starting at `origin`. Without a domain,
    /// both masks are empty and the signed distance is +inf.
    pub fn new(origin: Point, h: f64, nx: usize, ny: usize, domain: Option<DomainSpec>) -> Self {
        let n = nx * ny;
        let mut signed_distance = vec![f64::INFINITY; n];
        if let Some(spec) = &domain {
            for j in 0..ny {
                for i in 0..nx {
                    let p = [origin[0] + i as f64 * h, origin[1] + j as f64 * h];
                    signed_distance[j * nx + i] = spec.closest(p).signed_distance;
                }
            }
        }
        let delta = domain.as_ref().map_or(0.0, |d| d.delta);
        let mask_omega = signed_distance.iter().map(|&d| d < 0.0).collect();
        let mask_omega_delta = signed_distance.iter().map(|&d| d < delta).collect();
        Self {
            origin,
            h,
            nx,
            ny,
            mask_omega,
            mask_omega_delta,
            signed_distance,
            domain,
        }
    }

    /// Square plane box of half-width `half` centered at `center`.
    pub fn plane_box(center: Point, half: f64, h: f64, domain: Option<DomainSpec>) -> Arc<Self> {
        let n = (2.0 * half / h).ceil() as usize + 1;
        let w = (n - 1) as f64 * h;
        Arc::new(Self::new(
            [center[0] - 0.5 * w, center[1] - 0.5 * w],
            h,
            n,
            n,
            domain,
        ))
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn point(&self, k: usize) -> Point {
        let i = k % self.nx;
        let j = k / self.nx;
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    pub fn domain(&self) -> Option<&DomainSpec> {
        self.domain.as_ref()
    }

    /// Bilinear interpolation of a full-lattice field; zero outside the box.
    pub fn bilinear(&self, field: &[f64], p: Point) -> f64 {
        let fx = (p[0] - self.origin[0]) / self.h;
        let fy = (p[1] - self.origin[1]) / self.h;
        if fx < 0.0 || fy < 0.0 {
            return 0.0;
        }
        let i = fx.floor() as usize;
        let j = fy.floor() as usize;
        if i + 1 >= self.nx || j + 1 >= self.ny {
            if i + 1 == self.nx && fx == i as f64 && j < self.ny {
                // exactly on the last column
                let ty = fy - j as f64;
                let k = self.index(i, j);
                let up = if j + 1 < self.ny { field[k + self.nx] } else { 0.0 };
                return field[k] * (1.0 - ty) + up * ty;
            }
            return 0.0;
        }
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let k = self.index(i, j);
        let f00 = field[k];
        let f10 = field[k + 1];
        let f01 = field[k + self.nx];
        let f11 = field[k + self.nx + 1];
        (f00 * (1.0 - tx) + f10 * tx) * (1.0 - ty) + (f01 * (1.0 - tx) + f11 * tx) * ty
    }

    /// Lower-left cell corner indices of `p`, if the whole cell is in the box.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let fx = (p[0] - self.origin[0]) / self.h;
        let fy = (p[1] - self.origin[1]) / self.h;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let i = fx.floor() as usize;
        let j = fy.floor() as usize;
        (i + 1 < self.nx && j + 1 < self.ny).then_some((i, j))
    }
}

/// Arc-length-uniform boundary samples with outward normals.
#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    pub n: usize,
    pub points: Vec<Point>,
    pub normals: Vec<Point>,
    pub arc_weights: Vec<f64>,
    pub total_length: f64,
    /// Arc-length coordinate of each point, starting at 0.
    pub arc_coords: Vec<f64>,
    /// Curve parameter of each point.
    pub params: Vec<f64>,
}

pub fn boundary_mesh(spec: &DomainSpec, n: usize) -> Result<Arc<BoundaryMesh>> {
    if n < 16 {
        return Err(Error::TooFewSamples(n));
    }
    Ok(Arc::new(BoundaryMesh::build(spec, n)))
}

impl BoundaryMesh {
    /// Unchecked constructor; `boundary_mesh` enforces the sample minimum.
    pub fn build(spec: &DomainSpec, n: usize) -> Self {
        let total = spec.perimeter();
        let ds = total / n as f64;
        let mut points = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut arc_coords = Vec::with_capacity(n);
        let mut params = Vec::with_capacity(n);
        for i in 0..n {
            let s = i as f64 * ds;
            let t = spec.param_at_arc(s);
            let (p, nu) = spec.boundary_point(t);
            points.push(p);
            normals.push(nu);
            arc_coords.push(s);
            params.push(t);
        }
        Self {
            n,
            points,
            normals,
            arc_weights: vec![ds; n],
            total_length: total,
            arc_coords,
            params,
        }
    }

    /// Indices and weights for periodic linear interpolation at arc coordinate `s`.
    pub fn arc_stencil(&self, s: f64) -> (usize, usize, f64) {
        let ds = self.total_length / self.n as f64;
        let u = (s / ds).rem_euclid(self.n as f64);
        let i = (u.floor() as usize).min(self.n - 1);
        let t = u - i as f64;
        (i, (i + 1) % self.n, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_disk(delta: f64, h: f64) -> DomainSpec {
        make_domain(
            Shape::Disk {
                center: [0.0, 0.0],
                radius: 1.0,
            },
            delta,
            h,
        )
        .unwrap()
    }

    #[test]
    fn disk_bbox() {
        let d = unit_disk(0.25, 0.05);
        assert_eq!(d.bbox, [-1.25, 1.25, -1.25, 1.25]);
    }

    #[test]
    fn ellipse_bbox() {
        let d = make_domain(
            Shape::Ellipse {
                center: [0.0, 0.0],
                a: 1.0,
                b: 0.5,
            },
            0.2,
            0.05,
        )
        .unwrap();
        let want = [-1.2, 1.2, -0.7, 0.7];
        for (x, y) in d.bbox.iter().zip(want) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let disk = Shape::Disk {
            center: [0.0, 0.0],
            radius: 1.0,
        };
        assert!(matches!(
            make_domain(disk, 0.0, 0.05),
            Err(Error::NonPositiveParameter(..))
        ));
        assert!(matches!(
            make_domain(disk, 0.25, 0.1),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn grid_center_and_collar() {
        let d = unit_disk(0.25, 0.05);
        let g = build_grids(&d);
        assert_eq!(g.len(), 51 * 51);
        let c = g.index(25, 25);
        assert_eq!(g.point(c), [0.0, 0.0]);
        assert!(g.mask_omega[c]);
        assert!((g.signed_distance[c] + 1.0).abs() < 1e-15);
        // (1.3, 0) is outside the box at this size; check against a wider grid.
        let wide = GridSet::new([-1.5, -1.5], 0.05, 61, 61, Some(d.clone()));
        let k = wide.index(56, 30);
        assert!((wide.point(k)[0] - 1.3).abs() < 1e-12);
        assert!(!wide.mask_omega_delta[k]);
    }

    #[test]
    fn disk_area_by_cell_counting() {
        let d = unit_disk(0.25, 0.01);
        let g = build_grids(&d);
        let area = g.mask_omega.iter().filter(|&&m| m).count() as f64 * 0.01 * 0.01;
        assert!((area - PI).abs() / PI < 0.01, "area {area}");
    }

    #[test]
    fn masks_nest() {
        let d = make_domain(
            Shape::Ellipse {
                center: [0.1, -0.2],
                a: 1.0,
                b: 0.6,
            },
            0.2,
            0.05,
        )
        .unwrap();
        let g = build_grids(&d);
        for k in 0..g.len() {
            assert!(!g.mask_omega[k] || g.mask_omega_delta[k]);
            assert_eq!(g.mask_omega[k], g.signed_distance[k] < 0.0);
        }
    }

    #[test]
    fn four_point_disk_mesh() {
        let d = unit_disk(0.25, 0.05);
        let m = BoundaryMesh::build(&d, 4);
        let want = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (p, w) in m.points.iter().zip(want) {
            assert!((p[0] - w[0]).abs() < 1e-12 && (p[1] - w[1]).abs() < 1e-12);
        }
        assert!((m.normals[0][0] - 1.0).abs() < 1e-15);
        assert!(matches!(boundary_mesh(&d, 4), Err(Error::TooFewSamples(4))));
    }

    #[test]
    fn disk_mesh_perimeter_and_weights() {
        let d = unit_disk(0.25, 0.05);
        let m = boundary_mesh(&d, 256).unwrap();
        assert!((m.total_length - 2.0 * PI).abs() < 1e-4);
        for w in &m.arc_weights {
            assert!((w - 2.0 * PI / 256.0).abs() < 1e-14);
        }
        for (p, nu) in m.points.iter().zip(&m.normals) {
            assert!((nu[0].hypot(nu[1]) - 1.0).abs() < 1e-12);
            assert!((p[0] - nu[0]).abs() < 1e-12 && (p[1] - nu[1]).abs() < 1e-12);
        }
        // counterclockwise
        let cross = m.points[0][0] * m.points[1][1] - m.points[0][1] * m.points[1][0];
        assert!(cross > 0.0);
    }

    #[test]
    fn ellipse_closest_point_is_orthogonal() {
        let d = make_domain(
            Shape::Ellipse {
                center: [0.0, 0.0],
                a: 1.0,
                b: 0.5,
            },
            0.2,
            0.05,
        )
        .unwrap();
        for p in [[1.1, 0.3], [0.2, 0.1], [-0.4, -0.6], [0.0, 0.45]] {
            let c = d.closest(p);
            let r = [p[0] - c.foot[0], p[1] - c.foot[1]];
            let cross = r[0] * c.normal[1] - r[1] * c.normal[0];
            assert!(cross.abs() < 1e-9, "{p:?}");
            assert!(((c.foot[0] / 1.0).powi(2) + (c.foot[1] / 0.5).powi(2) - 1.0).abs() < 1e-12);
        }
    }
}
