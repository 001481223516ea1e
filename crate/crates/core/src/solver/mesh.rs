//! Body-fitted triangulation of the disk (and its affine image, the
//! ellipse) with P1 stiffness and lumped mass.

use std::f64::consts::PI;

use crate::domain::{DomainSpec, Point};

/// Symmetric stiffness with zero row sums, stored as off-diagonal couplings
/// `c_ij = −K_ij`. Products are formed from differences `x_i − x_j`, which
/// avoids the cancellation of `K_ii·x_i + Σ K_ij·x_j` on nearly constant
/// fields.
#[derive(Debug, Clone)]
pub struct Csr {
    pub row_start: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    /// Upper-triangle couplings `(i, j, c_ij)` with `i < j`.
    edges: Vec<(u32, u32, f64)>,
}

impl Csr {
    /// `out = K x`.
    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let xi = x[i];
            let mut s = 0.0;
            for k in self.row_start[i]..self.row_start[i + 1] {
                s += self.vals[k] * (xi - x[self.cols[k]]);
            }
            *o = s;
        }
    }

    /// `xᵀ K y = Σ_{i<j} c_ij (x_i − x_j)(y_i − y_j)`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let terms = self.edges.iter().map(|&(i, j, c)| {
            let (i, j) = (i as usize, j as usize);
            c * (x[i] - x[j]) * (y[i] - y[j])
        });
        crate::quad::compensated_sum(terms)
    }

    fn from_rows(row_start: Vec<usize>, cols: Vec<usize>, vals: Vec<f64>) -> Self {
        let mut edges = Vec::new();
        for i in 0..row_start.len() - 1 {
            for k in row_start[i]..row_start[i + 1] {
                if cols[k] > i {
                    edges.push((i as u32, cols[k] as u32, vals[k]));
                }
            }
        }
        Self {
            row_start,
            cols,
            vals,
            edges,
        }
    }

    /// Diagonal entry `K_ii = Σ_j c_ij`.
    pub fn diagonal(&self, i: usize) -> f64 {
        self.vals[self.row_start[i]..self.row_start[i + 1]].iter().sum()
    }
}

/// Rings of nodes at reference radii `i/N` (ring 0 is the centre). Ring
/// counts start at `n_inner` and double whenever the arc spacing on the next
/// ring would exceed 1.5 radial spacings.
#[derive(Debug, Clone)]
pub struct FeMesh {
    pub nodes: Vec<Point>,
    pub tris: Vec<[usize; 3]>,
    /// Lumped (row-sum) mass.
    pub mass: Vec<f64>,
    pub stiffness: Csr,
    /// Outer-ring node ids in increasing curve parameter.
    pub boundary: Vec<usize>,
    /// Curve parameter of each boundary node.
    pub boundary_param: Vec<f64>,
    /// Lumped boundary length of each boundary node.
    pub boundary_len: Vec<f64>,
    /// Shortest edge.
    pub h_min: f64,
    pub n_rings: usize,
    center: Point,
    axes: (f64, f64),
    locator: Locator,
}

impl FeMesh {
    pub fn build(spec: &DomainSpec, n_rings: usize, n_inner: usize) -> Self {
        let center = spec.shape.center();
        let axes = spec.shape.semi_axes();
        let to_phys = |rho: f64, th: f64| [center[0] + axes.0 * rho * th.cos(), center[1] + axes.1 * rho * th.sin()];
        let mut nodes = vec![center];
        let mut rings: Vec<(usize, usize)> = vec![(0, 1)];
        let mut count = n_inner;
        for i in 1..=n_rings {
            if i > 1 && 2.0 * PI * i as f64 / count as f64 > 1.5 {
                count *= 2;
            }
            let start = nodes.len();
            let rho = i as f64 / n_rings as f64;
            for j in 0..count {
                nodes.push(to_phys(rho, 2.0 * PI * j as f64 / count as f64));
            }
            rings.push((start, count));
        }
        let mut tris = Vec::new();
        let (s1, n1) = rings[1];
        for j in 0..n1 {
            tris.push([0, s1 + j, s1 + (j + 1) % n1]);
        }
        for i in 1..n_rings {
            let (sa, na) = rings[i];
            let (sb, nb) = rings[i + 1];
            let a = |j: usize| sa + j % na;
            let b = |j: usize| sb + j % nb;
            if nb == na {
                for j in 0..na {
                    tris.push([a(j), b(j), b(j + 1)]);
                    tris.push([a(j), b(j + 1), a(j + 1)]);
                }
            } else {
                for j in 0..na {
                    tris.push([a(j), b(2 * j), b(2 * j + 1)]);
                    tris.push([a(j), b(2 * j + 1), a(j + 1)]);
                    tris.push([a(j + 1), b(2 * j + 1), b(2 * j + 2)]);
                }
            }
        }
        let n = nodes.len();
        let mut mass = vec![0.0; n];
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut h_min = f64::INFINITY;
        for t in &tris {
            let p = t.map(|k| nodes[k]);
            let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
            debug_assert!(area > 0.0);
            let bx: [f64; 3] = std::array::from_fn(|a| p[(a + 1) % 3][1] - p[(a + 2) % 3][1]);
            let cy: [f64; 3] = std::array::from_fn(|a| p[(a + 2) % 3][0] - p[(a + 1) % 3][0]);
            for a in 0..3 {
                mass[t[a]] += area / 3.0;
                let e = (p[(a + 1) % 3][0] - p[a][0]).hypot(p[(a + 1) % 3][1] - p[a][1]);
                h_min = h_min.min(e);
                for b in 0..3 {
                    if a != b {
                        rows[t[a]].push((t[b], (bx[a] * bx[b] + cy[a] * cy[b]) / (4.0 * area)));
                    }
                }
            }
        }
        let mut row_start = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(r.len());
            for (c, v) in r {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged {
                cols.push(c);
                vals.push(-v);
            }
            row_start.push(cols.len());
        }
        let (sb, nb) = rings[n_rings];
        let boundary: Vec<usize> = (sb..sb + nb).collect();
        let boundary_param: Vec<f64> = (0..nb).map(|j| 2.0 * PI * j as f64 / nb as f64).collect();
        let boundary_len: Vec<f64> = (0..nb)
            .map(|j| {
                let p = nodes[boundary[j]];
                let l = nodes[boundary[(j + nb - 1) % nb]];
                let r = nodes[boundary[(j + 1) % nb]];
                0.5 * ((p[0] - l[0]).hypot(p[1] - l[1]) + (p[0] - r[0]).hypot(p[1] - r[1]))
            })
            .collect();
        let locator = Locator::build(&nodes, &tris);
        Self {
            nodes,
            tris,
            mass,
            stiffness: Csr::from_rows(row_start, cols, vals),
            boundary,
            boundary_param,
            boundary_len,
            h_min,
            n_rings,
            center,
            axes,
            locator,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest eigenvalue of `M⁻¹K` by power iteration.
    pub fn lambda_max(&self) -> f64 {
        let n = self.len();
        let mut x: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } + 0.01 * (i % 7) as f64).collect();
        let mut y = vec![0.0; n];
        let mut lam = 0.0;
        for _ in 0..60 {
            self.stiffness.mul(&x, &mut y);
            for i in 0..n {
                y[i] /= self.mass[i];
            }
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            lam = norm / xn;
            for i in 0..n {
                x[i] = y[i] / norm;
            }
        }
        // power iteration approaches from below
        1.02 * lam
    }

    /// Value of the P1 interpolant of `field` at `p` (nearest element's
    /// linear extension just outside the inscribed polygon).
    pub fn interpolate(&self, field: &[f64], p: Point) -> f64 {
        let (t, bary) = self.locator.locate(&self.nodes, &self.tris, p);
        let tri = self.tris[t];
        bary[0] * field[tri[0]] + bary[1] * field[tri[1]] + bary[2] * field[tri[2]]
    }

    /// Periodic linear interpolation of boundary-node values at curve
    /// parameter `param`.
    pub fn boundary_value(&self, values: &[f64], param: f64) -> f64 {
        let nb = self.boundary.len();
        let u = (param / (2.0 * PI) * nb as f64).rem_euclid(nb as f64);
        let j = (u.floor() as usize).min(nb - 1);
        let s = u - j as f64;
        (1.0 - s) * values[j] + s * values[(j + 1) % nb]
    }

    /// Reference polar coordinates of a physical point.
    pub fn reference_polar(&self, p: Point) -> (f64, f64) {
        let x = (p[0] - self.center[0]) / self.axes.0;
        let y = (p[1] - self.center[1]) / self.axes.1;
        (x.hypot(y), y.atan2(x))
    }
}

/// Uniform bucket grid over element bounding boxes.
#[derive(Debug, Clone)]
struct Locator {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn build(nodes: &[Point], tris: &[[usize; 3]]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        let cell = (2.0 * area / tris.len() as f64).sqrt().max(1e-12) * 2.0;
        let nx = ((hi[0] - lo[0]) / cell).ceil() as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (k, t) in tris.iter().enumerate() {
            let p = t.map(|i| nodes[i]);
            let bx0 = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
            let bx1 = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
            let by0 = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
            let by1 = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
            let i0 = ((bx0 - lo[0]) / cell).floor() as usize;
            let i1 = (((bx1 - lo[0]) / cell).floor() as usize).min(nx - 1);
            let j0 = ((by0 - lo[1]) / cell).floor() as usize;
            let j1 = (((by1 - lo[1]) / cell).floor() as usize).min(ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(k);
                }
            }
        }
        Self {
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn bary(p: Point, t: [Point; 3]) -> [f64; 3] {
        let det = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
        let l1 = ((p[0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (p[1] - t[0][1])) / det;
        let l2 = ((t[1][0] - t[0][0]) * (p[1] - t[0][1]) - (p[0] - t[0][0]) * (t[1][1] - t[0][1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Element containing `p`, or the best candidate nearby, with barycentric
    /// coordinates.
    fn locate(&self, nodes: &[Point], tris: &[[usize; 3]], p: Point) -> (usize, [f64; 3]) {
        let fi = ((p[0] - self.origin[0]) / self.cell).floor();
        let fj = ((p[1] - self.origin[1]) / self.cell).floor();
        let ci = (fi.max(0.0) as usize).min(self.nx - 1);
        let cj = (fj.max(0.0) as usize).min(self.ny - 1);
        let mut best = (0usize, [f64::NEG_INFINITY; 3]);
        let mut score = f64::NEG_INFINITY;
        for radius in 0..self.nx.max(self.ny) {
            for j in cj.saturating_sub(radius)..=(cj + radius).min(self.ny - 1) {
                for i in ci.saturating_sub(radius)..=(ci + radius).min(self.nx - 1) {
                    if radius > 0 && i.abs_diff(ci) < radius && j.abs_diff(cj) < radius {
                        continue;
                    }
                    for &k in &self.buckets[j * self.nx + i] {
                        let b = Self::bary(p, tris[k].map(|n| nodes[n]));
                        let m = b[0].min(b[1]).min(b[2]);
                        if m > score {
                            score = m;
                            best = (k, b);
                        }
                    }
                }
            }
            if score >= -1e-12 || (score > f64::NEG_INFINITY && radius >= 1) {
                break;
            }
        }
        best
    }
}
