use crate::domain::{GridSet, Point};
use crate::error::{Error, Result};
use crate::fields::StatePair;

/// Integrand data at one point: displacement, its gradient, velocity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sample {
    pub w0: f64,
    pub gx: f64,
    pub gy: f64,
    pub w1: f64,
}

/// Anything the Poisson integral can be evaluated against.
pub trait CauchySource: Sync {
    fn sample(&self, y: Point) -> Sample;
    /// `[xmin, xmax, ymin, ymax]` outside of which every sample vanishes.
    fn support_bbox(&self) -> Option<[f64; 4]>;
    /// Sampling length scale; quadrature density follows it when present.
    fn resolution(&self) -> Option<f64>;
    /// Support nodes for the nonsingular (far) path, when available.
    fn far_nodes(&self) -> Option<&FarNodes> {
        None
    }
}

/// Support nodes in the layout the far-path sum wants: `c0 = w0 + y·∇w0`.
#[derive(Debug, Clone, Default)]
pub struct FarNodes {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub c0: Vec<f64>,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub w1: Vec<f64>,
    /// Cell area.
    pub weight: f64,
}

impl FarNodes {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Largest distance from `p` to a support node.
    pub fn max_distance(&self, p: Point) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(x, y)| (x - p[0]).powi(2) + (y - p[1]).powi(2))
            .fold(0.0, f64::max)
            .sqrt()
    }
}

/// Compactly supported Cauchy data on a lattice, with the precomputed
/// central-difference gradient of the displacement.
#[derive(Debug, Clone)]
pub struct CauchyData {
    pub state: StatePair,
    pub grad_x: Vec<f64>,
    pub grad_y: Vec<f64>,
    packed: Vec<[f64; 4]>,
    far: FarNodes,
    bbox: Option<[f64; 4]>,
    nonzero: bool,
}

impl CauchyData {
    /// Checks the support condition: data vanish where the signed distance
    /// to Γ is at least δ (when the lattice carries a domain).
    pub fn new(state: StatePair) -> Result<Self> {
        if let Some(spec) = state.grid.domain() {
            let g = &state.grid;
            for k in 0..g.len() {
                if g.signed_distance[k] >= spec.delta && (state.w[k] != 0.0 || state.v[k] != 0.0) {
                    return Err(Error::RegionMismatch(format!(
                        "Cauchy data nonzero outside the collar at node {k}"
                    )));
                }
            }
        }
        Ok(Self::unrestricted(state))
    }

    /// Accepts any lattice data (e.g. a wave evolved past the collar).
    pub fn unrestricted(state: StatePair) -> Self {
        let g = state.grid.clone();
        let (grad_x, grad_y) = gradient(&g, &state.w);
        let n = g.len();
        let mut packed = Vec::with_capacity(n);
        let mut far = FarNodes {
            weight: g.h * g.h,
            ..Default::default()
        };
        let mut bbox = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        // On a domain lattice the node set is fixed by the geometry (the open
        // collar), so quadrature choices do not depend on the data and
        // evaluation stays linear.
        let reach = g.domain().map(|d| d.delta);
        let mut nonzero = false;
        for k in 0..n {
            let s = [state.w[k], grad_x[k], grad_y[k], state.v[k]];
            packed.push(s);
            let live = s.iter().any(|x| *x != 0.0);
            nonzero |= live;
            if live || reach.is_some_and(|r| g.signed_distance[k] < r) {
                let p = g.point(k);
                far.x.push(p[0]);
                far.y.push(p[1]);
                far.c0.push(s[0] + p[0] * s[1] + p[1] * s[2]);
                far.gx.push(s[1]);
                far.gy.push(s[2]);
                far.w1.push(s[3]);
                bbox = [bbox[0].min(p[0]), bbox[1].max(p[0]), bbox[2].min(p[1]), bbox[3].max(p[1])];
            }
        }
        let bbox = (!far.is_empty()).then(|| {
            // bicubic samples reach two cells past the last nonzero node
            let pad = 2.0 * g.h;
            [bbox[0] - pad, bbox[1] + pad, bbox[2] - pad, bbox[3] + pad]
        });
        Self {
            state,
            grad_x,
            grad_y,
            packed,
            far,
            bbox,
            nonzero,
        }
    }

    pub fn grid(&self) -> &GridSet {
        &self.state.grid
    }

    pub fn is_zero(&self) -> bool {
        !self.nonzero
    }
}

impl CauchySource for CauchyData {
    #[inline]
    fn sample(&self, p: Point) -> Sample {
        let g = &self.state.grid;
        let fx = (p[0] - g.origin[0]) / g.h;
        let fy = (p[1] - g.origin[1]) / g.h;
        if fx < 0.0 || fy < 0.0 {
            return Sample::default();
        }
        let i = fx as usize;
        let j = fy as usize;
        if i + 1 >= g.nx || j + 1 >= g.ny {
            return Sample::default();
        }
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let k = j * g.nx + i;
        if i >= 1 && j >= 1 && i + 2 < g.nx && j + 2 < g.ny {
            let wx = catmull_rom(tx);
            let wy = catmull_rom(ty);
            let mut acc = [0.0; 4];
            for (b, &cy) in wy.iter().enumerate() {
                let row = k + b * g.nx - g.nx - 1;
                let mut r = [0.0; 4];
                for (a, &cx) in wx.iter().enumerate() {
                    let v = &self.packed[row + a];
                    for m in 0..4 {
                        r[m] += cx * v[m];
                    }
                }
                for m in 0..4 {
                    acc[m] += cy * r[m];
                }
            }
            return Sample {
                w0: acc[0],
                gx: acc[1],
                gy: acc[2],
                w1: acc[3],
            };
        }
        let a = &self.packed[k];
        let b = &self.packed[k + 1];
        let c = &self.packed[k + g.nx];
        let d = &self.packed[k + g.nx + 1];
        let w00 = (1.0 - tx) * (1.0 - ty);
        let w10 = tx * (1.0 - ty);
        let w01 = (1.0 - tx) * ty;
        let w11 = tx * ty;
        let f = |m: usize| w00 * a[m] + w10 * b[m] + w01 * c[m] + w11 * d[m];
        Sample {
            w0: f(0),
            gx: f(1),
            gy: f(2),
            w1: f(3),
        }
    }

    fn support_bbox(&self) -> Option<[f64; 4]> {
        Some(self.bbox.unwrap_or([0.0, 0.0, 0.0, 0.0]))
    }

    fn resolution(&self) -> Option<f64> {
        Some(self.state.grid.h)
    }

    fn far_nodes(&self) -> Option<&FarNodes> {
        Some(&self.far)
    }
}

/// Catmull-Rom weights for nodes −1, 0, 1, 2 at offset `t ∈ [0, 1)`.
#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Fourth-order central differences, dropping to second order next to the
/// lattice edge and one-sided on it.
pub fn gradient(g: &GridSet, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = g.len();
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let h = g.h;
    let d = |at: &dyn Fn(isize) -> f64, i: usize, len: usize| -> f64 {
        if len < 2 {
            0.0
        } else if i == 0 {
            (at(1) - at(0)) / h
        } else if i + 1 == len {
            (at(0) - at(-1)) / h
        } else if i < 2 || i + 2 >= len {
            (at(1) - at(-1)) / (2.0 * h)
        } else {
            (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h)
        }
    };
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.index(i, j);
            gx[k] = d(&|o| w[(k as isize + o) as usize], i, g.nx);
            gy[k] = d(&|o| w[(k as isize + o * g.nx as isize) as usize], j, g.ny);
        }
    }
    (gx, gy)
}
