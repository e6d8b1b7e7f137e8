//! Discrete differential geometry of graphs `x_{n+1} = u(x)`.
//!
//! Orientation: the unit normal is `nu = (Du, -1)/W` with `W = sqrt(1+|Du|^2)`,
//! so convex graphs opening upward have `H >= 0` and `<omega, nu> = -1/W < 0`
//! for `omega = e_{n+1}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ImcfError, Result};
use crate::stencil::{centered_weights, fd_weights};

/// Radial nodes `0 = r_0 < r_1 < ... < r_M = R` for hypersurface dimension `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    n: usize,
}

/// Largest admissible ratio between adjacent spacings.
pub const MAX_ADJACENT_RATIO: f64 = 10.0;
/// Largest per-cell growth accepted by [`RadialGrid::stretched`].
pub const MAX_STRETCH_RATIO: f64 = 1.05;

impl RadialGrid {
    pub fn new(nodes: Vec<f64>, n: usize) -> Result<Self> {
        if nodes.len() < 4 {
            return Err(ImcfError::domain("a radial grid needs at least 4 nodes"));
        }
        if nodes[0] != 0.0 {
            return Err(ImcfError::domain("the first radial node must be exactly 0"));
        }
        if n < 2 {
            return Err(ImcfError::domain("dimension n must be at least 2"));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(ImcfError::domain("radial nodes must be strictly increasing"));
            }
        }
        for w in nodes.windows(3) {
            let (a, b) = (w[1] - w[0], w[2] - w[1]);
            if a.max(b) / a.min(b) > MAX_ADJACENT_RATIO {
                return Err(ImcfError::domain("adjacent grid spacings differ by more than 10x"));
            }
        }
        Ok(Self { nodes, n })
    }

    pub fn uniform(radius: f64, cells: usize, n: usize) -> Result<Self> {
        let h = radius / cells as f64;
        Self::new((0..=cells).map(|i| i as f64 * h).collect(), n)
    }

    /// Smoothly stretched grid `r(s) = R expm1(c s)/expm1(c)` on uniform `s`.
    /// Spacing grows geometrically toward `R` by `exp(c/M)` per cell.
    pub fn stretched(radius: f64, cells: usize, stretch: f64, n: usize) -> Result<Self> {
        if stretch <= 0.0 {
            return Self::uniform(radius, cells, n);
        }
        if (stretch / cells as f64).exp() > MAX_STRETCH_RATIO {
            return Err(ImcfError::domain(format!(
                "stretch {stretch} over {cells} cells exceeds the per-cell ratio {MAX_STRETCH_RATIO}"
            )));
        }
        let denom = stretch.exp_m1();
        let mut nodes: Vec<f64> = (0..=cells)
            .map(|i| radius * (stretch * i as f64 / cells as f64).exp_m1() / denom)
            .collect();
        nodes[cells] = radius;
        Self::new(nodes, n)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn radius(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Local spacing: the larger of the two adjacent cells.
    pub fn spacing(&self, i: usize) -> f64 {
        let m = self.nodes.len() - 1;
        let left = if i > 0 { self.nodes[i] - self.nodes[i - 1] } else { 0.0 };
        let right = if i < m { self.nodes[i + 1] - self.nodes[i] } else { 0.0 };
        left.max(right)
    }

    /// Index of the last node with `r <= rho`.
    pub fn last_index_within(&self, rho: f64) -> usize {
        self.nodes.partition_point(|&r| r <= rho).saturating_sub(1)
    }

    /// Linear interpolation of nodal values at radius `rho`.
    pub fn interpolate(&self, values: &[f64], rho: f64) -> f64 {
        let i = self.last_index_within(rho).min(self.len() - 2);
        let (r0, r1) = (self.nodes[i], self.nodes[i + 1]);
        let s = (rho - r0) / (r1 - r0);
        values[i] + s * (values[i + 1] - values[i])
    }
}

/// Heights of a rotationally symmetric graph on a radial grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub grid: Arc<RadialGrid>,
    pub u: Vec<f64>,
    pub t: f64,
}

impl RadialProfile {
    pub fn new(grid: Arc<RadialGrid>, u: Vec<f64>, t: f64) -> Result<Self> {
        if u.len() != grid.len() {
            return Err(ImcfError::domain("profile length does not match the grid"));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(ImcfError::domain("profile values must be finite"));
        }
        Ok(Self { grid, u, t })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, t: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let u = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, u, t)
    }

    /// Discrete convexity: non-negative second differences and slope, up to `tol`.
    pub fn is_convex(&self, tol: f64) -> bool {
        let (ur, urr) = radial_derivatives(&self.grid, &self.u);
        ur.iter().all(|&d| d >= -tol) && urr.iter().all(|&d| d >= -tol)
    }
}

/// Heights on the `(2m+1) x (2m+1)` lattice of `[-L, L]^2` (row-major, `x1` fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState2D {
    pub half_width: f64,
    pub m: usize,
    pub u: Vec<f64>,
    pub t: f64,
}

impl GraphState2D {
    pub fn new(half_width: f64, m: usize, u: Vec<f64>, t: f64) -> Result<Self> {
        if m < 4 {
            return Err(ImcfError::domain("the lattice needs m >= 4"));
        }
        if !(half_width > 0.0) {
            return Err(ImcfError::domain("half width must be positive"));
        }
        let side = 2 * m + 1;
        if u.len() != side * side {
            return Err(ImcfError::domain("lattice values have the wrong length"));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(ImcfError::domain("lattice values must be finite"));
        }
        Ok(Self { half_width, m, u, t })
    }

    pub fn from_fn(half_width: f64, m: usize, t: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let side = 2 * m + 1;
        let h = half_width / m as f64;
        let mut u = Vec::with_capacity(side * side);
        for j in 0..side {
            for i in 0..side {
                u.push(f(-half_width + i as f64 * h, -half_width + j as f64 * h));
            }
        }
        Self::new(half_width, m, u, t)
    }

    pub fn side(&self) -> usize {
        2 * self.m + 1
    }

    pub fn spacing(&self) -> f64 {
        self.half_width / self.m as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.side() + i
    }

    pub fn position(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.spacing();
        (-self.half_width + i as f64 * h, -self.half_width + j as f64 * h)
    }

    /// Bilinear interpolation at `(x1, x2)` inside the square.
    pub fn interpolate(&self, x1: f64, x2: f64) -> f64 {
        let h = self.spacing();
        let last = self.side() - 2;
        let fx = ((x1 + self.half_width) / h).clamp(0.0, (self.side() - 1) as f64);
        let fy = ((x2 + self.half_width) / h).clamp(0.0, (self.side() - 1) as f64);
        let i = (fx.floor() as usize).min(last);
        let j = (fy.floor() as usize).min(last);
        let (sx, sy) = (fx - i as f64, fy - j as f64);
        let u00 = self.u[self.index(i, j)];
        let u10 = self.u[self.index(i + 1, j)];
        let u01 = self.u[self.index(i, j + 1)];
        let u11 = self.u[self.index(i + 1, j + 1)];
        (1.0 - sy) * ((1.0 - sx) * u00 + sx * u10) + sy * ((1.0 - sx) * u01 + sx * u11)
    }
}

/// Derived geometry at one node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeGeometry {
    /// Gradient. Radial profiles use the meridian frame: `[u_r, 0]`.
    pub du: [f64; 2],
    /// Hessian. Radial profiles store `diag(u_rr, u_r/r)`; the second entry
    /// stands for each of the `n-1` tangential directions.
    pub hess: [[f64; 2]; 2],
    pub w: f64,
    pub h: f64,
    pub omega_nu: f64,
    pub f_nu: f64,
    pub fhat_nu: f64,
    pub v: f64,
}

impl NodeGeometry {
    /// Coordinate second fundamental form `hess / W`.
    pub fn second_ff(&self) -> [[f64; 2]; 2] {
        let mut out = self.hess;
        for row in &mut out {
            for e in row {
                *e /= self.w;
            }
        }
        out
    }

    /// Smallest eigenvalue of the (symmetric) Hessian.
    pub fn min_hessian_eigenvalue(&self) -> f64 {
        let [[a, b], [_, d]] = self.hess;
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        mean - rad
    }

    pub fn grad_norm(&self) -> f64 {
        self.du[0].hypot(self.du[1])
    }
}

/// Per-node geometry of a discrete graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryFields {
    pub nodes: Vec<NodeGeometry>,
}

impl GeometryFields {
    pub fn mean_curvature(&self) -> Vec<f64> {
        self.nodes.iter().map(|g| g.h).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        self.nodes.iter().map(|g| g.v).collect()
    }

    pub fn min_h(&self) -> (usize, f64) {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, g)| (i, g.h))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
    }
}

fn node_geometry(du: [f64; 2], hess: [[f64; 2]; 2], h: f64, u: f64, x_dot_du: f64) -> NodeGeometry {
    let w = (1.0 + du[0] * du[0] + du[1] * du[1]).sqrt();
    let fhat_nu = u / w;
    NodeGeometry {
        du,
        hess,
        w,
        h,
        omega_nu: -1.0 / w,
        f_nu: (x_dot_du - u) / w,
        fhat_nu,
        v: fhat_nu * h,
    }
}

/// `u_r` and `u_rr` at every node: reflection through `r = 0`, centered
/// three-point weights inside and a four-point one-sided stencil at `r = R`.
pub fn radial_derivatives(grid: &RadialGrid, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let r = grid.nodes();
    let m = r.len() - 1;
    let mut ur = vec![0.0; m + 1];
    let mut urr = vec![0.0; m + 1];
    urr[0] = 2.0 * (u[1] - u[0]) / (r[1] * r[1]);
    for i in 1..m {
        let (d1, d2) = centered_weights(r[i - 1], r[i], r[i + 1]);
        ur[i] = d1[0] * u[i - 1] + d1[1] * u[i] + d1[2] * u[i + 1];
        urr[i] = d2[0] * u[i - 1] + d2[1] * u[i] + d2[2] * u[i + 1];
    }
    let xs = [r[m], r[m - 1], r[m - 2], r[m - 3]];
    let w = fd_weights(r[m], &xs, 2);
    let vals = [u[m], u[m - 1], u[m - 2], u[m - 3]];
    ur[m] = (0..4).map(|k| w[1][k] * vals[k]).sum();
    urr[m] = (0..4).map(|k| w[2][k] * vals[k]).sum();
    (ur, urr)
}

/// Mean curvature of a radial graph from its derivatives:
/// `H = u_rr/W^3 + (n-1) u_r/(r W)`, with the limit `n u_rr` on the axis.
pub fn radial_mean_curvature(n: usize, r: f64, ur: f64, urr: f64) -> f64 {
    if r == 0.0 {
        return n as f64 * urr;
    }
    let w = (1.0 + ur * ur).sqrt();
    urr / (w * w * w) + (n - 1) as f64 * ur / (r * w)
}

/// Geometry of a rotationally symmetric profile.
pub fn compute_fields_radial(p: &RadialProfile) -> GeometryFields {
    let grid = &p.grid;
    let (ur, urr) = radial_derivatives(grid, &p.u);
    let nodes = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let tangential = if r == 0.0 { urr[i] } else { ur[i] / r };
            let h = radial_mean_curvature(grid.n(), r, ur[i], urr[i]);
            node_geometry([ur[i], 0.0], [[urr[i], 0.0], [0.0, tangential]], h, p.u[i], r * ur[i])
        })
        .collect();
    GeometryFields { nodes }
}

/// Stencil (node offsets and first/second derivative weights) along one lattice axis.
struct AxisStencil {
    idx: Vec<usize>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

fn axis_stencil(i: usize, side: usize, h: f64) -> AxisStencil {
    let idx: Vec<usize> = if i == 0 {
        vec![0, 1, 2, 3]
    } else if i == side - 1 {
        vec![i, i - 1, i - 2, i - 3]
    } else {
        vec![i - 1, i, i + 1]
    };
    let xs: Vec<f64> = idx.iter().map(|&k| k as f64 * h).collect();
    let w = fd_weights(i as f64 * h, &xs, 2);
    AxisStencil {
        idx,
        d1: w[1].clone(),
        d2: w[2].clone(),
    }
}

/// Geometry of a lattice graph (`n = 2`) using
/// `H = (delta_ij - D_i u D_j u / W^2) D_ij u / W`.
pub fn compute_fields_2d(s: &GraphState2D) -> GeometryFields {
    let side = s.side();
    let h = s.spacing();
    let stencils: Vec<AxisStencil> = (0..side).map(|i| axis_stencil(i, side, h)).collect();
    let mut nodes = Vec::with_capacity(side * side);
    for j in 0..side {
        let sy = &stencils[j];
        for i in 0..side {
            let sx = &stencils[i];
            let (mut ux, mut uxx) = (0.0, 0.0);
            for (k, &ii) in sx.idx.iter().enumerate() {
                let v = s.u[s.index(ii, j)];
                ux += sx.d1[k] * v;
                uxx += sx.d2[k] * v;
            }
            let (mut uy, mut uyy) = (0.0, 0.0);
            for (k, &jj) in sy.idx.iter().enumerate() {
                let v = s.u[s.index(i, jj)];
                uy += sy.d1[k] * v;
                uyy += sy.d2[k] * v;
            }
            let mut uxy = 0.0;
            for (b, &jj) in sy.idx.iter().enumerate() {
                for (a, &ii) in sx.idx.iter().enumerate() {
                    uxy += sx.d1[a] * sy.d1[b] * s.u[s.index(ii, jj)];
                }
            }
            let w2 = 1.0 + ux * ux + uy * uy;
            let q = (1.0 + uy * uy) * uxx - 2.0 * ux * uy * uxy + (1.0 + ux * ux) * uyy;
            let hc = q / (w2 * w2.sqrt());
            let (x1, x2) = s.position(i, j);
            nodes.push(node_geometry(
                [ux, uy],
                [[uxx, uxy], [uxy, uyy]],
                hc,
                s.u[s.index(i, j)],
                x1 * ux + x2 * uy,
            ));
        }
    }
    GeometryFields { nodes }
}

/// Graph velocity `u_t = -W/H` at every node.
pub fn flow_speed(fields: &GeometryFields, h_min: f64) -> Result<Vec<f64>> {
    fields
        .nodes
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if g.h > h_min {
                Ok(-g.w / g.h)
            } else {
                Err(ImcfError::CurvatureFloor { node: i, h: g.h })
            }
        })
        .collect()
}
