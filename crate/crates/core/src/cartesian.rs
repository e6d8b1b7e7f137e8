//! The graph flow `u_t = -W/H` for `n = 2` on the lattice over `[-L, L]^2`.
//!
//! Implicit steps (same schemes as the radial solver) are solved by Newton;
//! the nine-point Jacobian is inverted with Jacobi-preconditioned BiCGSTAB.
//! The edges carry the cone slope as a Neumann condition
//! `du/dn = alpha(t) (x/|x|) . n` through ghost nodes.

use crate::bicgstab::{bicgstab, FixedRowMatrix};
use crate::diagnostics::{DiagnosticsReport, DiagnosticsRow, LawId, Probes, Violation};
use crate::error::{ImcfError, Result};
use crate::exact::ConeFamily;
use crate::geometry::{compute_fields_2d, GraphState2D};
use crate::radial::{propose_dt, SolverConfig, StopReason, TimeScheme, MAX_RESOLUTION_RATIO};

/// Relative tolerance of the inner linear solves.
pub const LINEAR_RTOL: f64 = 1e-12;
const LINEAR_MAX_ITER: usize = 2000;

/// Lattice operator `G(u) = W^4 / Q` with
/// `Q = (1+u_y^2) u_xx - 2 u_x u_y u_xy + (1+u_x^2) u_yy`.
#[derive(Debug, Clone)]
pub struct LatticeOperator {
    pub half_width: f64,
    pub m: usize,
}

/// Lattice derivatives and speed.
#[derive(Debug, Clone)]
pub struct LatticeTerms {
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
    pub uxx: Vec<f64>,
    pub uyy: Vec<f64>,
    pub uxy: Vec<f64>,
    pub q: Vec<f64>,
    pub g: Vec<f64>,
}

impl LatticeTerms {
    pub fn mean_curvature(&self, k: usize) -> f64 {
        let w2 = 1.0 + self.ux[k] * self.ux[k] + self.uy[k] * self.uy[k];
        self.q[k] / (w2 * w2.sqrt())
    }
}

/// Offsets of the nine-point stencil, `(di, dj)`.
const OFFSETS: [(isize, isize); 9] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

impl LatticeOperator {
    pub fn new(half_width: f64, m: usize) -> Self {
        Self { half_width, m }
    }

    fn side(&self) -> usize {
        2 * self.m + 1
    }

    fn h(&self) -> f64 {
        self.half_width / self.m as f64
    }

    fn coord(&self, i: isize) -> f64 {
        -self.half_width + i as f64 * self.h()
    }

    /// Outward slope of the cone along `x1` at lattice point `(i, j)`.
    fn slope_x(&self, a: f64, i: isize, j: isize) -> f64 {
        let (x, y) = (self.coord(i), self.coord(j));
        a * x / x.hypot(y)
    }

    fn slope_y(&self, a: f64, i: isize, j: isize) -> f64 {
        let (x, y) = (self.coord(i), self.coord(j));
        a * y / x.hypot(y)
    }

    /// Value at a possibly ghost index: the mirrored interior node plus an
    /// offset fixed by the Neumann data. Returns `(node, offset)`.
    fn resolve(&self, a: f64, i: isize, j: isize) -> (usize, f64) {
        let last = self.side() as isize - 1;
        let h = self.h();
        let (mut ii, mut jj, mut off) = (i, j, 0.0);
        if jj < 0 {
            // u(i,-1) = u(i,1) - 2h u_y(i,0)
            off -= 2.0 * h * self.slope_y(a, ii, 0);
            jj = 1;
        } else if jj > last {
            off += 2.0 * h * self.slope_y(a, ii, last);
            jj = last - 1;
        }
        if ii < 0 {
            off -= 2.0 * h * self.slope_x(a, 0, j);
            ii = 1;
        } else if ii > last {
            off += 2.0 * h * self.slope_x(a, last, j);
            ii = last - 1;
        }
        (jj as usize * self.side() + ii as usize, off)
    }

    /// Nine-point neighbourhoods: node indices and Neumann offsets.
    fn neighbourhood(&self, a: f64, i: usize, j: usize) -> ([usize; 9], [f64; 9]) {
        let mut idx = [0; 9];
        let mut off = [0.0; 9];
        for (k, (di, dj)) in OFFSETS.iter().enumerate() {
            let (n, o) = self.resolve(a, i as isize + di, j as isize + dj);
            idx[k] = n;
            off[k] = o;
        }
        (idx, off)
    }

    /// Stencil weights on the nine-point neighbourhood for
    /// `u_x, u_y, u_xx, u_yy, u_xy`.
    fn weights(&self) -> [[f64; 9]; 5] {
        let h = self.h();
        let (a, b) = (0.5 / h, 1.0 / (h * h));
        let c = 0.25 / (h * h);
        [
            [0.0, 0.0, 0.0, -a, 0.0, a, 0.0, 0.0, 0.0],
            [0.0, -a, 0.0, 0.0, 0.0, 0.0, 0.0, a, 0.0],
            [0.0, 0.0, 0.0, b, -2.0 * b, b, 0.0, 0.0, 0.0],
            [0.0, b, 0.0, 0.0, -2.0 * b, 0.0, 0.0, b, 0.0],
            [c, 0.0, -c, 0.0, 0.0, 0.0, -c, 0.0, c],
        ]
    }

    pub fn terms(&self, u: &[f64], a: f64) -> LatticeTerms {
        let side = self.side();
        let nn = side * side;
        let w = self.weights();
        let mut out = LatticeTerms {
            ux: vec![0.0; nn],
            uy: vec![0.0; nn],
            uxx: vec![0.0; nn],
            uyy: vec![0.0; nn],
            uxy: vec![0.0; nn],
            q: vec![0.0; nn],
            g: vec![0.0; nn],
        };
        for j in 0..side {
            for i in 0..side {
                let k = j * side + i;
                let (idx, off) = self.neighbourhood(a, i, j);
                let mut d = [0.0; 5];
                for (s, ws) in d.iter_mut().zip(&w) {
                    for p in 0..9 {
                        *s += ws[p] * (u[idx[p]] + off[p]);
                    }
                }
                let [ux, uy, uxx, uyy, uxy] = d;
                let w2 = 1.0 + ux * ux + uy * uy;
                let q = (1.0 + uy * uy) * uxx - 2.0 * ux * uy * uxy + (1.0 + ux * ux) * uyy;
                out.ux[k] = ux;
                out.uy[k] = uy;
                out.uxx[k] = uxx;
                out.uyy[k] = uyy;
                out.uxy[k] = uxy;
                out.q[k] = q;
                out.g[k] = w2 * w2 / q;
            }
        }
        out
    }

    fn residual_jacobian(&self, u: &[f64], u_old: &[f64], dte: f64, a: f64) -> (Vec<f64>, FixedRowMatrix<9>) {
        let side = self.side();
        let terms = self.terms(u, a);
        let w = self.weights();
        let nn = side * side;
        let mut f = vec![0.0; nn];
        let mut cols = Vec::with_capacity(nn);
        let mut vals = Vec::with_capacity(nn);
        for j in 0..side {
            for i in 0..side {
                let k = j * side + i;
                let (ux, uy, uxx, uyy, uxy, q) = (terms.ux[k], terms.uy[k], terms.uxx[k], terms.uyy[k], terms.uxy[k], terms.q[k]);
                let w2 = 1.0 + ux * ux + uy * uy;
                f[k] = u[k] - u_old[k] + dte * terms.g[k];
                let c = -w2 * w2 / (q * q);
                let dg = [
                    4.0 * ux * w2 / q + c * (2.0 * ux * uyy - 2.0 * uy * uxy),
                    4.0 * uy * w2 / q + c * (2.0 * uy * uxx - 2.0 * ux * uxy),
                    c * (1.0 + uy * uy),
                    c * (1.0 + ux * ux),
                    c * (-2.0 * ux * uy),
                ];
                let (idx, _) = self.neighbourhood(a, i, j);
                let mut row = [0.0; 9];
                for p in 0..9 {
                    let mut s = 0.0;
                    for d in 0..5 {
                        s += dg[d] * w[d][p];
                    }
                    row[p] = dte * s;
                }
                row[4] += 1.0;
                cols.push(idx);
                vals.push(row);
            }
        }
        (f, FixedRowMatrix { cols, vals })
    }

    /// Damped Newton for `u - u_old + dte G(u) = 0` from each guess in turn.
    pub fn implicit_solve(&self, u_old: &[f64], guesses: &[Vec<f64>], dte: f64, a: f64, cfg: &SolverConfig, t: f64) -> Result<Vec<f64>> {
        let mut best = f64::INFINITY;
        for g in guesses {
            match self.newton(u_old, g.clone(), dte, a, cfg) {
                Ok(u) => {
                    let terms = self.terms(&u, a);
                    for k in 0..u.len() {
                        let h = terms.mean_curvature(k);
                        if !(h > cfg.h_min) {
                            return Err(ImcfError::CurvatureFloor { node: k, h });
                        }
                    }
                    return Ok(u);
                }
                Err(res) => best = best.min(res),
            }
        }
        Err(ImcfError::NewtonDiverged { t, residual: best })
    }

    fn newton(&self, u_old: &[f64], mut u: Vec<f64>, dte: f64, a: f64, cfg: &SolverConfig) -> std::result::Result<Vec<f64>, f64> {
        let scale = u_old.iter().fold(1.0f64, |acc, &b| acc.max(b.abs()));
        let tol = cfg.newton_tol * scale;
        let (mut f, mut jac) = self.residual_jacobian(&u, u_old, dte, a);
        let mut norm = max_abs(&f);
        if !norm.is_finite() {
            return Err(norm);
        }
        for _ in 0..cfg.newton_max_iter {
            if norm <= tol {
                return Ok(u);
            }
            let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
            let step = bicgstab(&jac, &rhs, LINEAR_RTOL, LINEAR_MAX_ITER).map_err(|_| norm)?;
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=20 {
                let trial: Vec<f64> = u.iter().zip(&step).map(|(x, d)| x + lambda * d).collect();
                let (f2, jac2) = self.residual_jacobian(&trial, u_old, dte, a);
                let n2 = max_abs(&f2);
                if n2.is_finite() && n2 < norm {
                    accepted = Some((trial, f2, jac2, n2));
                    break;
                }
                lambda *= 0.5;
            }
            let (trial, f2, jac2, n2) = accepted.ok_or(norm)?;
            u = trial;
            f = f2;
            jac = jac2;
            norm = n2;
        }
        if norm <= tol {
            Ok(u)
        } else {
            Err(norm)
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| if b.is_nan() { f64::NAN } else { a.max(b.abs()) })
}

/// A lattice simulation.
#[derive(Debug, Clone)]
pub struct Sim2D {
    pub state: GraphState2D,
    pub cone: ConeFamily,
    pub config: SolverConfig,
    pub probes: Probes,
    pub history: DiagnosticsReport,
    pub op: LatticeOperator,
    pub prev: Option<(Vec<f64>, f64)>,
    pub hu_bounds: (f64, f64),
    pub steps: usize,
}

/// Mask of lattice nodes inside the inscribed disk `|x| <= radius`.
fn within(state: &GraphState2D, radius: f64) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
    let side = state.side();
    (0..side * side).filter_map(move |k| {
        let (x, y) = state.position(k % side, k / side);
        (x.hypot(y) <= radius * (1.0 + 1e-12)).then_some((k, x, y))
    })
}

/// Largest sandwich violation over the inscribed disk.
pub fn sandwich_violation_2d(s: &GraphState2D, cone: &ConeFamily) -> f64 {
    let a = cone.slope_unchecked(s.t.min(cone.lifetime()));
    within(s, s.half_width)
        .map(|(k, x, y)| {
            let r = x.hypot(y);
            (a * r - s.u[k]).max(s.u[k] - a * r - cone.kappa)
        })
        .fold(0.0f64, f64::max)
}

fn sup_hu_2d(s: &GraphState2D) -> (usize, f64) {
    let fields = compute_fields_2d(s);
    within(s, s.half_width)
        .map(|(k, _, _)| (k, fields.nodes[k].h * s.u[k]))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
}

/// Validate a lattice datum (sandwich on the inscribed disk, strict mean
/// convexity, resolution-independent `H u`) and set up a simulation.
pub fn init_2d(u0: Vec<f64>, cone: ConeFamily, half_width: f64, m: usize, config: SolverConfig) -> Result<Sim2D> {
    config.validate()?;
    if cone.n != 2 {
        return Err(ImcfError::domain("the lattice solver is two-dimensional"));
    }
    let state = GraphState2D::new(half_width, m, u0, 0.0)?;
    let scale = state.u.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let mut worst: Option<(usize, f64)> = None;
    for (k, x, y) in within(&state, half_width) {
        let r = x.hypot(y);
        let v = (cone.alpha0 * r - state.u[k]).max(state.u[k] - cone.alpha0 * r - cone.kappa);
        if v > 1e-12 * scale && worst.is_none_or(|w| v > w.1) {
            worst = Some((k, v));
        }
    }
    if let Some((node, magnitude)) = worst {
        return Err(ImcfError::SandwichViolation { node, magnitude });
    }
    let fields = compute_fields_2d(&state);
    let (node, hmin) = fields.min_h();
    if !(hmin > 0.0) {
        return Err(ImcfError::MeanConvexityViolation { node, h: hmin });
    }
    if m % 2 == 0 && m >= 8 {
        let side = state.side();
        let coarse_u: Vec<f64> = (0..side)
            .step_by(2)
            .flat_map(|j| (0..side).step_by(2).map(move |i| j * side + i))
            .map(|k| state.u[k])
            .collect();
        let coarse = GraphState2D::new(half_width, m / 2, coarse_u, 0.0)?;
        let (node, fine) = sup_hu_2d(&state);
        let (_, rough) = sup_hu_2d(&coarse);
        let ratio = fine / rough;
        if ratio > MAX_RESOLUTION_RATIO {
            return Err(ImcfError::UnboundedCurvature { node, ratio });
        }
    }
    let hu: Vec<f64> = fields.nodes.iter().zip(&state.u).map(|(g, &u)| g.h * u).collect();
    let lo = hu.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = hu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Sim2D {
        op: LatticeOperator::new(half_width, m),
        state,
        cone,
        config,
        probes: Probes::default(),
        history: DiagnosticsReport::default(),
        prev: None,
        hu_bounds: (lo, hi),
        steps: 0,
    })
}

/// Scalars of one lattice state, evaluated on the inscribed disk.
pub fn lattice_row(s: &GraphState2D, cone: &ConeFamily, probes: &Probes) -> DiagnosticsRow {
    let fields = compute_fields_2d(s);
    let l = s.half_width;
    let t = s.t.min(cone.lifetime());
    let mut row = DiagnosticsRow {
        t: s.t,
        sup_hu: f64::NEG_INFINITY,
        inf_v: f64::INFINITY,
        gamma_t: cone.gamma(t).unwrap_or(0.0),
        min_star: f64::INFINITY,
        sandwich_viol: sandwich_violation_2d(s, cone),
        ..Default::default()
    };
    for (k, x, y) in within(s, l) {
        let g = &fields.nodes[k];
        row.sup_hu = row.sup_hu.max(g.h * s.u[k]);
        row.inf_v = row.inf_v.min(g.v);
        let support = (x * g.du[0] + y * g.du[1] - s.u[k] + probes.star_center) / g.w;
        row.min_star = row.min_star.min(g.h * support);
        if x.hypot(y) <= 0.5 * l * (1.0 + 1e-12) {
            row.flat_sup = row.flat_sup.max(g.grad_norm());
        }
    }
    let v: Vec<f64> = fields.nodes.iter().map(|g| g.v).collect();
    let ux: Vec<f64> = fields.nodes.iter().map(|g| g.du[0]).collect();
    let probe = GraphState2D { u: v, ..s.clone() };
    row.far_v = probe.interpolate(probes.probe_fraction * l, 0.0);
    let slope = GraphState2D { u: ux, ..s.clone() };
    row.alpha_meas = slope.interpolate(0.5 * l, 0.0);
    row
}

/// Outcome of a lattice run.
#[derive(Debug, Clone)]
pub struct RunSummary2D {
    pub reason: StopReason,
    pub report: DiagnosticsReport,
    pub frames: Vec<GraphState2D>,
    pub failure: Option<ImcfError>,
}

impl Sim2D {
    pub fn t(&self) -> f64 {
        self.state.t
    }

    fn growth_cap(&self) -> f64 {
        match (&self.prev, self.config.scheme) {
            (Some((_, dt_prev)), TimeScheme::Bdf2) => 2.0 * dt_prev,
            _ => f64::INFINITY,
        }
    }

    fn solve(&self, dt: f64) -> Result<Vec<f64>> {
        let u = &self.state.u;
        let t = self.t();
        let (u_old, dte) = match (&self.prev, self.config.scheme) {
            (Some((up, dt_prev)), TimeScheme::Bdf2) => {
                let w = dt / dt_prev;
                let a = (1.0 + 2.0 * w) / (1.0 + w);
                let c = w * w / (1.0 + w);
                (u.iter().zip(up).map(|(&x, &y)| ((1.0 + w) * x - c * y) / a).collect::<Vec<_>>(), dt / a)
            }
            _ => (u.clone(), dt),
        };
        let a_old = self.cone.slope_unchecked(t);
        let a_new = self.cone.slope_unchecked(t + dt);
        let mut guesses = Vec::with_capacity(3);
        if let Some((up, dt_prev)) = &self.prev {
            let w = dt / dt_prev;
            guesses.push(u.iter().zip(up).map(|(&x, &y)| x + w * (x - y)).collect());
        }
        let c = self.op.m * (2 * self.op.m + 2);
        let g0 = self.op.terms(u, a_old).g[c];
        let s = a_new / a_old;
        guesses.push(u.iter().map(|&x| u[c] - dt * g0 + s * (x - u[c])).collect());
        guesses.push(u.clone());
        self.op.implicit_solve(&u_old, &guesses, dte, a_new, &self.config, t + dt)
    }

    fn step_towards(&mut self, t_end: f64) -> Result<()> {
        let t = self.t();
        let mut dt = propose_dt(&self.cone, &self.config, t, self.growth_cap(), t_end);
        let min_dt = self.config.dt * 1e-6;
        loop {
            if !(dt > 0.0) || t + dt >= self.cone.lifetime() {
                return Err(ImcfError::CurvatureFloor { node: 0, h: 0.0 });
            }
            match self.solve(dt) {
                Ok(u) => {
                    let scale = self.state.u.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
                    let rise = u.iter().zip(&self.state.u).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
                    if rise > self.config.newton_tol * scale {
                        self.history.violations.push(Violation {
                            law: LawId::Descent,
                            t: t + dt,
                            magnitude: rise,
                        });
                    }
                    let before = std::mem::replace(&mut self.state.u, u);
                    self.prev = Some((before, dt));
                    self.state.t = t + dt;
                    self.steps += 1;
                    return Ok(());
                }
                Err(e) if e.is_numerical() && dt * 0.5 >= min_dt => dt *= 0.5,
                Err(e) => return Err(e),
            }
        }
    }

    /// One implicit step.
    pub fn step(&mut self) -> Result<()> {
        self.step_towards(f64::INFINITY)
    }

    fn record(&mut self, frames: &mut Vec<GraphState2D>) {
        let row = lattice_row(&self.state, &self.cone, &self.probes);
        self.history.push_row(row);
        frames.push(self.state.clone());
    }

    /// Step until `t_end`, flattening of the inner half disk, or the curvature floor.
    pub fn run_until(&mut self, t_end: f64) -> Result<RunSummary2D> {
        let start_rows = self.history.rows.len();
        let start_viol = self.history.violations.len();
        let mut frames = Vec::new();
        if self.history.rows.last().is_none_or(|r| r.t < self.t()) {
            self.record(&mut frames);
        }
        let mut failure = None;
        let reason = loop {
            if self.history.rows.last().is_some_and(|r| r.t == self.t() && r.flat_sup < self.config.flat_eps) {
                break StopReason::Flattened;
            }
            if self.t() >= t_end {
                break StopReason::Reached;
            }
            match self.step_towards(t_end) {
                Ok(()) => {
                    if self.steps % self.config.sample_every == 0 || self.t() >= t_end {
                        self.record(&mut frames);
                    }
                }
                Err(e @ ImcfError::CurvatureFloor { .. }) => {
                    failure = Some(e);
                    break StopReason::CurvatureFloor;
                }
                Err(e) => return Err(e),
            }
        };
        if self.history.rows.last().is_none_or(|r| r.t < self.t()) {
            self.record(&mut frames);
        }
        Ok(RunSummary2D {
            reason,
            report: DiagnosticsReport {
                rows: self.history.rows[start_rows..].to_vec(),
                violations: self.history.violations[start_viol..].to_vec(),
            },
            frames,
            failure,
        })
    }
}

/// `max u - min u` on each circle of the given radii, sampled at `samples`
/// equally spaced angles by bilinear interpolation.
pub fn azimuthal_variation(s: &GraphState2D, radii: &[f64], samples: usize) -> Vec<f64> {
    radii
        .iter()
        .map(|&rho| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for k in 0..samples {
                let th = std::f64::consts::TAU * k as f64 / samples as f64;
                let v = s.interpolate(rho * th.cos(), rho * th.sin());
                lo = lo.min(v);
                hi = hi.max(v);
            }
            hi - lo
        })
        .collect()
}

/// Elliptic datum `sqrt(alpha0^2 (x1^2 + aspect x2^2) + kappa^2)`. For
/// `aspect >= 1` it stays above `alpha0 |x|`; it stays below
/// `alpha0 |x| + kappa_cone` on `|x| <= L` when
/// `alpha0^2 aspect L^2 + kappa^2 <= (alpha0 L + kappa_cone)^2`.
pub fn elliptic_datum(alpha0: f64, kappa: f64, aspect: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, y| (alpha0 * alpha0 * (x * x + aspect * y * y) + kappa * kappa).sqrt()
}

/// Smoothed cone with a localized quadrupole bump,
/// `alpha0 sqrt(r^2 + s0^2) + delta + 4 delta (x1^2 - x2^2)/(1 + r^2)^2` with
/// `s0 = (kappa - 2 delta)/alpha0`. Lies between the cones for
/// `0 <= delta < kappa/2` and is mean convex for small `delta` (about
/// `delta <= kappa/10`). The bump decays like `r^-2`, so the datum meets the
/// edge condition up to `O(delta L^-3)`.
pub fn quadrupole_datum(alpha0: f64, kappa: f64, delta: f64) -> impl Fn(f64, f64) -> f64 {
    let s0 = (kappa - 2.0 * delta) / alpha0;
    move |x, y| {
        let r2 = x * x + y * y;
        let q = 1.0 + r2;
        alpha0 * (r2 + s0 * s0).sqrt() + delta + 4.0 * delta * (x * x - y * y) / (q * q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_matches_differences() {
        let op = LatticeOperator::new(2.0, 4);
        let s = GraphState2D::from_fn(2.0, 4, 0.0, elliptic_datum(1.0, 0.5, 1.2)).unwrap();
        let a = 0.8;
        let (_, jac) = op.residual_jacobian(&s.u, &s.u, 0.01, a);
        let eps = 1e-6;
        for probe in [0usize, 4, 40, 80] {
            let (mut up, mut dn) = (s.u.clone(), s.u.clone());
            up[probe] += eps;
            dn[probe] -= eps;
            let (f1, _) = op.residual_jacobian(&up, &s.u, 0.01, a);
            let (f0, _) = op.residual_jacobian(&dn, &s.u, 0.01, a);
            for row in 0..s.u.len() {
                let fd = (f1[row] - f0[row]) / (2.0 * eps);
                let an: f64 = (0..9).filter(|&p| jac.cols[row][p] == probe).map(|p| jac.vals[row][p]).sum();
                assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "row {row} col {probe}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn rejects_saddle_and_accepts_ellipse() {
        let cone = ConeFamily::new(2, 1.0, 0.5).unwrap();
        let cfg = SolverConfig::default();
        let s = GraphState2D::from_fn(4.0, 16, 0.0, elliptic_datum(1.0, 0.5, 1.2)).unwrap();
        init_2d(s.u, cone, 4.0, 16, cfg.clone()).unwrap();
        // negative trace at the origin
        let dip = |x: f64, y: f64| (x * x + y * y + 1.0).sqrt() + 0.5 - 2.0 * x * x * (-4.0 * (x * x + y * y)).exp();
        let saddle = GraphState2D::from_fn(4.0, 16, 0.0, dip).unwrap();
        let wide = ConeFamily::new(2, 1.0, 2.0).unwrap();
        assert!(matches!(
            init_2d(saddle.u, wide, 4.0, 16, cfg),
            Err(ImcfError::MeanConvexityViolation { .. })
        ));
    }
}
