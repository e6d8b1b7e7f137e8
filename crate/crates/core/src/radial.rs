//! Implicit time stepping of the rotationally symmetric graph flow
//! `u_t = -(1+u_r^2)^2 / (u_rr + (n-1)(1+u_r^2) u_r / r)` on `[0, R]`.
//!
//! Each step solves the nodal residual by damped Newton with a tridiagonal
//! Jacobian. The far field is either the cone slope `u_r(R) = alpha(t)` or a
//! prescribed height.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{radial_row, DiagnosticsReport, LawId, Probes, Violation};
use crate::error::{ImcfError, Result};
use crate::exact::ConeFamily;
use crate::geometry::{compute_fields_radial, RadialGrid, RadialProfile};
use crate::stencil::centered_weights;
use crate::tridiag::solve_tridiagonal;

/// Far-field condition selected in the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryKind {
    /// `u_r(R, t) = alpha(t)`.
    NeumannConeSlope,
    /// `u(R, t) = u(R, 0) + (alpha(t) - alpha0) R`.
    DirichletShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeScheme {
    BackwardEuler,
    /// Variable-step second-order backward differentiation, started with one
    /// backward Euler step.
    Bdf2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub h_min: f64,
    pub bc_kind: BoundaryKind,
    pub flat_eps: f64,
    pub scheme: TimeScheme,
    /// Largest relative change of the cone slope allowed in one step; shrinks
    /// the step as the slope collapses near the lifetime.
    pub max_slope_change: f64,
    /// Record a diagnostics row every this many steps.
    pub sample_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            newton_tol: 1e-10,
            newton_max_iter: 30,
            h_min: 1e-9,
            bc_kind: BoundaryKind::NeumannConeSlope,
            flat_eps: 1e-3,
            scheme: TimeScheme::Bdf2,
            max_slope_change: 0.05,
            sample_every: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ImcfError::domain(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("newton_tol", self.newton_tol)?;
        positive("h_min", self.h_min)?;
        positive("flat_eps", self.flat_eps)?;
        positive("max_slope_change", self.max_slope_change)?;
        if self.newton_max_iter == 0 {
            return Err(ImcfError::domain("newton_max_iter must be at least 1"));
        }
        if self.sample_every == 0 {
            return Err(ImcfError::domain("sample_every must be at least 1"));
        }
        Ok(())
    }
}

/// Boundary data at `r = R` for one implicit solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FarField {
    Slope(f64),
    Value(f64),
}

/// Discrete radial operator `G(u) = W^4 / D` on a fixed grid, with
/// `D = u_rr + (n-1) W^2 u_r / r` (and `D = n u_rr` on the axis).
#[derive(Debug, Clone)]
pub struct RadialOperator {
    grid: Arc<RadialGrid>,
    wr: Vec<[f64; 3]>,
    wrr: Vec<[f64; 3]>,
}

/// Derivatives and speed at every node.
#[derive(Debug, Clone)]
pub struct OperatorTerms {
    pub ur: Vec<f64>,
    pub urr: Vec<f64>,
    pub d: Vec<f64>,
    pub g: Vec<f64>,
}

impl OperatorTerms {
    /// Mean curvature `D / W^3` at node `i`.
    pub fn mean_curvature(&self, i: usize) -> f64 {
        let w2 = 1.0 + self.ur[i] * self.ur[i];
        self.d[i] / (w2 * w2.sqrt())
    }
}

impl RadialOperator {
    pub fn new(grid: Arc<RadialGrid>) -> Self {
        let r = grid.nodes();
        let m = r.len() - 1;
        let mut wr = Vec::with_capacity(m + 1);
        let mut wrr = Vec::with_capacity(m + 1);
        for i in 0..=m {
            // mirrored ghost spacing at both ends
            let hm = if i > 0 { r[i] - r[i - 1] } else { r[1] };
            let hp = if i < m { r[i + 1] - r[i] } else { r[m] - r[m - 1] };
            let (d1, d2) = centered_weights(r[i] - hm, r[i], r[i] + hp);
            wr.push(d1);
            wrr.push(d2);
        }
        Self { grid, wr, wrr }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    fn last(&self) -> usize {
        self.grid.len() - 1
    }

    /// Neighbour values `(u_{i-1}, u_i, u_{i+1})` including ghosts:
    /// `u_{-1} = u_1` and, for a slope condition, `u_{M+1} = u_{M-1} + 2 h_M a`.
    fn triple(&self, u: &[f64], i: usize, far: FarField) -> [f64; 3] {
        let m = self.last();
        if i == 0 {
            [u[1], u[0], u[1]]
        } else if i == m {
            let h = self.grid.nodes()[m] - self.grid.nodes()[m - 1];
            let ghost = match far {
                FarField::Slope(a) => u[m - 1] + 2.0 * h * a,
                FarField::Value(_) => 2.0 * u[m] - u[m - 1],
            };
            [u[m - 1], u[m], ghost]
        } else {
            [u[i - 1], u[i], u[i + 1]]
        }
    }

    pub fn terms(&self, u: &[f64], far: FarField) -> OperatorTerms {
        let m = self.last();
        let n1 = (self.grid.n() - 1) as f64;
        let r = self.grid.nodes();
        let mut out = OperatorTerms {
            ur: vec![0.0; m + 1],
            urr: vec![0.0; m + 1],
            d: vec![0.0; m + 1],
            g: vec![0.0; m + 1],
        };
        for i in 0..=m {
            let v = self.triple(u, i, far);
            let ur = if i == 0 { 0.0 } else { self.wr[i][0] * v[0] + self.wr[i][1] * v[1] + self.wr[i][2] * v[2] };
            let urr = self.wrr[i][0] * v[0] + self.wrr[i][1] * v[1] + self.wrr[i][2] * v[2];
            let w2 = 1.0 + ur * ur;
            let d = if i == 0 { self.grid.n() as f64 * urr } else { urr + n1 * w2 * ur / r[i] };
            out.ur[i] = ur;
            out.urr[i] = urr;
            out.d[i] = d;
            out.g[i] = w2 * w2 / d;
        }
        out
    }

    /// Residual `F = u - u_old + dte G(u)` and its tridiagonal Jacobian.
    fn residual_jacobian(&self, u: &[f64], u_old: &[f64], dte: f64, far: FarField) -> (Vec<f64>, [Vec<f64>; 3]) {
        let m = self.last();
        let n1 = (self.grid.n() - 1) as f64;
        let r = self.grid.nodes();
        let terms = self.terms(u, far);
        let mut f = vec![0.0; m + 1];
        let mut lower = vec![0.0; m + 1];
        let mut diag = vec![0.0; m + 1];
        let mut upper = vec![0.0; m + 1];
        for i in 0..=m {
            let (ur, d) = (terms.ur[i], terms.d[i]);
            let w2 = 1.0 + ur * ur;
            f[i] = u[i] - u_old[i] + dte * terms.g[i];
            let dg_durr = -w2 * w2 / (d * d);
            let (dg_dur, curv) = if i == 0 {
                (0.0, self.grid.n() as f64 * dg_durr)
            } else {
                let dd_dur = n1 * (1.0 + 3.0 * ur * ur) / r[i];
                (4.0 * ur * w2 / d + dg_durr * dd_dur, dg_durr)
            };
            let mut c = [0.0; 3];
            for k in 0..3 {
                c[k] = dte * (dg_dur * self.wr[i][k] + curv * self.wrr[i][k]);
            }
            if i == 0 {
                c[2] += c[0];
                c[0] = 0.0;
            }
            if i == m {
                c[0] += c[2];
                c[2] = 0.0;
            }
            lower[i] = c[0];
            diag[i] = 1.0 + c[1];
            upper[i] = c[2];
        }
        if let FarField::Value(value) = far {
            f[m] = u[m] - value;
            lower[m] = 0.0;
            diag[m] = 1.0;
        }
        (f, [lower, diag, upper])
    }

    /// Solve `u - u_old + dte G(u) = 0` by damped Newton from each guess in turn.
    ///
    /// On success every equation node has `H > h_min`.
    pub fn implicit_solve(
        &self,
        u_old: &[f64],
        guesses: &[Vec<f64>],
        dte: f64,
        far: FarField,
        cfg: &SolverConfig,
        t: f64,
    ) -> Result<Vec<f64>> {
        let mut best = f64::INFINITY;
        let mut floor = None;
        for guess in guesses {
            match self.newton(u_old, guess.clone(), dte, far, cfg) {
                Ok(u) => match self.check_floor(u, far, cfg.h_min) {
                    Ok(u) => return Ok(u),
                    Err(e) => floor = floor.or(Some(e)),
                },
                Err(res) => best = best.min(res),
            }
        }
        Err(floor.unwrap_or(ImcfError::NewtonDiverged { t, residual: best }))
    }

    fn newton(&self, u_old: &[f64], mut u: Vec<f64>, dte: f64, far: FarField, cfg: &SolverConfig) -> std::result::Result<Vec<f64>, f64> {
        let m = self.last();
        if let FarField::Value(v) = far {
            u[m] = v;
        }
        let scale = u_old.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
        let tol = cfg.newton_tol * scale;
        let (mut f, mut jac) = self.residual_jacobian(&u, u_old, dte, far);
        let mut norm = max_abs(&f);
        if !norm.is_finite() {
            return Err(norm);
        }
        for _ in 0..cfg.newton_max_iter {
            if norm <= tol {
                return Ok(u);
            }
            let mut step: Vec<f64> = f.iter().map(|x| -x).collect();
            if !solve_tridiagonal(&jac[0], &jac[1], &jac[2], &mut step) {
                return Err(norm);
            }
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=20 {
                let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + lambda * b).collect();
                let (f2, jac2) = self.residual_jacobian(&trial, u_old, dte, far);
                let n2 = max_abs(&f2);
                if n2.is_finite() && n2 < norm {
                    accepted = Some((trial, f2, jac2, n2));
                    break;
                }
                lambda *= 0.5;
            }
            match accepted {
                Some((trial, f2, jac2, n2)) => {
                    u = trial;
                    f = f2;
                    jac = jac2;
                    norm = n2;
                }
                None => return Err(norm),
            }
        }
        if norm <= tol {
            Ok(u)
        } else {
            Err(norm)
        }
    }

    fn check_floor(&self, u: Vec<f64>, far: FarField, h_min: f64) -> Result<Vec<f64>> {
        let terms = self.terms(&u, far);
        let eqs = match far {
            FarField::Slope(_) => u.len(),
            FarField::Value(_) => u.len() - 1,
        };
        for i in 0..eqs {
            let h = terms.mean_curvature(i);
            if !(h > h_min) {
                return Err(ImcfError::CurvatureFloor { node: i, h });
            }
        }
        Ok(u)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| if b.is_nan() { f64::NAN } else { a.max(b.abs()) })
}

/// Multistep state plus the operator; advances a profile by one implicit step.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub op: RadialOperator,
    pub scheme: TimeScheme,
    /// Previous level `u^{n-1}` and the step that led from it to `u^n`.
    pub prev: Option<(Vec<f64>, f64)>,
}

impl Stepper {
    pub fn new(grid: Arc<RadialGrid>, scheme: TimeScheme) -> Self {
        Self {
            op: RadialOperator::new(grid),
            scheme,
            prev: None,
        }
    }

    /// Largest admissible next step given the growth cap of the multistep scheme.
    pub fn growth_cap(&self) -> f64 {
        match (&self.prev, self.scheme) {
            (Some((_, dt_prev)), TimeScheme::Bdf2) => 2.0 * dt_prev,
            _ => f64::INFINITY,
        }
    }

    /// Compute `u^{n+1}` without touching the history.
    pub fn solve(
        &self,
        u: &[f64],
        t: f64,
        dt: f64,
        far_old: FarField,
        far_new: FarField,
        cfg: &SolverConfig,
    ) -> Result<Vec<f64>> {
        let (u_old, dte) = match (&self.prev, self.scheme) {
            (Some((up, dt_prev)), TimeScheme::Bdf2) => {
                let w = dt / dt_prev;
                let a = (1.0 + 2.0 * w) / (1.0 + w);
                let c_prev = w * w / (1.0 + w);
                let u_old: Vec<f64> = u.iter().zip(up).map(|(&a0, &b0)| ((1.0 + w) * a0 - c_prev * b0) / a).collect();
                (u_old, dt / a)
            }
            _ => (u.to_vec(), dt),
        };
        let mut guesses = Vec::with_capacity(3);
        if let Some((up, dt_prev)) = &self.prev {
            let w = dt / dt_prev;
            guesses.push(u.iter().zip(up).map(|(&a, &b)| a + w * (a - b)).collect());
        }
        let g = self.op.terms(u, far_old).g;
        let explicit: Vec<f64> = u.iter().zip(&g).map(|(&x, &gi)| x - dt * gi).collect();
        match (far_old, far_new) {
            (FarField::Slope(a_old), FarField::Slope(a_new)) if a_old > 0.0 => {
                let s = a_new / a_old;
                guesses.push(u.iter().map(|&x| u[0] - dt * g[0] + s * (x - u[0])).collect());
                guesses.push(explicit);
            }
            _ => {
                guesses.push(explicit);
                guesses.push(u.iter().map(|&x| x - dt * g[0]).collect());
            }
        }
        guesses.push(u.to_vec());
        self.op.implicit_solve(&u_old, &guesses, dte, far_new, cfg, t + dt)
    }

    pub fn commit(&mut self, u_before: Vec<f64>, dt: f64) {
        self.prev = Some((u_before, dt));
    }
}

/// Why [`RadialSim::run_until`] returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Reached,
    Flattened,
    CurvatureFloor,
}

/// Outcome of a run: stop reason, diagnostics rows and sampled states.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub reason: StopReason,
    pub report: DiagnosticsReport,
    pub frames: Vec<RadialProfile>,
    /// Error that ended the run early, when `reason` is `CurvatureFloor`.
    pub failure: Option<ImcfError>,
}

/// A radial simulation: current profile, the sandwiching cone family and the
/// solver state needed to continue deterministically.
#[derive(Debug, Clone)]
pub struct RadialSim {
    pub profile: RadialProfile,
    pub cone: ConeFamily,
    pub config: SolverConfig,
    pub probes: Probes,
    pub history: DiagnosticsReport,
    pub stepper: Stepper,
    /// `u(R, 0)`, the anchor of the shifted Dirichlet condition.
    pub boundary_anchor: f64,
    /// Measured `inf H u` and `sup H u` of the initial datum.
    pub hu_bounds: (f64, f64),
    /// Interpolated times at which `sup_{r <= R/2} |u_r|` first fell below
    /// `flat_eps` and `flat_eps / 2`.
    pub flat_crossings: [Option<f64>; 2],
    pub steps: usize,
    pub(crate) last_flat_sup: f64,
}

/// `sup H u` on every other node, compared against the full grid to detect
/// curvature that grows under refinement (a cone vertex).
fn resolution_ratio(grid: &RadialGrid, u: &[f64]) -> Option<(usize, f64)> {
    let coarse_nodes: Vec<f64> = grid.nodes().iter().step_by(2).copied().collect();
    if coarse_nodes.len() < 4 || grid.len() % 2 == 0 {
        return None;
    }
    let coarse = RadialGrid::new(coarse_nodes, grid.n()).ok()?;
    let uc: Vec<f64> = u.iter().step_by(2).copied().collect();
    let fine_p = RadialProfile::new(Arc::new(grid.clone()), u.to_vec(), 0.0).ok()?;
    let coarse_p = RadialProfile::new(Arc::new(coarse), uc, 0.0).ok()?;
    let hu = |p: &RadialProfile| {
        compute_fields_radial(p)
            .nodes
            .iter()
            .zip(&p.u)
            .enumerate()
            .map(|(i, (g, &x))| (i, g.h * x))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    };
    let (node, fine) = hu(&fine_p);
    let (_, coarse) = hu(&coarse_p);
    Some((node, fine / coarse))
}

/// Largest relative resolution growth of `sup H u` accepted at init.
pub const MAX_RESOLUTION_RATIO: f64 = 1.25;

/// Validate a datum and set up a simulation.
///
/// Checks the cone sandwich `alpha0 r <= u0 <= alpha0 r + kappa`, strict mean
/// convexity, and that `H u` is bounded independently of the resolution.
pub fn init_radial(u0: Vec<f64>, cone: ConeFamily, grid: Arc<RadialGrid>, config: SolverConfig) -> Result<RadialSim> {
    config.validate()?;
    if grid.n() != cone.n {
        return Err(ImcfError::domain("grid and cone dimensions differ"));
    }
    let profile = RadialProfile::new(grid.clone(), u0, 0.0)?;
    let scale = profile.u.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let tol = 1e-12 * scale;
    let mut worst: Option<(usize, f64)> = None;
    for (i, (&r, &u)) in grid.nodes().iter().zip(&profile.u).enumerate() {
        let below = cone.alpha0 * r - u;
        let above = u - cone.alpha0 * r - cone.kappa;
        let v = below.max(above);
        if v > tol && worst.is_none_or(|w| v > w.1) {
            worst = Some((i, v));
        }
    }
    if let Some((node, magnitude)) = worst {
        return Err(ImcfError::SandwichViolation { node, magnitude });
    }
    init_unchecked(profile, cone, config)
}

/// As [`init_radial`] without the sandwich test (used for regularized data).
pub fn init_unchecked(profile: RadialProfile, cone: ConeFamily, config: SolverConfig) -> Result<RadialSim> {
    config.validate()?;
    let grid = profile.grid.clone();
    let fields = compute_fields_radial(&profile);
    let (node, hmin) = fields.min_h();
    if !(hmin > 0.0) {
        return Err(ImcfError::MeanConvexityViolation { node, h: hmin });
    }
    if let Some((node, ratio)) = resolution_ratio(&grid, &profile.u) {
        if ratio > MAX_RESOLUTION_RATIO {
            return Err(ImcfError::UnboundedCurvature { node, ratio });
        }
    }
    let hu: Vec<f64> = fields.nodes.iter().zip(&profile.u).map(|(g, &u)| g.h * u).collect();
    let lo = hu.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = hu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let boundary_anchor = *profile.u.last().unwrap();
    let stepper = Stepper::new(grid, config.scheme);
    let mut sim = RadialSim {
        profile,
        cone,
        config,
        probes: Probes::default(),
        history: DiagnosticsReport::default(),
        stepper,
        boundary_anchor,
        hu_bounds: (lo, hi),
        flat_crossings: [None, None],
        steps: 0,
        last_flat_sup: f64::INFINITY,
    };
    sim.last_flat_sup = sim.flat_sup();
    Ok(sim)
}

impl RadialSim {
    pub fn t(&self) -> f64 {
        self.profile.t
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.profile.grid
    }

    fn far_field(&self, t: f64) -> FarField {
        let a = self.cone.slope_unchecked(t);
        match self.config.bc_kind {
            BoundaryKind::NeumannConeSlope => FarField::Slope(a),
            BoundaryKind::DirichletShift => FarField::Value(self.boundary_anchor + (a - self.cone.alpha0) * self.grid().radius()),
        }
    }

    /// `sup_{r <= R/2} |u_r|`.
    pub fn flat_sup(&self) -> f64 {
        let op = &self.stepper.op;
        let terms = op.terms(&self.profile.u, self.far_field(self.t()));
        let last = self.grid().last_index_within(0.5 * self.grid().radius());
        terms.ur[..=last].iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    /// Largest violation of `alpha(t) r <= u <= alpha(t) r + kappa`.
    pub fn sandwich_violation(&self) -> f64 {
        sandwich_violation(&self.profile, &self.cone)
    }

    fn next_dt(&self, t_end: f64) -> f64 {
        propose_dt(&self.cone, &self.config, self.t(), self.stepper.growth_cap(), t_end)
    }

    /// One implicit step, retrying with halved steps on Newton failure.
    pub fn step(&mut self) -> Result<()> {
        self.step_towards(f64::INFINITY)
    }

    fn step_towards(&mut self, t_end: f64) -> Result<()> {
        let t = self.t();
        let mut dt = self.next_dt(t_end);
        let min_dt = self.config.dt * 1e-6;
        loop {
            if !(dt > 0.0) || t + dt >= self.cone.lifetime() {
                return Err(ImcfError::CurvatureFloor { node: 0, h: 0.0 });
            }
            let far_old = self.far_field(t);
            let far_new = self.far_field(t + dt);
            match self.stepper.solve(&self.profile.u, t, dt, far_old, far_new, &self.config) {
                Ok(u) => {
                    self.accept(u, dt);
                    return Ok(());
                }
                Err(e) if e.is_numerical() && dt * 0.5 >= min_dt => dt *= 0.5,
                Err(e) => return Err(e),
            }
        }
    }

    fn accept(&mut self, u: Vec<f64>, dt: f64) {
        let scale = self.profile.u.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
        let rise = u.iter().zip(&self.profile.u).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        let t_new = self.t() + dt;
        if rise > self.config.newton_tol * scale {
            self.history.violations.push(Violation {
                law: LawId::Descent,
                t: t_new,
                magnitude: rise,
            });
        }
        let before = std::mem::replace(&mut self.profile.u, u);
        self.stepper.commit(before, dt);
        let t_old = self.profile.t;
        self.profile.t = t_new;
        self.steps += 1;
        let sup = self.flat_sup();
        let thresholds = [self.config.flat_eps, 0.5 * self.config.flat_eps];
        for (slot, eps) in self.flat_crossings.iter_mut().zip(thresholds) {
            if slot.is_none() && sup < eps {
                let prev = self.last_flat_sup;
                let s = if prev.is_finite() && prev > sup { ((prev - eps) / (prev - sup)).clamp(0.0, 1.0) } else { 1.0 };
                *slot = Some(t_old + s * dt);
            }
        }
        self.last_flat_sup = sup;
    }

    fn record(&mut self, frames: &mut Vec<RadialProfile>) {
        let row = radial_row(&self.profile, &self.cone, &self.probes);
        self.history.push_row(row);
        frames.push(self.profile.clone());
    }

    /// Step until `t_end` (hit exactly), flattening, or the curvature floor.
    pub fn run_until(&mut self, t_end: f64) -> Result<RunSummary> {
        self.run_inner(t_end, self.config.flat_eps)
    }

    fn run_inner(&mut self, t_end: f64, flat_stop: f64) -> Result<RunSummary> {
        let start_rows = self.history.rows.len();
        let start_viol = self.history.violations.len();
        let mut frames = Vec::new();
        if self.history.rows.last().is_none_or(|r| r.t < self.t()) {
            self.record(&mut frames);
        }
        let mut failure = None;
        let reason = loop {
            if self.last_flat_sup < flat_stop {
                break StopReason::Flattened;
            }
            if self.t() >= t_end {
                break StopReason::Reached;
            }
            match self.step_towards(t_end) {
                Ok(()) => {
                    if self.steps % self.config.sample_every == 0 {
                        self.record(&mut frames);
                    }
                }
                Err(e @ ImcfError::CurvatureFloor { .. }) => {
                    failure = Some(e);
                    break StopReason::CurvatureFloor;
                }
                Err(e @ ImcfError::NewtonDiverged { .. }) => {
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
        };
        if self.history.rows.last().is_none_or(|r| r.t < self.t()) {
            self.record(&mut frames);
        }
        let report = DiagnosticsReport {
            rows: self.history.rows[start_rows..].to_vec(),
            violations: self.history.violations[start_viol..].to_vec(),
        };
        Ok(RunSummary {
            reason,
            report,
            frames,
            failure,
        })
    }
}

/// Step size for the next step: the configured `dt`, capped by the step
/// growth limit, the remaining lifetime and the slope-change limit, and
/// trimmed to land on `t_end`.
pub(crate) fn propose_dt(cone: &ConeFamily, config: &SolverConfig, t: f64, growth_cap: f64, t_end: f64) -> f64 {
    let life = cone.lifetime();
    let mut dt = config.dt.min(growth_cap);
    let a0 = cone.slope_unchecked(t);
    let floor = config.dt * 1e-9;
    while dt > floor {
        let a1 = cone.slope_unchecked(t + dt);
        if t + dt < life && (a0 - a1) <= config.max_slope_change * a0 {
            break;
        }
        dt *= 0.5;
    }
    if t + dt > t_end {
        dt = t_end - t;
    } else if t + 1.5 * dt > t_end {
        // avoid a sliver step before t_end
        dt = 0.5 * (t_end - t);
    }
    dt
}

/// Largest violation of the cone sandwich at the profile's time.
pub fn sandwich_violation(p: &RadialProfile, cone: &ConeFamily) -> f64 {
    let a = cone.slope_unchecked(p.t.min(cone.lifetime()));
    p.grid
        .nodes()
        .iter()
        .zip(&p.u)
        .map(|(&r, &u)| (a * r - u).max(u - a * r - cone.kappa))
        .fold(0.0f64, f64::max)
}

/// Extinction-time estimate from the two flattening crossings.
///
/// Continues the run until `sup_{r <= R/2} |u_r|` drops below `flat_eps / 2`
/// and extrapolates linearly in the threshold: `T_est = 2 t(eps/2) - t(eps)`.
pub fn estimate_extinction(sim: &mut RadialSim) -> Result<f64> {
    if sim.flat_crossings[0].is_none() {
        return Err(ImcfError::NotFlattened);
    }
    if sim.flat_crossings[1].is_none() {
        let half = 0.5 * sim.config.flat_eps;
        sim.run_inner(f64::INFINITY, half)?;
    }
    match sim.flat_crossings {
        [Some(t1), Some(t2)] => Ok(2.0 * t2 - t1),
        [Some(t1), None] => Ok(t1),
        _ => Err(ImcfError::NotFlattened),
    }
}

/// `sqrt(alpha0^2 r^2 + kappa^2)`.
pub fn hyperboloid(alpha0: f64, kappa: f64) -> impl Fn(f64) -> f64 {
    move |r| (alpha0 * alpha0 * r * r + kappa * kappa).sqrt()
}

/// Smoothed cone `alpha0 sqrt(r^2 + s^2) + kappa/2` with `s = kappa/(2 alpha0)`;
/// sits halfway between the two cones at infinity.
pub fn cone_smooth(alpha0: f64, kappa: f64) -> impl Fn(f64) -> f64 {
    let s = 0.5 * kappa / alpha0;
    move |r| alpha0 * (r * r + s * s).sqrt() + 0.5 * kappa
}

/// Trajectories of the regularized data `u0 + eps (r^2 + 1)`, sampled at
/// common times, with the largest ordering defect found.
#[derive(Debug, Clone)]
pub struct EpsilonStudy {
    pub eps: Vec<f64>,
    pub times: Vec<f64>,
    /// `trajectories[k][j]` is the state for `eps[k]` at `times[j]`.
    pub trajectories: Vec<Vec<RadialProfile>>,
    /// Largest `u_{eps1} - u_{eps2}` over nodes and times for `eps1 < eps2`.
    pub ordering_defect: f64,
}

/// Tolerance above which an ordering defect is a scheme-monotonicity defect.
pub const ORDERING_TOLERANCE: f64 = 1e-8;

/// Evolve `u0 + eps (r^2 + 1)` for each `eps` with shifted Dirichlet data.
pub fn epsilon_regularization_study(
    u0: &[f64],
    cone: ConeFamily,
    grid: Arc<RadialGrid>,
    config: &SolverConfig,
    eps_list: &[f64],
    times: &[f64],
) -> Result<EpsilonStudy> {
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|&e| e < 0.0) {
        return Err(ImcfError::domain("eps values must be non-negative and strictly decreasing"));
    }
    let mut cfg = config.clone();
    cfg.bc_kind = BoundaryKind::DirichletShift;
    let mut trajectories = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let u: Vec<f64> = grid.nodes().iter().zip(u0).map(|(&r, &u)| u + eps * (r * r + 1.0)).collect();
        let profile = RadialProfile::new(grid.clone(), u, 0.0)?;
        let mut sim = init_unchecked(profile, cone, cfg.clone())?;
        let mut states = Vec::with_capacity(times.len());
        for &t in times {
            let out = sim.run_until(t)?;
            if out.reason != StopReason::Reached {
                return Err(out.failure.unwrap_or(ImcfError::NotFlattened));
            }
            states.push(sim.profile.clone());
        }
        trajectories.push(states);
    }
    let mut defect = 0.0f64;
    for k in 1..trajectories.len() {
        // eps[k] < eps[k-1]
        for (small, big) in trajectories[k].iter().zip(&trajectories[k - 1]) {
            for (a, b) in small.u.iter().zip(&big.u) {
                defect = defect.max(a - b);
            }
        }
    }
    Ok(EpsilonStudy {
        eps: eps_list.to_vec(),
        times: times.to_vec(),
        trajectories,
        ordering_defect: defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize, alpha0: f64, kappa: f64, radius: f64, cells: usize) -> (ConeFamily, Arc<RadialGrid>) {
        let cone = ConeFamily::new(n, alpha0, kappa).unwrap();
        let grid = Arc::new(RadialGrid::stretched(radius, cells, 4.0, n).unwrap());
        (cone, grid)
    }

    #[test]
    fn jacobian_matches_differences() {
        let grid = Arc::new(RadialGrid::stretched(5.0, 40, 1.0, 2).unwrap());
        let op = RadialOperator::new(grid.clone());
        let u: Vec<f64> = grid.nodes().iter().map(|&r| (r * r + 0.3).sqrt()).collect();
        let far = FarField::Slope(0.9);
        let (_, jac) = op.residual_jacobian(&u, &u, 0.01, far);
        for j in [0usize, 1, 7, 39, 40] {
            let eps = 1e-6;
            let (mut up, mut dn) = (u.clone(), u.clone());
            up[j] += eps;
            dn[j] -= eps;
            let (f1, _) = op.residual_jacobian(&up, &u, 0.01, far);
            let (f0, _) = op.residual_jacobian(&dn, &u, 0.01, far);
            for i in j.saturating_sub(1)..=(j + 1).min(40) {
                let fd = (f1[i] - f0[i]) / (2.0 * eps);
                let an = if i + 1 == j {
                    jac[2][i]
                } else if i == j {
                    jac[1][i]
                } else {
                    jac[0][i]
                };
                assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "i={i} j={j} fd={fd} an={an}");
            }
        }
    }

    #[test]
    fn rejects_bad_data() {
        let (cone, grid) = setup(2, 1.0, 0.1, 20.0, 200);
        let cfg = SolverConfig::default();
        let shifted: Vec<f64> = grid.nodes().iter().map(|&r| r + 0.2).collect();
        assert!(matches!(
            init_radial(shifted, cone, grid.clone(), cfg.clone()),
            Err(ImcfError::SandwichViolation { .. })
        ));
        let vertex: Vec<f64> = grid.nodes().iter().map(|&r| r + 0.1).collect();
        assert!(matches!(
            init_radial(vertex, cone, grid.clone(), cfg.clone()),
            Err(ImcfError::UnboundedCurvature { .. })
        ));
        let flat = vec![0.1; grid.len()];
        let flat_cone = ConeFamily::new(2, 1e-9, 0.1).unwrap();
        assert!(matches!(
            init_radial(flat, flat_cone, grid.clone(), cfg),
            Err(ImcfError::MeanConvexityViolation { .. })
        ));
    }

    #[test]
    fn hyperboloid_is_accepted() {
        let (cone, grid) = setup(2, 1.0, 0.1, 20.0, 400);
        let u0 = grid.nodes().iter().map(|&r| hyperboloid(1.0, 0.1)(r)).collect();
        let sim = init_radial(u0, cone, grid, SolverConfig::default()).unwrap();
        assert!((sim.hu_bounds.1 - 2.0).abs() < 1e-2, "{:?}", sim.hu_bounds);
    }

    #[test]
    fn steps_descend_and_stay_sandwiched() {
        let (cone, grid) = setup(2, 1.0, 0.1, 20.0, 400);
        let u0 = grid.nodes().iter().map(|&r| hyperboloid(1.0, 0.1)(r)).collect();
        let mut sim = init_radial(u0, cone, grid, SolverConfig::default()).unwrap();
        let out = sim.run_until(0.1).unwrap();
        assert_eq!(out.reason, StopReason::Reached);
        assert_eq!(sim.t(), 0.1);
        assert!(out.report.violations.is_empty());
        assert!(sim.sandwich_violation() < 1e-3);
    }

    #[test]
    fn dirichlet_and_neumann_agree_inside() {
        let (cone, grid) = setup(2, 1.0, 0.1, 40.0, 800);
        let u0: Vec<f64> = grid.nodes().iter().map(|&r| hyperboloid(1.0, 0.1)(r)).collect();
        let mut a = init_radial(u0.clone(), cone, grid.clone(), SolverConfig::default()).unwrap();
        let cfg = SolverConfig {
            bc_kind: BoundaryKind::DirichletShift,
            ..SolverConfig::default()
        };
        let mut b = init_radial(u0, cone, grid.clone(), cfg).unwrap();
        a.run_until(0.1).unwrap();
        b.run_until(0.1).unwrap();
        let i = grid.last_index_within(10.0);
        let diff = (0..=i).map(|k| (a.profile.u[k] - b.profile.u[k]).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-2, "{diff}");
    }
}
