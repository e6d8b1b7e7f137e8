//! Trajectory checkers for the quantitative laws of the flow.
//!
//! Each checker is a pure function of sampled states (or of the scalar rows
//! extracted from them) and reports violations tagged with a stable [`LawId`].

use serde::{Deserialize, Serialize};

use crate::error::{ImcfError, Result};
use crate::exact::ConeFamily;
use crate::geometry::{compute_fields_radial, RadialProfile};
use crate::radial::{sandwich_violation, StopReason};

/// Registry of checked laws. Identifiers are stable across versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LawId {
    #[serde(rename = "HABOVE")]
    HAbove,
    #[serde(rename = "HLOC")]
    HLoc,
    #[serde(rename = "STAR")]
    Star,
    #[serde(rename = "VASYMP")]
    VAsymp,
    #[serde(rename = "VLOWER")]
    VLower,
    #[serde(rename = "COMPARE")]
    Compare,
    #[serde(rename = "SANDWICH")]
    Sandwich,
    #[serde(rename = "PLANE")]
    Plane,
    #[serde(rename = "DESCENT")]
    Descent,
}

impl LawId {
    pub const ALL: [LawId; 9] = [
        LawId::HAbove,
        LawId::HLoc,
        LawId::Star,
        LawId::VAsymp,
        LawId::VLower,
        LawId::Compare,
        LawId::Sandwich,
        LawId::Plane,
        LawId::Descent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LawId::HAbove => "HABOVE",
            LawId::HLoc => "HLOC",
            LawId::Star => "STAR",
            LawId::VAsymp => "VASYMP",
            LawId::VLower => "VLOWER",
            LawId::Compare => "COMPARE",
            LawId::Sandwich => "SANDWICH",
            LawId::Plane => "PLANE",
            LawId::Descent => "DESCENT",
        }
    }

    /// Name of the checker that owns the law.
    pub fn checker(self) -> &'static str {
        match self {
            LawId::HAbove => "check_global_h_bound",
            LawId::HLoc => "check_local_h_bound",
            LawId::Star => "check_starshaped",
            LawId::VAsymp => "check_asymptotic_v",
            LawId::VLower => "check_lower_bound_v",
            LawId::Compare => "comparison_test",
            LawId::Sandwich => "check_sandwich",
            LawId::Plane => "check_plane_convergence",
            LawId::Descent => "check_descent",
        }
    }

    pub fn parse(s: &str) -> Option<LawId> {
        LawId::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl std::fmt::Display for LawId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub law: LawId,
    pub t: f64,
    pub magnitude: f64,
}

/// Extremal tracked scalars at one time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub sup_hu: f64,
    pub inf_v: f64,
    pub far_v: f64,
    pub gamma_t: f64,
    pub alpha_meas: f64,
    pub min_star: f64,
    pub sandwich_viol: f64,
    pub flat_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub rows: Vec<DiagnosticsRow>,
    pub violations: Vec<Violation>,
}

impl DiagnosticsReport {
    /// Append a row; rows must arrive in increasing time.
    pub fn push_row(&mut self, row: DiagnosticsRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.t < row.t));
        self.rows.push(row);
    }

    /// Time-ordered union of two reports.
    pub fn merge(mut self, other: DiagnosticsReport) -> DiagnosticsReport {
        self.rows.extend(other.rows);
        self.rows.sort_by(|a, b| a.t.total_cmp(&b.t));
        self.rows.dedup_by(|a, b| a.t == b.t);
        self.violations.extend(other.violations);
        self.violations
            .sort_by(|a, b| a.t.total_cmp(&b.t).then(a.law.cmp(&b.law)));
        self
    }
}

/// Where the far-field and starshapedness probes sit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probes {
    /// `r_p = probe_fraction * R`.
    pub probe_fraction: f64,
    /// Height `z0` of the axis point `(0, z0)` for the support function.
    pub star_center: f64,
}

impl Default for Probes {
    fn default() -> Self {
        Self {
            probe_fraction: 0.6,
            star_center: 1.0,
        }
    }
}

/// `H <F - (0, z0), nu>` at every node of a radial profile.
pub fn star_quantity(p: &RadialProfile, z0: f64) -> Vec<f64> {
    let fields = compute_fields_radial(p);
    p.grid
        .nodes()
        .iter()
        .zip(&p.u)
        .zip(&fields.nodes)
        .map(|((&r, &u), g)| g.h * (r * g.du[0] - u + z0) / g.w)
        .collect()
}

/// Scalars of one radial state.
pub fn radial_row(p: &RadialProfile, cone: &ConeFamily, probes: &Probes) -> DiagnosticsRow {
    let fields = compute_fields_radial(p);
    let grid = &p.grid;
    let radius = grid.radius();
    let v = fields.v();
    let ur: Vec<f64> = fields.nodes.iter().map(|g| g.du[0]).collect();
    let half = grid.last_index_within(0.5 * radius);
    let t = p.t.min(cone.lifetime());
    DiagnosticsRow {
        t: p.t,
        sup_hu: fields.nodes.iter().zip(&p.u).map(|(g, &u)| g.h * u).fold(f64::NEG_INFINITY, f64::max),
        inf_v: v.iter().copied().fold(f64::INFINITY, f64::min),
        far_v: grid.interpolate(&v, probes.probe_fraction * radius),
        gamma_t: cone.gamma(t).unwrap_or(0.0),
        alpha_meas: grid.interpolate(&ur, 0.5 * radius),
        min_star: star_quantity(p, probes.star_center).into_iter().fold(f64::INFINITY, f64::min),
        sandwich_viol: sandwich_violation(p, cone),
        flat_sup: ur[..=half].iter().fold(0.0f64, |a, &b| a.max(b.abs())),
    }
}

/// Result of one checker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub law: LawId,
    pub passed: bool,
    /// Smallest slack (bound minus observed) over the checked samples;
    /// negative when violated.
    pub margin: f64,
    pub violations: Vec<Violation>,
    /// Samples excluded by the checker's domain guard.
    pub skipped: usize,
}

impl CheckOutcome {
    pub(crate) fn new(law: LawId) -> Self {
        Self {
            law,
            passed: true,
            margin: f64::INFINITY,
            violations: Vec::new(),
            skipped: 0,
        }
    }

    pub(crate) fn observe(&mut self, t: f64, slack: f64) {
        self.margin = self.margin.min(slack);
        if slack < 0.0 || slack.is_nan() {
            self.passed = false;
            self.violations.push(Violation {
                law: self.law,
                t,
                magnitude: -slack,
            });
        }
    }
}

/// Relative slack of the global bound on `sup H u`.
pub const HABOVE_REL_TOL: f64 = 1e-4;

/// `sup H u` at every sampled time stays below its initial value.
pub fn check_global_h_bound(rows: &[DiagnosticsRow]) -> CheckOutcome {
    let mut out = CheckOutcome::new(LawId::HAbove);
    let Some(first) = rows.first() else { return out };
    let bound = first.sup_hu * (1.0 + HABOVE_REL_TOL);
    for r in rows {
        out.observe(r.t, (bound - r.sup_hu) / first.sup_hu.abs().max(f64::MIN_POSITIVE));
    }
    out
}

/// `sup H u` is nonincreasing from sample to sample within the relative slack.
pub fn check_h_monotone(rows: &[DiagnosticsRow]) -> CheckOutcome {
    let mut out = CheckOutcome::new(LawId::HAbove);
    for w in rows.windows(2) {
        let scale = w[0].sup_hu.abs().max(f64::MIN_POSITIVE);
        out.observe(w[1].t, (w[0].sup_hu * (1.0 + HABOVE_REL_TOL) - w[1].sup_hu) / scale);
    }
    out
}

/// `sup eta H` with `eta = (rho^2 - |F - (0, z0)|^2)_+^2`.
pub fn local_h_sup(p: &RadialProfile, z0: f64, rho: f64) -> f64 {
    let fields = compute_fields_radial(p);
    p.grid
        .nodes()
        .iter()
        .zip(&p.u)
        .zip(&fields.nodes)
        .map(|((&r, &u), g)| {
            let d2 = r * r + (u - z0) * (u - z0);
            let eta = (rho * rho - d2).max(0.0).powi(2);
            eta * g.h
        })
        .fold(0.0f64, f64::max)
}

/// Local bound `sup eta H <= max(C0, 2 n rho^3)` with `C0` from the first state.
pub fn check_local_h_bound(frames: &[RadialProfile], z0: f64, rho: f64) -> Result<CheckOutcome> {
    if !(rho > 1.0) {
        return Err(ImcfError::domain("the local bound needs a ball radius above 1"));
    }
    let mut out = CheckOutcome::new(LawId::HLoc);
    let Some(first) = frames.first() else { return Ok(out) };
    let n = first.grid.n() as f64;
    let bound = local_h_sup(first, z0, rho).max(2.0 * n * rho.powi(3));
    for p in frames {
        out.observe(p.t, bound - local_h_sup(p, z0, rho));
    }
    Ok(out)
}

/// `min H <F - (0, z0), nu> >= delta - tol` at every sampled time.
///
/// Fails immediately (with the initial shortfall) if the first state is not
/// `delta`-starshaped.
pub fn check_starshaped(frames: &[RadialProfile], z0: f64, delta: f64, tol: f64) -> CheckOutcome {
    let mut out = CheckOutcome::new(LawId::Star);
    let Some(first) = frames.first() else { return out };
    let min0 = star_quantity(first, z0).into_iter().fold(f64::INFINITY, f64::min);
    if !(min0 >= delta) {
        out.observe(first.t, min0 - delta);
        return out;
    }
    for p in frames {
        let m = star_quantity(p, z0).into_iter().fold(f64::INFINITY, f64::min);
        out.observe(p.t, m - (delta - tol));
    }
    out
}

/// `|v(r_p, t) - gamma(t)| <= 0.05 gamma(t) + 0.5 / r_p` for `t` in `[0.1 T, 0.8 T]`.
pub fn check_asymptotic_v(rows: &[DiagnosticsRow], cone: &ConeFamily, r_p: f64) -> CheckOutcome {
    let mut out = CheckOutcome::new(LawId::VAsymp);
    let life = cone.lifetime();
    for r in rows {
        if r.t < 0.1 * life || r.t > 0.8 * life {
            out.skipped += 1;
            continue;
        }
        let bound = 0.05 * r.gamma_t + 0.5 / r_p;
        out.observe(r.t, bound - (r.far_v - r.gamma_t).abs());
    }
    out
}

/// `inf v` stays above half of `min(inf v(0), gamma(T - 3 delta))` for
/// `t <= T - 3 delta`; later samples are skipped and counted.
pub fn check_lower_bound_v(rows: &[DiagnosticsRow], cone: &ConeFamily, delta: f64) -> Result<CheckOutcome> {
    let life = cone.lifetime();
    let horizon = life - 3.0 * delta;
    if !(delta > 0.0 && horizon > 0.0) {
        return Err(ImcfError::domain("delta must satisfy 0 < 3 delta < T"));
    }
    let mut out = CheckOutcome::new(LawId::VLower);
    let Some(first) = rows.first() else { return Ok(out) };
    let floor = 0.5 * first.inf_v.min(cone.gamma(horizon)?);
    for r in rows {
        if r.t > horizon {
            out.skipped += 1;
            continue;
        }
        out.observe(r.t, r.inf_v - floor);
    }
    Ok(out)
}

/// Ordering tolerance of the comparison test.
pub const COMPARE_TOL: f64 = 1e-8;

/// `u_A <= u_B + 1e-8` at every common sample. Frames are paired by index and
/// must share times and grids.
pub fn comparison_test(a: &[RadialProfile], b: &[RadialProfile]) -> Result<CheckOutcome> {
    if a.len() != b.len() {
        return Err(ImcfError::domain("trajectories have different sample counts"));
    }
    let mut out = CheckOutcome::new(LawId::Compare);
    for (pa, pb) in a.iter().zip(b) {
        if pa.t != pb.t || pa.u.len() != pb.u.len() {
            return Err(ImcfError::domain("trajectories are sampled differently"));
        }
        let worst = pa.u.iter().zip(&pb.u).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max);
        out.observe(pa.t, COMPARE_TOL - worst);
    }
    Ok(out)
}

/// Sandwich violation at each sampled time below `tol`.
pub fn check_sandwich(frames: &[RadialProfile], cone: &ConeFamily, tol: f64) -> CheckOutcome {
    let mut out = CheckOutcome::new(LawId::Sandwich);
    for p in frames {
        out.observe(p.t, tol - sandwich_violation(p, cone));
    }
    out
}

/// Heights never increase between consecutive samples by more than `tol`.
pub fn check_descent(frames: &[RadialProfile], tol: f64) -> CheckOutcome {
    let mut out = CheckOutcome::new(LawId::Descent);
    for w in frames.windows(2) {
        let rise = w[1].u.iter().zip(&w[0].u).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
        let scale = w[0].u.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
        out.observe(w[1].t, tol * scale - rise);
    }
    out
}

/// Measured limit plane of a flattened run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneMeasurement {
    /// Mean of `u` over `r <= R/4`.
    pub h_measured: f64,
    /// `sup_{r <= R/4} |u - h_measured|`.
    pub deviation: f64,
    pub passed: bool,
}

/// Height tolerance of the plane check.
pub const PLANE_TOL: f64 = 1e-3;

/// Plane convergence of a flattened run: `h_measured in [-tol, kappa + tol]`
/// and deviation at most `2 flat_eps R / 4`.
pub fn check_plane_convergence(p: &RadialProfile, kappa: f64, flat_eps: f64, reason: StopReason) -> Result<PlaneMeasurement> {
    if reason != StopReason::Flattened {
        return Err(ImcfError::NotFlattened);
    }
    let grid = &p.grid;
    let quarter = 0.25 * grid.radius();
    let last = grid.last_index_within(quarter);
    let r = grid.nodes();
    let mut integral = 0.0;
    for i in 0..last {
        integral += 0.5 * (p.u[i] + p.u[i + 1]) * (r[i + 1] - r[i]);
    }
    let h_measured = integral / r[last];
    let deviation = p.u[..=last].iter().fold(0.0f64, |a, &u| a.max((u - h_measured).abs()));
    let passed = h_measured >= -PLANE_TOL && h_measured <= kappa + PLANE_TOL && deviation <= 2.0 * flat_eps * quarter;
    Ok(PlaneMeasurement {
        h_measured,
        deviation,
        passed,
    })
}
