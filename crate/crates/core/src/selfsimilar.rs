//! Self-similar expanding solutions `u(x, t) = e^{lambda t} U(e^{-lambda t} x)`.
//!
//! The radial profile solves
//! `U'' + (n-1)(1+U'^2) U'/r - (1+U'^2)^2 / (lambda (r U' - U)) = 0` with
//! `U(0) = kappa < 0`, `U'(0) = 0`. The problem is an initial value problem, so
//! the profile is obtained by shooting outward from a two-term series at a small
//! radius. Far out the equation is stiff (perturbations of the growth balance
//! relax at a rate growing like `U'^2 / r`), and the integrator is the
//! three-stage Radau IIA collocation method with step-doubling error control.

use std::sync::Arc;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{ImcfError, Result};
use crate::geometry::RadialGrid;
use crate::radial::{FarField, SolverConfig, Stepper, TimeScheme};

/// Relative tolerance of the shooting integration.
pub const SHOOT_RTOL: f64 = 1e-10;
/// `|U'|` beyond which the profile is declared to blow up.
pub const SLOPE_GUARD: f64 = 1e100;
/// Largest admissible change of `r U'/U` over the last decade before `r_max`.
pub const FLUX_VARIATION_TOL: f64 = 5e-3;

const SQ6: f64 = 2.449_489_742_783_178;

/// Radau IIA nodes and coefficients (order 5).
const RC: [f64; 3] = [(4.0 - SQ6) / 10.0, (4.0 + SQ6) / 10.0, 1.0];
const RA: [[f64; 3]; 3] = [
    [(88.0 - 7.0 * SQ6) / 360.0, (296.0 - 169.0 * SQ6) / 1800.0, (-2.0 + 3.0 * SQ6) / 225.0],
    [(296.0 + 169.0 * SQ6) / 1800.0, (88.0 + 7.0 * SQ6) / 360.0, (-2.0 - 3.0 * SQ6) / 225.0],
    [(16.0 - SQ6) / 36.0, (16.0 + SQ6) / 36.0, 1.0 / 9.0],
];

type State = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub r: f64,
    pub u: f64,
    pub ur: f64,
}

impl ProfileSample {
    /// `r U' / U`, whose limit is the growth exponent.
    pub fn flux_ratio(&self) -> f64 {
        self.r * self.ur / self.u
    }
}

/// Profile equation data `(lambda, kappa, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileEquation {
    pub lambda: f64,
    pub kappa: f64,
    pub n: usize,
}

impl ProfileEquation {
    pub fn new(lambda: f64, kappa: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(ImcfError::domain(format!("dimension n = {n} must be at least 2")));
        }
        let nm1 = (n - 1) as f64;
        if !(lambda.is_finite() && lambda * nm1 > 1.0) {
            return Err(ImcfError::domain(format!("lambda = {lambda} must exceed 1/(n-1) = {}", 1.0 / nm1)));
        }
        if !(kappa.is_finite() && kappa < 0.0) {
            return Err(ImcfError::domain(format!("kappa = {kappa} must be negative")));
        }
        Ok(Self { lambda, kappa, n })
    }

    fn nm1(&self) -> f64 {
        (self.n - 1) as f64
    }

    /// Growth exponent `lambda (n-1) / ((n-1) lambda - 1)`.
    pub fn q_target(&self) -> f64 {
        flux_exponent_formula(self.lambda, self.n)
    }

    /// `U''(0) = 1 / (n lambda |kappa|)`.
    pub fn series_curvature(&self) -> f64 {
        1.0 / (self.n as f64 * self.lambda * self.kappa.abs())
    }

    pub fn series_radius(&self) -> f64 {
        1e-4 * self.kappa.abs()
    }

    /// Two-term expansion about the origin.
    pub fn series(&self, r: f64) -> ProfileSample {
        let u2 = self.series_curvature();
        ProfileSample { r, u: self.kappa + 0.5 * u2 * r * r, ur: u2 * r }
    }

    /// `U''` from the profile equation.
    pub fn second_derivative(&self, r: f64, u: f64, p: f64) -> f64 {
        let w2 = 1.0 + p * p;
        let d = r * p - u;
        let l = self.lambda * self.nm1();
        w2 * (r + r * p * p * (1.0 - l) + l * p * u) / (self.lambda * d * r)
    }

    fn rhs(&self, r: f64, y: State) -> State {
        [y[1], self.second_derivative(r, y[0], y[1])]
    }

    fn jacobian(&self, r: f64, y: State) -> [[f64; 2]; 2] {
        let (u, p) = (y[0], y[1]);
        let w2 = 1.0 + p * p;
        let d = r * p - u;
        let l = self.lambda;
        let df_du = w2 * w2 / (l * d * d);
        let df_dp = 4.0 * p * w2 / (l * d) - w2 * w2 * r / (l * d * d) - self.nm1() * (1.0 + 3.0 * p * p) / r;
        [[0.0, 1.0], [df_du, df_dp]]
    }

    /// One Radau IIA step; `None` when the stage equations do not converge or
    /// leave the region `r U' - U > 0`.
    fn radau_step(&self, r: f64, y: State, h: f64, scale: State) -> Option<State> {
        let mut z = SVector::<f64, 6>::zeros();
        for _ in 0..12 {
            let mut g = SVector::<f64, 6>::zeros();
            let mut jm = SMatrix::<f64, 6, 6>::identity();
            let mut fs = [[0.0; 2]; 3];
            let mut js = [[[0.0; 2]; 2]; 3];
            for j in 0..3 {
                let yj = [y[0] + z[2 * j], y[1] + z[2 * j + 1]];
                let rj = r + RC[j] * h;
                if rj * yj[1] - yj[0] <= 0.0 {
                    return None;
                }
                fs[j] = self.rhs(rj, yj);
                js[j] = self.jacobian(rj, yj);
            }
            for i in 0..3 {
                for c in 0..2 {
                    let mut s = z[2 * i + c];
                    for j in 0..3 {
                        s -= h * RA[i][j] * fs[j][c];
                    }
                    g[2 * i + c] = s;
                }
                for j in 0..3 {
                    for c in 0..2 {
                        for d in 0..2 {
                            jm[(2 * i + c, 2 * j + d)] -= h * RA[i][j] * js[j][c][d];
                        }
                    }
                }
            }
            let delta = jm.lu().solve(&g)?;
            z -= delta;
            if !z.iter().all(|v| v.is_finite()) {
                return None;
            }
            let conv = (0..6).map(|k| delta[k].abs() / scale[k % 2]).fold(0.0, f64::max);
            if conv <= 1e-3 {
                let out = [y[0] + z[4], y[1] + z[5]];
                return ((r + h) * out[1] - out[0] > 0.0).then_some(out);
            }
        }
        None
    }

    /// Integrate from the series start through the sorted `stations`, landing
    /// on each exactly. Every accepted step is returned when `record` is set,
    /// otherwise only the stations.
    pub fn integrate(&self, stations: &[f64], record: bool) -> Result<Vec<ProfileSample>> {
        let r0 = self.series_radius();
        let start = self.series(r0);
        let mut out = Vec::new();
        if record {
            out.push(start);
        }
        let mut r = r0;
        let mut y = [start.u, start.ur];
        let mut h = 0.1 * r0;
        let mut next = 0;
        while next < stations.len() && stations[next] <= r0 {
            out.push(self.series(stations[next]));
            next += 1;
        }
        while next < stations.len() {
            let target = stations[next];
            let last = h >= target - r;
            let step = if last { target - r } else { h };
            let scale = [SHOOT_RTOL * y[0].abs() + SHOOT_RTOL * self.kappa.abs(), SHOOT_RTOL * y[1].abs() + SHOOT_RTOL];
            let full = self.radau_step(r, y, step, scale);
            let half = self
                .radau_step(r, y, 0.5 * step, scale)
                .and_then(|ym| self.radau_step(r + 0.5 * step, ym, 0.5 * step, scale));
            let accepted = match (full, half) {
                (Some(a), Some(b)) => {
                    let err = (0..2).map(|k| (b[k] - a[k]).abs() / (31.0 * scale[k])).fold(0.0, f64::max);
                    let factor = if err > 0.0 { (0.9 * err.powf(-1.0 / 6.0)).clamp(0.2, 4.0) } else { 4.0 };
                    if err <= 1.0 {
                        if !last || factor < 1.0 {
                            h = step * factor;
                        }
                        Some(b)
                    } else {
                        h = step * factor;
                        None
                    }
                }
                _ => {
                    h = 0.25 * step;
                    None
                }
            };
            if let Some(yn) = accepted {
                r = if last { target } else { r + step };
                y = yn;
                let d = r * y[1] - y[0];
                if d <= 0.0 {
                    return Err(ImcfError::SeriesStartInvalid { denominator: d });
                }
                if !(y[1].abs() < SLOPE_GUARD && y[0].is_finite()) {
                    return Err(ImcfError::BlowUp { r });
                }
                let s = ProfileSample { r, u: y[0], ur: y[1] };
                if last {
                    out.push(s);
                    next += 1;
                } else if record {
                    out.push(s);
                }
            } else if h < 1e-14 * r.max(r0) {
                return Err(ImcfError::BlowUp { r });
            }
        }
        Ok(out)
    }
}

/// `q = lambda (n-1) / ((n-1) lambda - 1)`.
pub fn flux_exponent_formula(lambda: f64, n: usize) -> f64 {
    let nm1 = (n - 1) as f64;
    lambda * nm1 / (nm1 * lambda - 1.0)
}

/// Shooting solution on `[0, r_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarProfile {
    pub equation: ProfileEquation,
    pub r_max: f64,
    /// Series start followed by every accepted integration step.
    pub samples: Vec<ProfileSample>,
}

impl SelfSimilarProfile {
    pub fn lambda(&self) -> f64 {
        self.equation.lambda
    }

    pub fn kappa(&self) -> f64 {
        self.equation.kappa
    }

    pub fn n(&self) -> usize {
        self.equation.n
    }

    pub fn q_target(&self) -> f64 {
        self.equation.q_target()
    }

    /// Profile values at sorted radii in `[0, r_max]`, obtained by
    /// re-integrating onto them.
    pub fn evaluate(&self, radii: &[f64]) -> Result<Vec<ProfileSample>> {
        if radii.windows(2).any(|w| w[1] < w[0]) || radii.iter().any(|&r| !(0.0..=self.r_max).contains(&r)) {
            return Err(ImcfError::domain("evaluation radii must be sorted and lie in [0, r_max]"));
        }
        let mut uniq: Vec<f64> = radii.to_vec();
        uniq.dedup();
        let vals = self.equation.integrate(&uniq, false)?;
        Ok(radii
            .iter()
            .map(|r| vals[uniq.partition_point(|x| x < r)])
            .collect())
    }

    /// Heights of the evolving solution `e^{lambda t} U(e^{-lambda t} r)`.
    pub fn ansatz(&self, t: f64, radii: &[f64]) -> Result<Vec<f64>> {
        let s = (-self.lambda() * t).exp();
        let scaled: Vec<f64> = radii.iter().map(|r| r * s).collect();
        Ok(self.evaluate(&scaled)?.iter().map(|p| p.u / s).collect())
    }

    /// Smallest `r U' - U` over the samples.
    pub fn min_denominator(&self) -> f64 {
        self.samples.iter().map(|s| s.r * s.ur - s.u).fold(f64::INFINITY, f64::min)
    }

    /// Smallest `U''` over the samples, from the profile equation.
    pub fn min_second_derivative(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| self.equation.second_derivative(s.r, s.u, s.ur))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest relative residual of the divergence form
    /// `(r^{n-1} U'/W)' = r^{n-1} W / (lambda (r U' - U))`, integrated from the
    /// series start and compared at `checkpoints` geometric points.
    pub fn elliptic_residual(&self, checkpoints: usize) -> Result<f64> {
        const GX: [f64; 5] = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        const GW: [f64; 5] = [
            0.236_926_885_056_189,
            0.478_628_670_499_366,
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
        ];
        let eq = &self.equation;
        let r0 = eq.series_radius();
        let m = checkpoints.max(1) * 8;
        let edges: Vec<f64> = (0..=m).map(|k| r0 * (self.r_max / r0).powf(k as f64 / m as f64)).collect();
        let mut pts = Vec::with_capacity(m * 6);
        for w in edges.windows(2) {
            let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            pts.extend(GX.iter().map(|x| mid + half * x));
            pts.push(w[1]);
        }
        let vals = eq.integrate(&pts, false)?;
        let nm1 = eq.n as i32 - 1;
        let flux = |s: &ProfileSample| s.r.powi(nm1) * s.ur / (1.0 + s.ur * s.ur).sqrt();
        let source = |s: &ProfileSample| s.r.powi(nm1) * (1.0 + s.ur * s.ur).sqrt() / (eq.lambda * (s.r * s.ur - s.u));
        let mut integral = flux(&eq.series(r0));
        let mut worst: f64 = 0.0;
        for (k, w) in edges.windows(2).enumerate() {
            let half = 0.5 * (w[1] - w[0]);
            let chunk = &vals[6 * k..6 * k + 6];
            integral += half * (0..5).map(|g| GW[g] * source(&chunk[g])).sum::<f64>();
            if (k + 1) % 8 == 0 {
                let lhs = flux(&chunk[5]);
                worst = worst.max((lhs - integral).abs() / lhs.abs());
            }
        }
        Ok(worst)
    }
}

/// Shoot the profile with `U(0) = kappa` out to `r_max`.
pub fn shoot_profile(lambda: f64, kappa: f64, n: usize, r_max: f64) -> Result<SelfSimilarProfile> {
    let equation = ProfileEquation::new(lambda, kappa, n)?;
    if !(r_max.is_finite() && r_max > equation.series_radius()) {
        return Err(ImcfError::domain(format!("r_max = {r_max} must exceed the series radius")));
    }
    let samples = equation.integrate(&[r_max], true)?;
    Ok(SelfSimilarProfile { equation, r_max, samples })
}

/// Default outer radius `1e4 |kappa|`.
pub fn default_r_max(kappa: f64) -> f64 {
    1e4 * kappa.abs()
}

/// Limit of `r U'/U`, extrapolated from `r_max/4, r_max/2, r_max` by the
/// Aitken delta-squared formula. Fails with `NotConverged` when the ratio
/// still moves by more than [`FLUX_VARIATION_TOL`] over the last decade.
pub fn flux_exponent(profile: &SelfSimilarProfile) -> Result<f64> {
    let rm = profile.r_max;
    let s = profile.evaluate(&[0.1 * rm, 0.25 * rm, 0.5 * rm, rm])?;
    let f: Vec<f64> = s.iter().map(ProfileSample::flux_ratio).collect();
    let variation = ((f[3] - f[0]) / f[3]).abs();
    if !(variation < FLUX_VARIATION_TOL) {
        return Err(ImcfError::NotConverged { variation });
    }
    let (d1, d2) = (f[2] - f[1], f[3] - f[2]);
    let den = d2 - d1;
    let q = if den != 0.0 && (d2 / d1) > 0.0 && (d2 / d1) < 1.0 { f[3] - d2 * d2 / den } else { f[3] };
    Ok(q)
}

/// Result of evolving a profile with the radial solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub t: f64,
    pub steps: usize,
    /// Largest nodal difference from the exact self-similar solution.
    pub discrepancy: f64,
}

/// Evolve `U` on `[0, radius]` with `cells` uniform cells for `t_total`, with the
/// height at `radius` taken from the exact solution, and compare.
pub fn selfsimilar_roundtrip(
    profile: &SelfSimilarProfile,
    radius: f64,
    cells: usize,
    t_total: f64,
    config: &SolverConfig,
) -> Result<RoundTrip> {
    config.validate()?;
    if !(t_total >= 0.0 && radius <= profile.r_max) {
        return Err(ImcfError::domain("round trip needs t_total >= 0 and radius <= r_max"));
    }
    let n = profile.n();
    let grid = Arc::new(RadialGrid::uniform(radius, cells, n)?);
    let nodes = grid.nodes().to_vec();
    let mut u = profile.ansatz(0.0, &nodes)?;
    let far = |t: f64| -> Result<FarField> { Ok(FarField::Value(profile.ansatz(t, &[radius])?[0])) };
    let mut stepper = Stepper::new(grid, config.scheme);
    let mut t = 0.0;
    let mut steps = 0;
    let mut dt = config.dt;
    while t < t_total {
        let remaining = t_total - t;
        let mut h = dt.min(stepper.growth_cap());
        if h >= remaining || remaining - h < 1e-3 * h {
            h = remaining;
        } else if remaining < 2.0 * h {
            h = 0.5 * remaining;
        }
        let next = stepper.solve(&u, t, h, far(t)?, far(t + h)?, config)?;
        stepper.commit(std::mem::replace(&mut u, next), h);
        t = if h == remaining { t_total } else { t + h };
        steps += 1;
        dt = config.dt;
    }
    let exact = profile.ansatz(t, &nodes)?;
    let discrepancy = u.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(RoundTrip { t, steps, discrepancy })
}

/// Scheme used by the round trip when none is configured.
pub fn roundtrip_config(dt: f64) -> SolverConfig {
    SolverConfig { dt, scheme: TimeScheme::Bdf2, ..SolverConfig::default() }
}
