//! Closed-form solutions of the flow: the translating-vertex cone family,
//! spheres expanding by the flow, and the family of balls whose union is the
//! complement of a cone's subgraph.
//!
//! Everything here is a pure function of small value types and doubles as the
//! oracle layer for the solvers.

use serde::{Deserialize, Serialize};

use crate::error::{ImcfError, Result};

/// Slope below which integration of the slope ODE is stopped; the `1/alpha`
/// term makes the right-hand side singular at zero.
pub const SLOPE_GUARD: f64 = 1e-8;

/// Cone solutions `u(r, t) = alpha(t) r + kappa` with initial slope `alpha0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeFamily {
    pub n: usize,
    pub alpha0: f64,
    pub kappa: f64,
}

impl ConeFamily {
    pub fn new(n: usize, alpha0: f64, kappa: f64) -> Result<Self> {
        if n < 2 {
            return Err(ImcfError::domain(format!("dimension n = {n} must be at least 2")));
        }
        if !(alpha0 > 0.0 && alpha0.is_finite()) {
            return Err(ImcfError::domain(format!("initial slope {alpha0} must be positive")));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(ImcfError::domain(format!("offset kappa = {kappa} must be non-negative")));
        }
        Ok(Self { n, alpha0, kappa })
    }

    fn nm1(&self) -> f64 {
        (self.n - 1) as f64
    }

    /// Time at which the cone becomes a flat plane.
    pub fn lifetime(&self) -> f64 {
        0.5 * self.nm1() * (self.alpha0 * self.alpha0).ln_1p()
    }

    /// Same lifetime, written through the initial value of `gamma`.
    pub fn lifetime_from_gamma(&self) -> f64 {
        let (gamma0, _) = self.gamma_beta_unchecked(0.0);
        0.5 * self.nm1() * (self.nm1() / (self.nm1() - gamma0)).ln()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let life = self.lifetime();
        // one ulp-scale of slack so that t = T computed elsewhere is accepted
        if !(t >= 0.0 && t <= life * (1.0 + 4.0 * f64::EPSILON)) {
            return Err(ImcfError::domain(format!("time {t} outside [0, {life}]")));
        }
        Ok(())
    }

    /// Closed-form slope `alpha(t)`.
    pub fn slope(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.slope_unchecked(t))
    }

    pub(crate) fn slope_unchecked(&self, t: f64) -> f64 {
        let a2 = self.alpha0 * self.alpha0;
        // (1 + a0^2) e^{-2t/(n-1)} - 1, written to keep precision as t -> T
        let s = (1.0 + a2) * (-2.0 * t / self.nm1()).exp_m1() + a2;
        s.max(0.0).sqrt()
    }

    /// `(gamma(t), beta(t))` with `beta = 1/(1 + alpha^2)` and `gamma = (n-1)(1 - beta)`.
    pub fn gamma_beta(&self, t: f64) -> Result<(f64, f64)> {
        self.check_time(t)?;
        Ok(self.gamma_beta_unchecked(t))
    }

    fn gamma_beta_unchecked(&self, t: f64) -> (f64, f64) {
        let a2 = self.alpha0 * self.alpha0;
        let beta0 = 1.0 / (1.0 + a2);
        let gamma0 = self.nm1() * a2 / (1.0 + a2);
        let grow = (2.0 * t / self.nm1()).exp();
        let beta = beta0 * grow;
        let gamma = self.nm1() * (1.0 - (1.0 - gamma0 / self.nm1()) * grow);
        (gamma.max(0.0), beta.min(1.0))
    }

    /// `gamma(t)`, the value of `v = <F^,nu> H` on the cone.
    pub fn gamma(&self, t: f64) -> Result<f64> {
        Ok(self.gamma_beta(t)?.0)
    }

    /// Height `alpha(t) r + kappa` of the upper cone.
    pub fn upper(&self, r: f64, t: f64) -> Result<f64> {
        Ok(self.slope(t)? * r + self.kappa)
    }

    /// Mean curvature of the cone at distance `r` from the axis.
    pub fn mean_curvature(&self, r: f64, t: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(ImcfError::domain("mean curvature of a cone is undefined at the vertex"));
        }
        let a = self.slope(t)?;
        Ok(self.nm1() * a / (r * (1.0 + a * a).sqrt()))
    }

    /// Sharp constant `alpha/(1+alpha^2)` in the support-function bound
    /// `-<F,nu> H >= c` on the cone; the abstract constant of the original
    /// argument is not reproduced.
    pub fn support_constant(&self, t: f64) -> Result<f64> {
        let a = self.slope(t)?;
        Ok(a / (1.0 + a * a))
    }

    /// Right-hand side of the slope ODE `alpha' = -(alpha + 1/alpha)/(n-1)`.
    pub fn slope_rate(&self, alpha: f64) -> f64 {
        -(alpha + 1.0 / alpha) / self.nm1()
    }
}

/// One classical fourth-order Runge-Kutta step for an autonomous system.
pub fn rk4_step<const N: usize>(f: impl Fn(&[f64; N]) -> [f64; N], y: &[f64; N], h: f64) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| -> [f64; N] {
        let mut out = *a;
        for i in 0..N {
            out[i] += s * b[i];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, 0.5 * h));
    let k3 = f(&add(y, &k2, 0.5 * h));
    let k4 = f(&add(y, &k3, h));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// A single RK4 step of the slope ODE, or `None` if a stage leaves `alpha > guard`.
fn slope_step(family: &ConeFamily, alpha: f64, h: f64) -> Option<f64> {
    let f = |a: f64| family.slope_rate(a);
    let k1 = f(alpha);
    let a2 = alpha + 0.5 * h * k1;
    if !(a2 > 0.0) {
        return None;
    }
    let k2 = f(a2);
    let a3 = alpha + 0.5 * h * k2;
    if !(a3 > 0.0) {
        return None;
    }
    let k3 = f(a3);
    let a4 = alpha + h * k3;
    if !(a4 > 0.0) {
        return None;
    }
    let k4 = f(a4);
    let next = alpha + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    (next.is_finite() && next >= SLOPE_GUARD).then_some(next)
}

/// A small fraction of the local time scale `alpha/|alpha'|`; steps longer than this are
/// split so the `1/alpha` singularity stays resolved. Never binds away from
/// the flat limit at the step sizes used in practice.
fn local_step_limit(family: &ConeFamily, alpha: f64) -> f64 {
    0.03 * alpha / family.slope_rate(alpha).abs()
}

/// Bisect the length of a step from `alpha` that lands exactly on the guard.
fn bisect_crossing(family: &ConeFamily, alpha: f64, h: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, h);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match slope_step(family, alpha, mid) {
            Some(_) => lo = mid,
            None => hi = mid,
        }
    }
    lo
}

/// RK4 integration of the slope ODE from 0 to `t` with step `dt`.
///
/// Steps that would resolve the `1/alpha` singularity poorly are split into
/// substeps. If the slope drops below [`SLOPE_GUARD`] before `t`, integration
/// stops and the bisected crossing time is returned as [`ImcfError::BlowDown`].
pub fn integrate_slope_ode(family: &ConeFamily, t: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(ImcfError::domain("step must be positive"));
    }
    if !(t >= 0.0) {
        return Err(ImcfError::domain("time must be non-negative"));
    }
    let mut time = 0.0;
    let mut alpha = family.alpha0;
    while time < t {
        let h = dt.min(t - time);
        let mut done = 0.0;
        while done < h {
            let sub = (h - done).min(local_step_limit(family, alpha));
            match slope_step(family, alpha, sub) {
                Some(next) => alpha = next,
                None => {
                    let s = bisect_crossing(family, alpha, sub);
                    return Err(ImcfError::BlowDown { time: time + done + s });
                }
            }
            done += sub;
        }
        time += h;
        if t - time < 1e-15 * t.max(1.0) {
            break;
        }
    }
    Ok(alpha)
}

/// Time at which the RK4 trajectory of the slope ODE reaches zero.
pub fn slope_crossing_time(family: &ConeFamily, dt: f64) -> Result<f64> {
    match integrate_slope_ode(family, f64::INFINITY, dt) {
        Err(ImcfError::BlowDown { time }) => Ok(time),
        Err(e) => Err(e),
        Ok(_) => unreachable!("integration to infinity cannot end regularly"),
    }
}

/// RK4 integration of the linear `(beta, gamma)` system
/// `beta' = 2 beta/(n-1)`, `gamma' = 2(gamma/(n-1) - 1)` from 0 to `t`.
pub fn integrate_gamma_beta_ode(family: &ConeFamily, t: f64, dt: f64) -> (f64, f64) {
    let nm1 = (family.n - 1) as f64;
    let a2 = family.alpha0 * family.alpha0;
    let mut y = [nm1 * a2 / (1.0 + a2), 1.0 / (1.0 + a2)];
    let f = |y: &[f64; 2]| [2.0 * (y[0] / nm1 - 1.0), 2.0 * y[1] / nm1];
    let mut time = 0.0;
    while time < t {
        let h = dt.min(t - time);
        y = rk4_step(f, &y, h);
        time += h;
    }
    (y[0], y[1])
}

/// Sphere of radius `rho0 e^{t/n}` moving by the flow (normal speed `rho/n`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandingSphere {
    pub center: Vec<f64>,
    pub rho0: f64,
    pub n: usize,
}

impl ExpandingSphere {
    pub fn new(center: Vec<f64>, rho0: f64, n: usize) -> Result<Self> {
        if !(rho0 > 0.0) {
            return Err(ImcfError::domain("sphere radius must be positive"));
        }
        if center.len() != n + 1 {
            return Err(ImcfError::domain("sphere center must live in R^{n+1}"));
        }
        Ok(Self { center, rho0, n })
    }

    pub fn radius(&self, t: f64) -> f64 {
        self.rho0 * (t / self.n as f64).exp()
    }

    /// Height of the lowest point of the sphere above the axis point `|x| = s`,
    /// or `None` if the vertical line through `s` misses the ball.
    pub fn lower_height(&self, s: f64, t: f64) -> Option<f64> {
        let rho = self.radius(t);
        let zc = *self.center.last().unwrap();
        (s.abs() <= rho).then(|| zc - (rho * rho - s * s).sqrt())
    }
}

/// The ball of radius `rho` on the graph axis touching the cone
/// `x_{n+1} = beta |x| + kappa_tilde` from above.
pub fn cone_ball_tangent(beta: f64, kappa_tilde: f64, rho: f64, n: usize) -> Result<ExpandingSphere> {
    if !(beta > 0.0) || !(rho > 0.0) {
        return Err(ImcfError::domain("cone slope and ball radius must be positive"));
    }
    let mut center = vec![0.0; n + 1];
    center[n] = rho * (1.0 + beta * beta).sqrt() + kappa_tilde;
    ExpandingSphere::new(center, rho, n)
}

/// Distance from the axis of the circle along which the tangent ball touches the cone.
pub fn tangency_radius(beta: f64, rho: f64) -> f64 {
    rho * beta / (1.0 + beta * beta).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifetime_closed_forms() {
        let e = std::f64::consts::E;
        let c = ConeFamily::new(3, (e - 1.0).sqrt(), 0.0).unwrap();
        assert!((c.lifetime() - 1.0).abs() < 1e-14);
        let c = ConeFamily::new(2, 3f64.sqrt(), 0.3).unwrap();
        assert!((c.lifetime() - 2f64.ln()).abs() < 1e-14);
        assert!((c.lifetime_from_gamma() - c.lifetime()).abs() < 1e-13);
        let c = ConeFamily::new(2, 1e-9, 0.0).unwrap();
        assert!(c.lifetime() < 1e-17);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ConeFamily::new(2, 0.0, 0.1).is_err());
        assert!(ConeFamily::new(2, -1.0, 0.1).is_err());
        assert!(ConeFamily::new(1, 1.0, 0.1).is_err());
        let c = ConeFamily::new(2, 1.0, 0.1).unwrap();
        assert!(c.slope(-0.1).is_err());
        assert!(c.slope(c.lifetime() + 1e-6).is_err());
        assert!(c.gamma_beta(1.0).is_err());
        assert!(c.mean_curvature(0.0, 0.1).is_err());
    }

    #[test]
    fn slope_endpoints_and_value() {
        let e = std::f64::consts::E;
        let c = ConeFamily::new(3, (e - 1.0).sqrt(), 0.0).unwrap();
        assert_eq!(c.slope(0.0).unwrap(), c.alpha0);
        assert!(c.slope(c.lifetime()).unwrap() < 1e-7);
        let a = c.slope(0.5).unwrap();
        assert!((a - (0.5f64.exp() - 1.0).sqrt()).abs() < 1e-14);
        assert!((a - 0.805_432).abs() < 1e-6);
    }

    #[test]
    fn gamma_beta_values() {
        let c = ConeFamily::new(2, 1.0, 0.0).unwrap();
        let (g, b) = c.gamma_beta(0.0).unwrap();
        assert!((g - 0.5).abs() < 1e-15 && (b - 0.5).abs() < 1e-15);
        let (g, b) = c.gamma_beta(c.lifetime()).unwrap();
        assert!(g.abs() < 1e-14 && (b - 1.0).abs() < 1e-14);
        let (g, _) = c.gamma_beta(0.2).unwrap();
        assert!((g - (1.0 - 0.5 * 0.4f64.exp())).abs() < 1e-15);
        assert!((g - 0.254_09).abs() < 1e-5);
    }

    #[test]
    fn cone_curvature() {
        let c = ConeFamily::new(2, 1.0, 0.0).unwrap();
        let h = c.mean_curvature(1.0, 0.0).unwrap();
        assert!((h - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let h3 = c.mean_curvature(3.0, 0.1).unwrap();
        assert!((h3 - c.mean_curvature(1.0, 0.1).unwrap() / 3.0).abs() < 1e-15);
        assert!(c.mean_curvature(1e12, 0.0).unwrap() < 1e-12);
        assert_eq!(c.mean_curvature(1.0, c.lifetime()).unwrap(), 0.0);
    }

    #[test]
    fn slope_ode_matches_closed_form() {
        let c = ConeFamily::new(2, 1.0, 0.0).unwrap();
        let a = integrate_slope_ode(&c, 0.3, 1e-3).unwrap();
        assert!((a - c.slope(0.3).unwrap()).abs() <= 1e-10);
        assert_eq!(integrate_slope_ode(&c, 0.0, 0.1).unwrap(), 1.0);
        let tc = slope_crossing_time(&c, 1e-3).unwrap();
        assert!((tc - 0.5 * 2f64.ln()).abs() < 1e-8, "crossing {tc}");
    }

    #[test]
    fn slope_ode_reports_blow_down() {
        let c = ConeFamily::new(2, 1.0, 0.0).unwrap();
        match integrate_slope_ode(&c, 1.0, 1e-2) {
            Err(ImcfError::BlowDown { time }) => assert!((time - c.lifetime()).abs() < 1e-8),
            other => panic!("expected blow-down, got {other:?}"),
        }
    }

    #[test]
    fn sphere_radius_values() {
        let s = ExpandingSphere::new(vec![0.0; 3], 1.0, 2).unwrap();
        assert_eq!(s.radius(0.0), 1.0);
        assert!((s.radius(2.0 * 2f64.ln()) - 2.0).abs() < 1e-14);
        // rho' = rho/n by RK4
        let mut y = [1.0];
        for _ in 0..1000 {
            y = rk4_step(|y: &[f64; 1]| [y[0] / 2.0], &y, 1e-3);
        }
        assert!((y[0] - s.radius(1.0)).abs() < 1e-10);
    }

    #[test]
    fn tangent_ball_sits_on_cone() {
        let ball = cone_ball_tangent(1.0, 0.0, 1.0, 2).unwrap();
        // center clearance
        let zc = ball.center[2];
        assert!(zc - 0.0 >= ball.rho0);
        // brute-force the gap between the lower hemisphere and the cone
        let mut best = (f64::INFINITY, 0.0);
        let k = 200_000;
        for i in 0..=k {
            let s = i as f64 / k as f64;
            let gap = ball.lower_height(s, 0.0).unwrap() - s;
            if gap < best.0 {
                best = (gap, s);
            }
        }
        assert!(best.0.abs() < 1e-9);
        assert!((best.1 - tangency_radius(1.0, 1.0)).abs() < 1e-4);
        assert!((tangency_radius(1.0, 1.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }
}
