//! Running every checker over a stored radial trajectory.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::diagnostics::{
    check_descent, check_global_h_bound, check_local_h_bound, check_lower_bound_v, check_plane_convergence,
    check_sandwich, check_starshaped, comparison_test, radial_row, CheckOutcome, LawId, Probes,
};
use crate::error::{ImcfError, Result};
use crate::exact::ConeFamily;
use crate::geometry::{RadialGrid, RadialProfile};
use crate::radial::StopReason;

/// Read the long-format trajectory CSV written by the radial solver
/// (`t,r,u,...`). Rows of one time must be contiguous and every time must
/// use the same radii.
pub fn read_trajectory_csv(text: &str, n: usize) -> Result<Vec<RadialProfile>> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[..3] != ["t", "r", "u"] {
        return Err(ImcfError::Parse {
            line: 1,
            column: 1,
            message: "header must start with `t,r,u`".into(),
        });
    }
    let mut blocks: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut vals = [0.0; 3];
        let mut fields = line.split(',');
        for (k, slot) in vals.iter_mut().enumerate() {
            let field = fields.next().unwrap_or("");
            *slot = field.trim().parse().map_err(|_| ImcfError::Parse {
                line: idx + 1,
                column: line.split(',').take(k).map(|s| s.len() + 1).sum::<usize>() + 1,
                message: format!("expected a number, got `{field}`"),
            })?;
        }
        let [t, r, u] = vals;
        match blocks.last_mut() {
            Some((bt, rs, us)) if *bt == t => {
                rs.push(r);
                us.push(u);
            }
            _ => blocks.push((t, vec![r], vec![u])),
        }
    }
    let Some((_, r0, _)) = blocks.first() else {
        return Err(ImcfError::domain("trajectory has no rows"));
    };
    let grid = Arc::new(RadialGrid::new(r0.clone(), n)?);
    let mut frames = Vec::with_capacity(blocks.len());
    for (t, r, u) in blocks {
        if r != grid.nodes() {
            return Err(ImcfError::domain(format!("frame at t = {t} uses different radii")));
        }
        if frames.last().is_some_and(|p: &RadialProfile| p.t >= t) {
            return Err(ImcfError::domain(format!("frame times must increase (t = {t})")));
        }
        frames.push(RadialProfile::new(grid.clone(), u, t)?);
    }
    Ok(frames)
}

/// Settings of [`verify_trajectory`].
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub probes: Probes,
    /// Ball radius of the local curvature bound.
    pub local_radius: f64,
    /// `(z0, delta)` for the starshapedness check; skipped when absent.
    pub star: Option<(f64, f64)>,
    pub sandwich_tol: f64,
    pub descent_tol: f64,
    /// `delta` of the lower bound on `v`, as a fraction of the lifetime.
    pub lower_delta_fraction: f64,
    pub flat_eps: f64,
    /// Upper trajectory for the comparison check; skipped when absent.
    pub compare_with: Option<Vec<RadialProfile>>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            probes: Probes::default(),
            local_radius: 2.0,
            star: None,
            sandwich_tol: 2e-3,
            descent_tol: 1e-10,
            lower_delta_fraction: 0.1,
            flat_eps: 1e-3,
            compare_with: None,
        }
    }
}

fn skipped(law: LawId, count: usize) -> CheckOutcome {
    let mut out = CheckOutcome::new(law);
    out.skipped = count;
    out
}

/// One outcome per law, in registry order.
pub fn verify_trajectory(frames: &[RadialProfile], cone: &ConeFamily, opts: &VerifyOptions) -> Result<Vec<CheckOutcome>> {
    let rows: Vec<_> = frames.iter().map(|p| radial_row(p, cone, &opts.probes)).collect();
    let radius = frames.first().map_or(1.0, |p| p.grid.radius());
    let mut out = Vec::with_capacity(LawId::ALL.len());
    for law in LawId::ALL {
        let outcome = match law {
            LawId::HAbove => check_global_h_bound(&rows),
            LawId::HLoc => check_local_h_bound(frames, opts.probes.star_center, opts.local_radius)?,
            LawId::Star => match opts.star {
                Some((z0, delta)) => check_starshaped(frames, z0, delta, 1e-8),
                None => skipped(law, frames.len()),
            },
            LawId::VAsymp => crate::diagnostics::check_asymptotic_v(&rows, cone, opts.probes.probe_fraction * radius),
            LawId::VLower => check_lower_bound_v(&rows, cone, opts.lower_delta_fraction * cone.lifetime())?,
            LawId::Compare => match &opts.compare_with {
                Some(upper) => comparison_test(frames, upper)?,
                None => skipped(law, frames.len()),
            },
            LawId::Sandwich => check_sandwich(frames, cone, opts.sandwich_tol),
            LawId::Plane => match (frames.last(), rows.last()) {
                (Some(p), Some(r)) if r.flat_sup < opts.flat_eps => {
                    let m = check_plane_convergence(p, cone.kappa, opts.flat_eps, StopReason::Flattened)?;
                    let mut o = CheckOutcome::new(law);
                    let quarter = 0.25 * p.grid.radius();
                    let slack = (2.0 * opts.flat_eps * quarter - m.deviation)
                        .min(m.h_measured + crate::diagnostics::PLANE_TOL)
                        .min(cone.kappa + crate::diagnostics::PLANE_TOL - m.h_measured);
                    o.observe(p.t, slack);
                    o
                }
                _ => skipped(law, frames.len()),
            },
            LawId::Descent => check_descent(frames, opts.descent_tol),
        };
        out.push(outcome);
    }
    Ok(out)
}

/// `law,status,margin,violations,skipped` lines; status is `pass`, `fail`
/// or `skipped`.
pub fn format_report(outcomes: &[CheckOutcome]) -> String {
    let mut s = String::from("law,status,margin,violations,skipped\n");
    for o in outcomes {
        let evaluated = o.margin.is_finite() || !o.violations.is_empty();
        let status = if !o.passed {
            "fail"
        } else if evaluated {
            "pass"
        } else {
            "skipped"
        };
        let margin = if o.margin.is_finite() { format!("{:.6e}", o.margin) } else { "NaN".into() };
        let _ = writeln!(s, "{},{status},{margin},{},{}", o.law, o.violations.len(), o.skipped);
    }
    s
}
