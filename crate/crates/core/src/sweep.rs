//! Parameter sweeps of the extinction time, run in parallel.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::{parse_config, ModuleKind, RunConfig};
use crate::driver::{build_radial, run_radial};
use crate::error::{ImcfError, Result};
use crate::output::fmt_sci;

pub const SWEEP_HEADER: &str = "param,T_est,T_closed,rel_err,h_measured,max_sandwich_viol";

/// Numeric keys a sweep may vary.
pub const SWEEP_AXES: &[&str] = &[
    "problem.n",
    "problem.alpha0",
    "problem.kappa",
    "grid.radius",
    "grid.cells",
    "grid.stretch",
    "solver.dt",
    "solver.newton_tol",
    "solver.h_min",
    "solver.flat_eps",
    "solver.max_slope_change",
];

/// Worker count from `IMCF_THREADS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("IMCF_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub t_est: f64,
    pub t_closed: f64,
    pub rel_err: f64,
    pub h_measured: f64,
    pub max_sandwich_viol: f64,
    /// Why the run failed, if it did; the numeric fields are NaN then.
    pub error: Option<String>,
}

impl SweepRow {
    pub fn to_csv_line(&self) -> String {
        [self.param, self.t_est, self.t_closed, self.rel_err, self.h_measured, self.max_sandwich_viol]
            .iter()
            .map(|&v| fmt_sci(v))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Template with `axis` set to `value`; the axis must be a numeric key of the
/// configuration.
pub fn with_axis(template: &RunConfig, axis: &str, value: f64) -> Result<RunConfig> {
    let text = template.to_text();
    let mut found = false;
    let mut out = String::new();
    for line in text.lines() {
        if line.split(" = ").next() == Some(axis) {
            found = true;
            if axis == "problem.n" || axis == "grid.cells" {
                let _ = writeln!(out, "{axis} = {value}");
            } else {
                let _ = writeln!(out, "{axis} = {value:?}");
            }
        } else {
            let _ = writeln!(out, "{line}");
        }
    }
    if !found {
        return Err(ImcfError::Config {
            key: axis.to_string(),
            line: 0,
            message: "not a key of the configuration".into(),
        });
    }
    parse_config(&out)
}

fn run_one(template: &RunConfig, axis: &str, value: f64) -> SweepRow {
    let mut row = SweepRow {
        param: value,
        t_est: f64::NAN,
        t_closed: f64::NAN,
        rel_err: f64::NAN,
        h_measured: f64::NAN,
        max_sandwich_viol: f64::NAN,
        error: None,
    };
    let result = (|| -> Result<()> {
        let cfg = with_axis(template, axis, value)?;
        row.t_closed = cfg.cone()?.lifetime();
        let mut sim = build_radial(&cfg)?;
        let out = run_radial(&mut sim, cfg.run.t_end)?;
        row.max_sandwich_viol = out.summary.report.rows.iter().map(|r| r.sandwich_viol).fold(0.0, f64::max);
        let plane = out.plane.ok_or(ImcfError::NotFlattened)?;
        row.h_measured = plane.h_measured;
        let t_est = out.t_est.ok_or(ImcfError::NotFlattened)?;
        row.t_est = t_est;
        row.rel_err = (t_est - row.t_closed).abs() / row.t_closed;
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

/// One run per value, in parallel on at most `threads` workers. Rows come back
/// in the order of `values`; failed runs keep NaN fields and the error text.
pub fn sweep(template: &RunConfig, axis: &str, values: &[f64], threads: usize) -> Result<Vec<SweepRow>> {
    if template.problem.module != ModuleKind::Radial {
        return Err(ImcfError::domain("sweeps use the radial solver"));
    }
    if !SWEEP_AXES.contains(&axis) {
        return Err(ImcfError::Config {
            key: axis.to_string(),
            line: 0,
            message: format!("not a numeric key; choose one of {}", SWEEP_AXES.join(", ")),
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| ImcfError::domain(e.to_string()))?;
    Ok(pool.install(|| values.par_iter().map(|&v| run_one(template, axis, v)).collect()))
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    s
}
