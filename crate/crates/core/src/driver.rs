//! Building simulations from a [`RunConfig`] and running them to the end.

use std::path::Path;
use std::sync::Arc;

use crate::cartesian::{init_2d, quadrupole_datum, RunSummary2D, Sim2D};
use crate::config::{DatumKind, ModuleKind, RunConfig};
use crate::diagnostics::{check_plane_convergence, PlaneMeasurement};
use crate::error::{ImcfError, Result};
use crate::geometry::{GraphState2D, RadialGrid};
use crate::radial::{cone_smooth, estimate_extinction, hyperboloid, init_radial, RadialSim, RunSummary, StopReason};

/// Radial profile `(r, u)` read from a datum file, interpolated linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDatum {
    pub r: Vec<f64>,
    pub u: Vec<f64>,
}

impl TabulatedDatum {
    /// Lines `r,u` with increasing `r` starting at 0; an optional header line
    /// and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Vec::new();
        let mut u = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body.split(',').map(str::trim).collect();
            let parsed = if fields.len() == 2 {
                fields[0].parse::<f64>().ok().zip(fields[1].parse::<f64>().ok())
            } else {
                None
            };
            match parsed {
                Some((a, b)) if a.is_finite() && b.is_finite() => {
                    if r.last().is_some_and(|&last| a <= last) {
                        return Err(ImcfError::Parse {
                            line: idx + 1,
                            column: 1,
                            message: "radii must increase".into(),
                        });
                    }
                    r.push(a);
                    u.push(b);
                }
                _ if r.is_empty() && idx == 0 => continue,
                _ => {
                    return Err(ImcfError::Parse {
                        line: idx + 1,
                        column: 1,
                        message: "expected `r,u`".into(),
                    })
                }
            }
        }
        if r.len() < 2 || r[0] != 0.0 {
            return Err(ImcfError::domain("datum file needs at least two rows and must start at r = 0"));
        }
        Ok(Self { r, u })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ImcfError::domain(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let last = *self.r.last().unwrap();
        if !(0.0..=last).contains(&x) {
            return Err(ImcfError::domain(format!("datum file covers [0, {last}], needed r = {x}")));
        }
        let k = self.r.partition_point(|&v| v <= x).clamp(1, self.r.len() - 1);
        let s = (x - self.r[k - 1]) / (self.r[k] - self.r[k - 1]);
        Ok(self.u[k - 1] + s * (self.u[k] - self.u[k - 1]))
    }
}

pub fn radial_grid(cfg: &RunConfig) -> Result<Arc<RadialGrid>> {
    let g = &cfg.grid;
    let grid = if g.stretch > 0.0 {
        RadialGrid::stretched(g.radius, g.cells, g.stretch, cfg.problem.n)?
    } else {
        RadialGrid::uniform(g.radius, g.cells, cfg.problem.n)?
    };
    Ok(Arc::new(grid))
}

fn radial_fn(cfg: &RunConfig) -> Result<Box<dyn Fn(f64) -> Result<f64>>> {
    let p = &cfg.problem;
    Ok(match p.datum {
        DatumKind::Hyperboloid => {
            let f = hyperboloid(p.alpha0, p.kappa);
            Box::new(move |r| Ok(f(r)))
        }
        DatumKind::ConeSmooth => {
            let f = cone_smooth(p.alpha0, p.kappa);
            Box::new(move |r| Ok(f(r)))
        }
        DatumKind::File => {
            let path = p.datum_file.as_deref().ok_or_else(|| ImcfError::domain("problem.datum_file is not set"))?;
            let table = TabulatedDatum::read(Path::new(path))?;
            Box::new(move |r| table.eval(r))
        }
        DatumKind::Quadrupole => return Err(ImcfError::domain("the quadrupole datum is not rotationally symmetric")),
    })
}

pub fn build_radial(cfg: &RunConfig) -> Result<RadialSim> {
    if cfg.problem.module != ModuleKind::Radial {
        return Err(ImcfError::domain("configuration selects the lattice solver"));
    }
    let cone = cfg.cone()?;
    let grid = radial_grid(cfg)?;
    let f = radial_fn(cfg)?;
    let u0 = grid.nodes().iter().map(|&r| f(r)).collect::<Result<Vec<f64>>>()?;
    let mut sim = init_radial(u0, cone, grid, cfg.solver.clone())?;
    sim.probes = cfg.probes;
    Ok(sim)
}

pub fn build_2d(cfg: &RunConfig) -> Result<Sim2D> {
    if cfg.problem.module != ModuleKind::Grid2d {
        return Err(ImcfError::domain("configuration selects the radial solver"));
    }
    let cone = cfg.cone()?;
    let (l, m) = (cfg.grid.half_width, cfg.grid.m);
    let state = if cfg.problem.datum == DatumKind::Quadrupole {
        GraphState2D::from_fn(l, m, 0.0, quadrupole_datum(cfg.problem.alpha0, cfg.problem.kappa, cfg.problem.delta))?
    } else {
        let f = radial_fn(cfg)?;
        let probe = GraphState2D::from_fn(l, m, 0.0, |_, _| 0.0)?;
        let side = probe.side();
        let mut u = Vec::with_capacity(side * side);
        for j in 0..side {
            for i in 0..side {
                let (x, y) = probe.position(i, j);
                u.push(f(x.hypot(y))?);
            }
        }
        GraphState2D::new(l, m, u, 0.0)?
    };
    let mut sim = init_2d(state.u, cone, l, m, cfg.solver.clone())?;
    sim.probes = cfg.probes;
    Ok(sim)
}

/// End of a radial run: the run summary, plus plane and extinction estimates
/// when the run flattened.
#[derive(Debug, Clone)]
pub struct RadialOutcome {
    pub summary: RunSummary,
    pub plane: Option<PlaneMeasurement>,
    pub t_est: Option<f64>,
}

/// Run to `run.t_end` (or to flattening) and, on flattening, measure the
/// plane and extrapolate the extinction time.
pub fn run_radial(sim: &mut RadialSim, t_end: Option<f64>) -> Result<RadialOutcome> {
    let summary = sim.run_until(t_end.unwrap_or(f64::INFINITY))?;
    let (plane, t_est) = if summary.reason == StopReason::Flattened {
        let plane = check_plane_convergence(&sim.profile, sim.cone.kappa, sim.config.flat_eps, summary.reason)?;
        let mut probe = sim.clone();
        (Some(plane), Some(estimate_extinction(&mut probe)?))
    } else {
        (None, None)
    };
    Ok(RadialOutcome { summary, plane, t_est })
}

pub fn run_2d(sim: &mut Sim2D, t_end: Option<f64>) -> Result<RunSummary2D> {
    sim.run_until(t_end.unwrap_or(f64::INFINITY))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_datum() {
        let d = TabulatedDatum::parse("r,u\n0,1\n1,2 # note\n3,2\n").unwrap();
        assert_eq!(d.eval(0.5).unwrap(), 1.5);
        assert_eq!(d.eval(3.0).unwrap(), 2.0);
        assert!(d.eval(3.5).is_err());
        assert!(TabulatedDatum::parse("0,1\n0,2\n").is_err());
        assert!(TabulatedDatum::parse("0,1\nx\n").is_err());
    }

    #[test]
    fn builds_both_modules() {
        let mut cfg = RunConfig::new(2, 1.0, 0.5, DatumKind::Hyperboloid);
        cfg.grid.cells = 200;
        cfg.grid.radius = 20.0;
        cfg.grid.stretch = 1.0;
        assert_eq!(build_radial(&cfg).unwrap().grid().len(), 201);
        assert!(build_2d(&cfg).is_err());
        cfg.problem.module = ModuleKind::Grid2d;
        cfg.grid.m = 16;
        cfg.grid.half_width = 4.0;
        assert_eq!(build_2d(&cfg).unwrap().state.side(), 33);
        cfg.problem.datum = DatumKind::Quadrupole;
        cfg.problem.delta = 0.05;
        build_2d(&cfg).unwrap();
    }
}
