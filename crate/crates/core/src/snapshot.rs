//! Self-describing JSON snapshots of a running simulation.
//!
//! A snapshot carries everything needed to continue a run deterministically:
//! grid, heights, time, solver configuration, the previous level of the
//! two-step scheme and the bookkeeping of flattening detection. Doubles are
//! written with round-trip precision, so a restored run continues bitwise
//! identically.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cartesian::{LatticeOperator, Sim2D};
use crate::config::{fnv1a_hex, ModuleKind, RunConfig};
use crate::diagnostics::{DiagnosticsReport, Probes};
use crate::error::{ImcfError, Result};
use crate::exact::ConeFamily;
use crate::geometry::{GraphState2D, RadialGrid, RadialProfile};
use crate::radial::{RadialSim, SolverConfig, Stepper};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SnapshotGrid {
    Radial { n: usize, nodes: Vec<f64> },
    Lattice { half_width: f64, m: usize },
}

/// Level `u^{n-1}` and the step from it to the stored level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviousLevel {
    pub u: Vec<f64>,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format_version: u32,
    pub module: ModuleKind,
    pub grid: SnapshotGrid,
    pub t: f64,
    pub u: Vec<f64>,
    pub cone: ConeFamily,
    pub config: SolverConfig,
    pub probes: Probes,
    /// Canonical text of the run configuration, when the run came from one.
    pub run_config: Option<String>,
    /// FNV-1a hash over cone, solver configuration, probes and run configuration.
    pub config_hash: String,
    pub steps: usize,
    pub previous: Option<PreviousLevel>,
    pub boundary_anchor: Option<f64>,
    pub hu_bounds: (f64, f64),
    pub flat_crossings: [Option<f64>; 2],
    pub last_flat_sup: Option<f64>,
}

fn compute_hash(cone: &ConeFamily, config: &SolverConfig, probes: &Probes, run_config: Option<&str>) -> String {
    let body = serde_json::to_string(&(cone, config, probes, run_config)).expect("plain data serializes");
    fnv1a_hex(body.as_bytes())
}

fn serr(msg: impl Into<String>) -> ImcfError {
    ImcfError::Snapshot(msg.into())
}

impl Snapshot {
    pub fn from_radial(sim: &RadialSim, run_config: Option<&RunConfig>) -> Self {
        let run_config = run_config.map(RunConfig::to_text);
        Snapshot {
            format_version: SNAPSHOT_VERSION,
            module: ModuleKind::Radial,
            grid: SnapshotGrid::Radial {
                n: sim.grid().n(),
                nodes: sim.grid().nodes().to_vec(),
            },
            t: sim.t(),
            u: sim.profile.u.clone(),
            cone: sim.cone,
            config: sim.config.clone(),
            probes: sim.probes,
            config_hash: compute_hash(&sim.cone, &sim.config, &sim.probes, run_config.as_deref()),
            run_config,
            steps: sim.steps,
            previous: sim.stepper.prev.as_ref().map(|(u, dt)| PreviousLevel { u: u.clone(), dt: *dt }),
            boundary_anchor: Some(sim.boundary_anchor),
            hu_bounds: sim.hu_bounds,
            flat_crossings: sim.flat_crossings,
            last_flat_sup: Some(sim.last_flat_sup),
        }
    }

    pub fn from_2d(sim: &Sim2D, run_config: Option<&RunConfig>) -> Self {
        let run_config = run_config.map(RunConfig::to_text);
        Snapshot {
            format_version: SNAPSHOT_VERSION,
            module: ModuleKind::Grid2d,
            grid: SnapshotGrid::Lattice {
                half_width: sim.state.half_width,
                m: sim.state.m,
            },
            t: sim.t(),
            u: sim.state.u.clone(),
            cone: sim.cone,
            config: sim.config.clone(),
            probes: sim.probes,
            config_hash: compute_hash(&sim.cone, &sim.config, &sim.probes, run_config.as_deref()),
            run_config,
            steps: sim.steps,
            previous: sim.prev.as_ref().map(|(u, dt)| PreviousLevel { u: u.clone(), dt: *dt }),
            boundary_anchor: None,
            hu_bounds: sim.hu_bounds,
            flat_crossings: [None, None],
            last_flat_sup: None,
        }
    }

    fn check_finite(&self) -> Result<()> {
        let mut vals = self.u.iter().chain(self.previous.iter().flat_map(|p| p.u.iter()));
        if vals.any(|v| !v.is_finite())
            || !self.t.is_finite()
            || !self.hu_bounds.0.is_finite()
            || !self.hu_bounds.1.is_finite()
            || self.last_flat_sup.is_some_and(|v| !v.is_finite())
        {
            return Err(serr("non-finite values cannot be stored"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.check_finite()?;
        serde_json::to_string_pretty(self).map_err(|e| serr(e.to_string()))
    }

    /// Parse and verify version and configuration hash.
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Snapshot = serde_json::from_str(text).map_err(|e| serr(e.to_string()))?;
        if s.format_version != SNAPSHOT_VERSION {
            return Err(serr(format!("unsupported format version {}", s.format_version)));
        }
        let h = compute_hash(&s.cone, &s.config, &s.probes, s.run_config.as_deref());
        if h != s.config_hash {
            return Err(serr(format!("config hash mismatch: stored {}, computed {h}", s.config_hash)));
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| serr(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| serr(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validated_cone(&self) -> Result<ConeFamily> {
        ConeFamily::new(self.cone.n, self.cone.alpha0, self.cone.kappa)
    }

    fn previous_checked(&self) -> Result<Option<(Vec<f64>, f64)>> {
        match &self.previous {
            Some(p) if p.u.len() != self.u.len() || !(p.dt > 0.0) => Err(serr("previous level does not match the grid")),
            Some(p) => Ok(Some((p.u.clone(), p.dt))),
            None => Ok(None),
        }
    }

    /// Rebuild the radial simulation. The diagnostics history starts empty.
    pub fn restore_radial(&self) -> Result<RadialSim> {
        let SnapshotGrid::Radial { n, nodes } = &self.grid else {
            return Err(serr("snapshot holds a lattice run"));
        };
        self.config.validate()?;
        let cone = self.validated_cone()?;
        let grid = Arc::new(RadialGrid::new(nodes.clone(), *n)?);
        let profile = RadialProfile::new(grid.clone(), self.u.clone(), self.t)?;
        let mut stepper = Stepper::new(grid, self.config.scheme);
        stepper.prev = self.previous_checked()?;
        Ok(RadialSim {
            profile,
            cone,
            config: self.config.clone(),
            probes: self.probes,
            history: DiagnosticsReport::default(),
            stepper,
            boundary_anchor: self.boundary_anchor.ok_or_else(|| serr("missing boundary anchor"))?,
            hu_bounds: self.hu_bounds,
            flat_crossings: self.flat_crossings,
            steps: self.steps,
            last_flat_sup: self.last_flat_sup.ok_or_else(|| serr("missing flattening state"))?,
        })
    }

    /// Rebuild the lattice simulation. The diagnostics history starts empty.
    pub fn restore_2d(&self) -> Result<Sim2D> {
        let SnapshotGrid::Lattice { half_width, m } = self.grid else {
            return Err(serr("snapshot holds a radial run"));
        };
        self.config.validate()?;
        let cone = self.validated_cone()?;
        let state = GraphState2D::new(half_width, m, self.u.clone(), self.t)?;
        Ok(Sim2D {
            state,
            cone,
            config: self.config.clone(),
            probes: self.probes,
            history: DiagnosticsReport::default(),
            op: LatticeOperator::new(half_width, m),
            prev: self.previous_checked()?,
            hu_bounds: self.hu_bounds,
            steps: self.steps,
        })
    }
}
