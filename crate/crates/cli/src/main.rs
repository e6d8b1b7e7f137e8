use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imcf_core::config::{parse_boundary, parse_config, parse_scheme, DatumKind, ModuleKind, RunConfig};
use imcf_core::driver::{build_2d, build_radial, run_2d, run_radial};
use imcf_core::output::{cone_csv, fmt_sci, lattice_csv, radial_csv, selfsim_csv};
use imcf_core::selfsimilar::{default_r_max, flux_exponent, shoot_profile};
use imcf_core::snapshot::Snapshot;
use imcf_core::sweep::{sweep, sweep_csv, worker_count};
use imcf_core::verify::{format_report, read_trajectory_csv, verify_trajectory, VerifyOptions};
use imcf_core::{ConeFamily, ImcfError};

/// Inverse mean curvature flow of entire graphs: exact cones, radial and
/// lattice solvers, self-similar profiles and trajectory checks.
#[derive(Parser)]
#[command(name = "imcf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the cone family: `t,alpha,beta,gamma,T`.
    Cone(ConeArgs),
    /// Evolve a rotationally symmetric datum; long CSV `t,r,u,H,v,omega_nu`.
    Radial(RadialArgs),
    /// Evolve a datum on the square lattice (n = 2); long CSV `t,x1,x2,u,H,v`.
    Grid2d(LatticeArgs),
    /// Shoot a self-similar profile; CSV `r,u,ur,flux_ratio`.
    Selfsim(SelfsimArgs),
    /// Check a radial trajectory CSV against every law.
    Verify(VerifyArgs),
    /// Extinction-time sweep over one numeric configuration key.
    Sweep(SweepArgs),
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ConeArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    alpha0: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    /// Number of equally spaced times on [0, T].
    #[arg(long, default_value_t = 11)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Problem and solver flags shared by the evolution commands. Flags override
/// values read from `--config`.
#[derive(Args, Clone, Default)]
struct ProblemArgs {
    /// Configuration file (`section.key = value`).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// hyperboloid, cone-smooth, quadrupole (lattice only) or file.
    #[arg(long)]
    datum: Option<String>,
    /// `r,u` table used with `--datum file`.
    #[arg(long)]
    datum_file: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    /// End time, or `flat` to run until the inner half flattens.
    #[arg(long)]
    t_end: Option<String>,
    /// neumann or dirichlet.
    #[arg(long)]
    bc: Option<String>,
    /// bdf2 or backward-euler.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    flat_eps: Option<f64>,
    #[arg(long)]
    sample_every: Option<usize>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct RadialArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Outer radius.
    #[arg(long = "R")]
    radius: Option<f64>,
    /// Number of radial cells M (the grid has M + 1 nodes).
    #[arg(long)]
    nodes: Option<usize>,
    /// Geometric stretching toward R; 0 gives a uniform grid.
    #[arg(long)]
    stretch: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a snapshot of the final state here.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Continue from a snapshot instead of starting from the datum.
    #[arg(long)]
    restart: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct LatticeArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Half width of the square [-L, L]^2.
    #[arg(long = "L")]
    half_width: Option<f64>,
    /// Nodes per half side (the lattice is (2m+1) x (2m+1)).
    #[arg(long)]
    m: Option<usize>,
    /// Quadrupole amplitude.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long)]
    restart: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SelfsimArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    kappa: f64,
    /// Outer radius; defaults to 1e4 |kappa|.
    #[arg(long)]
    rmax: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct VerifyArgs {
    /// Trajectory CSV written by `imcf radial`.
    trajectory: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    alpha0: f64,
    #[arg(long)]
    kappa: f64,
    #[arg(long, default_value_t = 0.6)]
    probe_fraction: f64,
    /// Height z0 of the axis point used by the local and starshapedness checks.
    #[arg(long, default_value_t = 1.0)]
    star_center: f64,
    /// Enables the starshapedness check with this delta.
    #[arg(long)]
    star_delta: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    local_radius: f64,
    #[arg(long, default_value_t = 2e-3)]
    sandwich_tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    flat_eps: f64,
    /// Trajectory that must stay above this one (same grid and times).
    #[arg(long)]
    compare: Option<PathBuf>,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long = "R")]
    radius: Option<f64>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    stretch: Option<f64>,
    /// Configuration key to vary, e.g. problem.alpha0.
    #[arg(long)]
    axis: String,
    /// Comma-separated values (may be empty).
    #[arg(long, allow_hyphen_values = true)]
    values: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// How a command failed, mapped to the exit status.
enum Failure {
    /// Exit 1.
    Check(String),
    /// Exit 2.
    Usage(String),
    /// Exit 3.
    Numerical(String),
}

impl From<ImcfError> for Failure {
    fn from(e: ImcfError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn write_out(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Configuration from `--config` (if any) with the flags applied on top.
fn resolve_config(p: &ProblemArgs, module: ModuleKind) -> Result<RunConfig, Failure> {
    let mut cfg = match &p.config {
        Some(path) => parse_config(&read_text(path)?)?,
        None => {
            let missing = |name: &str| usage(format!("--{name} is required without --config"));
            let n = p.n.ok_or_else(|| missing("n"))?;
            let alpha0 = p.alpha0.ok_or_else(|| missing("alpha0"))?;
            let kappa = p.kappa.ok_or_else(|| missing("kappa"))?;
            let mut c = RunConfig::new(n, alpha0, kappa, DatumKind::Hyperboloid);
            c.problem.module = module;
            c
        }
    };
    if p.config.is_some() && cfg.problem.module != module {
        return Err(usage(format!("configuration selects problem.module = {}", cfg.problem.module.as_str())));
    }
    if let Some(v) = p.n {
        cfg.problem.n = v;
    }
    if let Some(v) = p.alpha0 {
        cfg.problem.alpha0 = v;
    }
    if let Some(v) = p.kappa {
        cfg.problem.kappa = v;
    }
    if let Some(d) = &p.datum {
        cfg.problem.datum = DatumKind::parse(d).ok_or_else(|| usage(format!("unknown datum `{d}`")))?;
    }
    if let Some(f) = &p.datum_file {
        cfg.problem.datum_file = Some(f.clone());
    }
    if let Some(v) = p.dt {
        cfg.solver.dt = v;
    }
    if let Some(t) = &p.t_end {
        cfg.run.t_end = if t == "flat" {
            None
        } else {
            Some(t.parse().map_err(|_| usage(format!("--t-end expects a number or `flat`, got `{t}`")))?)
        };
    }
    if let Some(b) = &p.bc {
        cfg.solver.bc_kind = parse_boundary(b).ok_or_else(|| usage(format!("unknown boundary condition `{b}`")))?;
    }
    if let Some(s) = &p.scheme {
        cfg.solver.scheme = parse_scheme(s).ok_or_else(|| usage(format!("unknown scheme `{s}`")))?;
    }
    if let Some(v) = p.flat_eps {
        cfg.solver.flat_eps = v;
    }
    if let Some(v) = p.sample_every {
        cfg.solver.sample_every = v;
    }
    Ok(cfg)
}

/// Re-parse the canonical text so that flag values get the same validation
/// as configuration files.
fn validated(cfg: RunConfig) -> Result<RunConfig, Failure> {
    Ok(parse_config(&cfg.to_text())?)
}

fn cmd_cone(a: ConeArgs) -> CmdResult {
    let cone = ConeFamily::new(a.n, a.alpha0, a.kappa)?;
    write_out(a.out.as_deref(), &cone_csv(&cone, a.samples)?)
}

fn cmd_radial(a: RadialArgs) -> CmdResult {
    let (mut sim, cfg) = match &a.restart {
        Some(path) => {
            let snap = Snapshot::from_json(&read_text(path)?)?;
            let cfg = match &snap.run_config {
                Some(text) => Some(parse_config(text)?),
                None => None,
            };
            (snap.restore_radial()?, cfg)
        }
        None => {
            let mut cfg = resolve_config(&a.problem, ModuleKind::Radial)?;
            if let Some(v) = a.radius {
                cfg.grid.radius = v;
            }
            if let Some(v) = a.nodes {
                cfg.grid.cells = v;
            }
            if let Some(v) = a.stretch {
                cfg.grid.stretch = v;
            }
            let cfg = validated(cfg)?;
            (build_radial(&cfg)?, Some(cfg))
        }
    };
    let t_end = match (&a.problem.t_end, &cfg) {
        (Some(t), _) if t == "flat" => None,
        (Some(t), _) => Some(t.parse::<f64>().map_err(|_| usage(format!("bad --t-end `{t}`")))?),
        (None, Some(c)) => c.run.t_end,
        (None, None) => None,
    };
    let out_path = a.out.clone().or_else(|| cfg.as_ref().and_then(|c| c.output.csv.clone()).map(PathBuf::from));
    let snap_path = a.snapshot.clone().or_else(|| cfg.as_ref().and_then(|c| c.output.snapshot.clone()).map(PathBuf::from));
    let outcome = run_radial(&mut sim, t_end)?;
    write_out(out_path.as_deref(), &radial_csv(&outcome.summary.frames))?;
    if let Some(p) = snap_path {
        Snapshot::from_radial(&sim, cfg.as_ref()).save(&p)?;
    }
    let rows = &outcome.summary.report.rows;
    let max_viol = rows.iter().map(|r| r.sandwich_viol).fold(0.0, f64::max);
    eprintln!("stop: {:?} at t = {} after {} steps", outcome.summary.reason, fmt_sci(sim.t()), sim.steps);
    eprintln!("lifetime T = {}", fmt_sci(sim.cone.lifetime()));
    eprintln!("max sandwich violation = {}", fmt_sci(max_viol));
    if let Some(t) = outcome.t_est {
        eprintln!("T_est = {}", fmt_sci(t));
    }
    if let Some(p) = outcome.plane {
        eprintln!("h_measured = {} deviation = {} passed = {}", fmt_sci(p.h_measured), fmt_sci(p.deviation), p.passed);
    }
    if let Some(e) = &outcome.summary.failure {
        return Err(Failure::Numerical(e.to_string()));
    }
    let violations = &outcome.summary.report.violations;
    if !violations.is_empty() {
        return Err(Failure::Check(format!("{} recorded violations, first {:?}", violations.len(), violations[0])));
    }
    if outcome.plane.is_some_and(|p| !p.passed) {
        return Err(Failure::Check("plane convergence check failed".into()));
    }
    Ok(())
}

fn cmd_grid2d(a: LatticeArgs) -> CmdResult {
    let (mut sim, cfg) = match &a.restart {
        Some(path) => {
            let snap = Snapshot::from_json(&read_text(path)?)?;
            let cfg = match &snap.run_config {
                Some(text) => Some(parse_config(text)?),
                None => None,
            };
            (snap.restore_2d()?, cfg)
        }
        None => {
            let mut problem = a.problem.clone();
            problem.n = problem.n.or(Some(2));
            let mut cfg = resolve_config(&problem, ModuleKind::Grid2d)?;
            if let Some(v) = a.half_width {
                cfg.grid.half_width = v;
            }
            if let Some(v) = a.m {
                cfg.grid.m = v;
            }
            if let Some(v) = a.delta {
                cfg.problem.delta = v;
            }
            if cfg.solver.bc_kind != imcf_core::radial::BoundaryKind::NeumannConeSlope {
                return Err(usage("the lattice solver supports only the neumann edge condition"));
            }
            let cfg = validated(cfg)?;
            (build_2d(&cfg)?, Some(cfg))
        }
    };
    let t_end = match (&a.problem.t_end, &cfg) {
        (Some(t), _) if t == "flat" => None,
        (Some(t), _) => Some(t.parse::<f64>().map_err(|_| usage(format!("bad --t-end `{t}`")))?),
        (None, Some(c)) => c.run.t_end,
        (None, None) => None,
    };
    let out_path = a.out.clone().or_else(|| cfg.as_ref().and_then(|c| c.output.csv.clone()).map(PathBuf::from));
    let snap_path = a.snapshot.clone().or_else(|| cfg.as_ref().and_then(|c| c.output.snapshot.clone()).map(PathBuf::from));
    let summary = run_2d(&mut sim, t_end)?;
    write_out(out_path.as_deref(), &lattice_csv(&summary.frames))?;
    if let Some(p) = snap_path {
        Snapshot::from_2d(&sim, cfg.as_ref()).save(&p)?;
    }
    let max_viol = summary.report.rows.iter().map(|r| r.sandwich_viol).fold(0.0, f64::max);
    eprintln!("stop: {:?} at t = {} after {} steps", summary.reason, fmt_sci(sim.t()), sim.steps);
    eprintln!("max sandwich violation = {}", fmt_sci(max_viol));
    if let Some(e) = &summary.failure {
        return Err(Failure::Numerical(e.to_string()));
    }
    if !summary.report.violations.is_empty() {
        return Err(Failure::Check(format!("{} recorded violations", summary.report.violations.len())));
    }
    Ok(())
}

fn cmd_selfsim(a: SelfsimArgs) -> CmdResult {
    let r_max = a.rmax.unwrap_or_else(|| default_r_max(a.kappa));
    let profile = shoot_profile(a.lambda, a.kappa, a.n, r_max)?;
    write_out(a.out.as_deref(), &selfsim_csv(&profile))?;
    eprintln!("q_target = {}", fmt_sci(profile.q_target()));
    let q = flux_exponent(&profile)?;
    eprintln!("q_est = {}", fmt_sci(q));
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let cone = ConeFamily::new(a.n, a.alpha0, a.kappa)?;
    let frames = read_trajectory_csv(&read_text(&a.trajectory)?, a.n)?;
    let compare_with = match &a.compare {
        Some(p) => Some(read_trajectory_csv(&read_text(p)?, a.n)?),
        None => None,
    };
    if !(0.5..=0.8).contains(&a.probe_fraction) {
        return Err(usage("--probe-fraction must lie in [0.5, 0.8]"));
    }
    let mut opts = VerifyOptions {
        local_radius: a.local_radius,
        star: a.star_delta.map(|d| (a.star_center, d)),
        sandwich_tol: a.sandwich_tol,
        flat_eps: a.flat_eps,
        compare_with,
        ..VerifyOptions::default()
    };
    opts.probes.probe_fraction = a.probe_fraction;
    opts.probes.star_center = a.star_center;
    let outcomes = verify_trajectory(&frames, &cone, &opts)?;
    print!("{}", format_report(&outcomes));
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.law.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("failed: {}", failed.join(", "))))
    }
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let mut cfg = resolve_config(&a.problem, ModuleKind::Radial)?;
    if let Some(v) = a.radius {
        cfg.grid.radius = v;
    }
    if let Some(v) = a.nodes {
        cfg.grid.cells = v;
    }
    if let Some(v) = a.stretch {
        cfg.grid.stretch = v;
    }
    let cfg = validated(cfg)?;
    let values = a
        .values
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| usage(format!("--values: `{s}` is not a number"))))
        .collect::<Result<Vec<f64>, Failure>>()?;
    let rows = sweep(&cfg, &a.axis, &values, worker_count())?;
    for r in &rows {
        if let Some(e) = &r.error {
            eprintln!("{} = {}: {e}", a.axis, r.param);
        }
    }
    write_out(a.out.as_deref(), &sweep_csv(&rows))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Cone(a) => cmd_cone(a),
        Command::Radial(a) => cmd_radial(a),
        Command::Grid2d(a) => cmd_grid2d(a),
        Command::Selfsim(a) => cmd_selfsim(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}
