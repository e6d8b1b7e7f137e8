use imcf_core::config::DatumKind;
use imcf_core::radial::{BoundaryKind, TimeScheme};
use imcf_core::sweep::{sweep, sweep_csv};
use imcf_core::{parse_config, RunConfig};

fn expected() -> RunConfig {
    let mut c = RunConfig::new(3, 1.5, 0.25, DatumKind::ConeSmooth);
    c.grid.radius = 60.0;
    c.grid.cells = 1200;
    c.grid.stretch = 5.0;
    c.solver.dt = 5e-4;
    c.solver.bc_kind = BoundaryKind::DirichletShift;
    c.solver.scheme = TimeScheme::BackwardEuler;
    c.solver.flat_eps = 2e-3;
    c.solver.sample_every = 4;
    c.probes.probe_fraction = 0.5;
    c.run.t_end = Some(0.75);
    c.run.seed = 42;
    c.output.csv = Some("runs/golden #1.csv".into());
    c
}

#[test]
fn golden_file_parses_to_expected_config() {
    let text = include_str!("fixtures/golden.conf");
    let c = parse_config(text).unwrap();
    assert_eq!(c, expected());
    assert_eq!(parse_config(&c.to_text()).unwrap(), c);
    assert_eq!(c.hash(), expected().hash());
    assert_eq!(c.hash().len(), 16);
    let mut other = expected();
    other.run.seed = 43;
    assert_ne!(other.hash(), c.hash());
}

#[test]
fn sweep_reports_closed_form_lifetimes() {
    let mut template = RunConfig::new(2, 1.0, 0.5, DatumKind::Hyperboloid);
    template.grid.radius = 30.0;
    template.grid.cells = 400;
    template.grid.stretch = 4.0;
    let values = [0.5, 1.0, 2.0];
    let rows = sweep(&template, "problem.alpha0", &values, 2).unwrap();
    let closed = [0.5 * 1.25f64.ln(), 0.5 * 2f64.ln(), 0.5 * 5f64.ln()];
    for (row, t) in rows.iter().zip(closed) {
        assert!(row.error.is_none(), "{:?}", row.error);
        assert!((row.t_closed - t).abs() < 1e-15);
        assert!(row.rel_err < 1e-3, "alpha0 = {}: rel_err {}", row.param, row.rel_err);
    }
    let again = sweep(&template, "problem.alpha0", &values, 1).unwrap();
    assert_eq!(sweep_csv(&again), sweep_csv(&rows));
}
