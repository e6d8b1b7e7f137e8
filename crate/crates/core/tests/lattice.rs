use std::sync::Arc;

use imcf_core::cartesian::{azimuthal_variation, init_2d, quadrupole_datum, Sim2D};
use imcf_core::radial::{hyperboloid, init_radial, SolverConfig};
use imcf_core::{ConeFamily, GraphState2D, RadialGrid, Snapshot};

fn hyperboloid_sim(half_width: f64, m: usize, cone: ConeFamily) -> Sim2D {
    let s = GraphState2D::from_fn(half_width, m, 0.0, |x, y| hyperboloid(1.0, 1.0)(x.hypot(y))).unwrap();
    init_2d(s.u, cone, half_width, m, SolverConfig::default()).unwrap()
}

fn swap_asymmetry(s: &GraphState2D) -> f64 {
    let side = s.side();
    let mut worst = 0.0f64;
    for j in 0..side {
        for i in 0..side {
            worst = worst.max((s.u[s.index(i, j)] - s.u[s.index(j, i)]).abs());
        }
    }
    worst
}

#[test]
fn radial_datum_keeps_its_symmetries() {
    let cone = ConeFamily::new(2, 1.0, 1.0).unwrap();
    let mut sim = hyperboloid_sim(4.0, 16, cone);
    let out = sim.run_until(0.3 * cone.lifetime()).unwrap();
    assert!(out.failure.is_none());
    assert!(swap_asymmetry(&sim.state) < 1e-10);
    let side = sim.state.side();
    let mirror = (0..side * side)
        .map(|k| {
            let (i, j) = (k % side, k / side);
            (sim.state.u[k] - sim.state.u[sim.state.index(side - 1 - i, j)]).abs()
        })
        .fold(0.0, f64::max);
    assert!(mirror < 1e-10);
}

/// Largest lattice-vs-radial height difference on `|x| <= L/2`.
fn radial_mismatch(half_width: f64, m: usize, t: f64, cone: ConeFamily) -> f64 {
    let mut sim = hyperboloid_sim(half_width, m, cone);
    sim.run_until(t).unwrap();
    let grid = Arc::new(RadialGrid::stretched(half_width, 4000, 4.0, 2).unwrap());
    let u0 = grid.nodes().iter().map(|&r| hyperboloid(1.0, 1.0)(r)).collect();
    let mut rs = init_radial(u0, cone, grid.clone(), SolverConfig::default()).unwrap();
    rs.run_until(t).unwrap();
    let side = sim.state.side();
    let mut err = 0.0f64;
    for j in 0..side {
        for i in 0..side {
            let (x, y) = sim.state.position(i, j);
            let r = x.hypot(y);
            if r <= 0.5 * half_width {
                err = err.max((sim.state.u[sim.state.index(i, j)] - grid.interpolate(&rs.profile.u, r)).abs());
            }
        }
    }
    err
}

#[test]
fn lattice_agrees_with_radial_solver_at_second_order() {
    let cone = ConeFamily::new(2, 1.0, 1.0).unwrap();
    let t = 0.3 * cone.lifetime();
    let coarse = radial_mismatch(16.0, 32, t, cone);
    let fine = radial_mismatch(16.0, 64, t, cone);
    let ratio = coarse / fine;
    assert!(ratio > 3.0, "coarse {coarse:.3e} fine {fine:.3e} ratio {ratio:.2}");
}

#[test]
fn quadrupole_bump_decays() {
    let cone = ConeFamily::new(2, 1.0, 1.0).unwrap();
    let (l, m) = (8.0, 32);
    let s = GraphState2D::from_fn(l, m, 0.0, quadrupole_datum(1.0, 1.0, 0.1)).unwrap();
    let mut sim = init_2d(s.u, cone, l, m, SolverConfig::default()).unwrap();
    let radii = [1.0, 2.0, 3.0];
    let start = azimuthal_variation(&sim.state, &radii, 64);
    let mut prev = start.clone();
    let life = cone.lifetime();
    for k in 1..=6 {
        let out = sim.run_until(0.1 * k as f64 * life).unwrap();
        assert!(out.failure.is_none());
        let v = azimuthal_variation(&sim.state, &radii, 64);
        for (a, b) in v.iter().zip(&prev) {
            assert!(a <= &(b + 1e-6), "variation grew: {prev:?} -> {v:?}");
        }
        prev = v;
    }
    assert!(prev[0] < 0.5 * start[0], "{start:?} -> {prev:?}");
}

#[test]
fn lattice_snapshot_round_trip() {
    let cone = ConeFamily::new(2, 1.0, 1.0).unwrap();
    let mut a = hyperboloid_sim(4.0, 8, cone);
    a.run_until(0.1).unwrap();
    let mut b = Snapshot::from_json(&Snapshot::from_2d(&a, None).to_json().unwrap()).unwrap().restore_2d().unwrap();
    a.run_until(0.2).unwrap();
    b.run_until(0.2).unwrap();
    assert!(a.state.u.iter().zip(&b.state.u).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(Snapshot::from_2d(&a, None).restore_radial().is_err());
}
