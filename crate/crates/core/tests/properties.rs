use std::sync::Arc;

use proptest::prelude::*;

use imcf_core::config::DatumKind;
use imcf_core::output::{fmt_sci, radial_csv};
use imcf_core::radial::{hyperboloid, init_radial, sandwich_violation, BoundaryKind, SolverConfig, TimeScheme};
use imcf_core::tridiag::solve_tridiagonal;
use imcf_core::verify::read_trajectory_csv;
use imcf_core::{parse_config, ConeFamily, RadialGrid, RadialProfile, RunConfig};

proptest! {
    #[test]
    fn cone_slope_decreases_to_zero(n in 2usize..=6, alpha0 in 0.05f64..20.0, kappa in 0.01f64..5.0, s in 0.0f64..1.0) {
        let cone = ConeFamily::new(n, alpha0, kappa).unwrap();
        let life = cone.lifetime();
        prop_assert!((life - cone.lifetime_from_gamma()).abs() <= 1e-12 * life.max(1.0));
        let (t1, t2) = (s * life, (s + 0.5 * (1.0 - s)) * life);
        let (a1, a2) = (cone.slope(t1).unwrap(), cone.slope(t2).unwrap());
        prop_assert!(a2 <= a1 && a1 <= alpha0 * (1.0 + 1e-15));
        prop_assert!(cone.slope(life).unwrap() < 1e-6);
        let (gamma, beta) = cone.gamma_beta(t1).unwrap();
        prop_assert!((beta - 1.0 / (1.0 + a1 * a1)).abs() < 1e-10);
        prop_assert!((gamma - (n - 1) as f64 * (1.0 - beta)).abs() < 1e-10 * n as f64);
        prop_assert!(cone.slope(life * 1.01).is_err());
    }

    #[test]
    fn fmt_sci_round_trips(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(fmt_sci(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn config_text_round_trips(
        n in 2usize..6,
        alpha0 in 1e-3f64..1e3,
        kappa in 1e-3f64..10.0,
        dt in 1e-6f64..0.1,
        cells in 10usize..10_000,
        t_end in proptest::option::of(1e-3f64..10.0),
        dirichlet in any::<bool>(),
        euler in any::<bool>(),
        seed in any::<u64>(),
        name in "[a-z0-9 _./#-]{1,20}",
    ) {
        let mut c = RunConfig::new(n, alpha0, kappa, DatumKind::ConeSmooth);
        c.solver.dt = dt;
        c.grid.cells = cells;
        c.run.t_end = t_end;
        c.run.seed = seed;
        c.solver.bc_kind = if dirichlet { BoundaryKind::DirichletShift } else { BoundaryKind::NeumannConeSlope };
        c.solver.scheme = if euler { TimeScheme::BackwardEuler } else { TimeScheme::Bdf2 };
        c.output.csv = Some(name);
        let back = parse_config(&c.to_text()).unwrap();
        prop_assert_eq!(back.hash(), c.hash());
        prop_assert_eq!(back, c);
    }

    #[test]
    fn tridiagonal_solve_has_small_residual(rows in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..60)) {
        let n = rows.len();
        let lower: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let upper: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let diag: Vec<f64> = rows.iter().map(|r| 2.5 + r.2).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        prop_assert!(solve_tridiagonal(&lower, &diag, &upper, &mut x));
        for i in 0..n {
            let mut ax = diag[i] * x[i];
            if i > 0 { ax += lower[i] * x[i - 1]; }
            if i + 1 < n { ax += upper[i] * x[i + 1]; }
            prop_assert!((ax - b[i]).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ordered_data_stay_ordered(n in 2usize..=3, alpha0 in 0.5f64..2.0, lift in 0.0f64..0.3, width in 0.0f64..0.3) {
        let kappa = 1.0;
        let cone = ConeFamily::new(n, alpha0, kappa).unwrap();
        let grid = Arc::new(RadialGrid::stretched(20.0, 200, 3.0, n).unwrap());
        let low: Vec<f64> = grid.nodes().iter().map(|&r| hyperboloid(alpha0, 0.3)(r)).collect();
        let high: Vec<f64> = grid.nodes().iter().map(|&r| hyperboloid(alpha0, 0.3 + width)(r) + lift).collect();
        let cfg = SolverConfig { sample_every: 1000, ..SolverConfig::default() };
        let mut a = init_radial(low, cone, grid.clone(), cfg.clone()).unwrap();
        let mut b = init_radial(high, cone, grid, cfg).unwrap();
        let t = 0.5 * cone.lifetime();
        a.run_until(t).unwrap();
        b.run_until(t).unwrap();
        let gap = a.profile.u.iter().zip(&b.profile.u).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(gap <= 1e-9, "ordering broken by {gap:e}");
        prop_assert!(sandwich_violation(&b.profile, &cone) < 1e-2);
    }

    #[test]
    fn trajectory_csv_round_trips(n in 2usize..5, cells in 4usize..60, t in 0.0f64..3.0, seed in any::<u32>()) {
        let grid = Arc::new(RadialGrid::uniform(7.0, cells, n).unwrap());
        let f = |r: f64| (r * r + 1.0).sqrt() + (seed as f64) * 1e-9;
        let frames = vec![
            RadialProfile::from_fn(grid.clone(), t, f).unwrap(),
            RadialProfile::from_fn(grid, t + 0.5, |r| 0.5 * f(r)).unwrap(),
        ];
        let back = read_trajectory_csv(&radial_csv(&frames), n).unwrap();
        prop_assert_eq!(back.len(), 2);
        for (a, b) in frames.iter().zip(&back) {
            prop_assert_eq!(a.t.to_bits(), b.t.to_bits());
            prop_assert_eq!(a.grid.nodes(), b.grid.nodes());
            prop_assert_eq!(&a.u, &b.u);
        }
    }
}
