use proptest::prelude::*;
use twoscale::classical::CorrectorSuite;
use twoscale::harness::{RunConfig, MINIMAL_CONFIG};
use twoscale::hermite::{eigensolve_checked, resolvent_solve, spectral_gap, MacroBasis, MacroFunction};
use twoscale::reference::{fit_rate, BandCholesky, BandMatrix};
use twoscale::torus::solve_cell;
use twoscale::{CoefficientField, CoefficientSpec, PeriodicField, SlowPolynomial, TorusGrid};

fn coefficient_1d(c: &[f64; 4]) -> CoefficientField {
    let e = format!(
        "2 + {}*cos(2*pi*y) + {}*sin(2*pi*y) + {}*cos(4*pi*y) + {}*sin(6*pi*y)",
        c[0], c[1], c[2], c[3]
    );
    CoefficientField::from_spec(&CoefficientSpec::diagonal(&[&e]), TorusGrid::new(1, 64).unwrap(), None).unwrap()
}

fn coefficient_2d(c: &[f64; 4]) -> CoefficientField {
    let spec = CoefficientSpec::Expression {
        entries: vec![
            vec![format!("2 + {}*cos(2*pi*y1) + {}*sin(2*pi*(y1+y2))", c[0], c[1]), format!("{}*cos(2*pi*y2)", c[3])],
            vec![format!("{}*cos(2*pi*y2)", c[3]), format!("1.5 + {}*sin(2*pi*y2)", c[2])],
        ],
    };
    CoefficientField::from_spec(&spec, TorusGrid::new(2, 16).unwrap(), None).unwrap()
}

fn amplitudes() -> impl Strategy<Value = [f64; 4]> {
    [-0.3..0.3f64, -0.3..0.3f64, -0.3..0.3f64, -0.2..0.2f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn homogenized_1d_is_harmonic_mean(c in amplitudes()) {
        let a = coefficient_1d(&c);
        let suite = CorrectorSuite::build(&a).unwrap();
        let inv: f64 = a.a.entry(0, 0).iter().map(|v| 1.0 / v).sum::<f64>() / 64.0;
        prop_assert!((suite.abar[0][0] - 1.0 / inv).abs() < 1e-12);
    }

    #[test]
    fn energy_identity(c in amplitudes()) {
        // abar_kk = <a (e_k + grad chi_k) . (e_k + grad chi_k)>
        let a = coefficient_2d(&c);
        let suite = CorrectorSuite::build(&a).unwrap();
        let grid = a.grid();
        for k in 0..2 {
            let g = suite.chi1[k].grad();
            let mut energy = 0.0;
            for p in 0..grid.len() {
                let v = [g.component(0)[p] + (k == 0) as u8 as f64, g.component(1)[p] + (k == 1) as u8 as f64];
                for i in 0..2 {
                    for j in 0..2 {
                        energy += v[i] * a.a.entry(i, j)[p] * v[j];
                    }
                }
            }
            energy /= grid.len() as f64;
            prop_assert!((energy - suite.abar[k][k]).abs() < 1e-10, "{} vs {}", energy, suite.abar[k][k]);
        }
    }

    #[test]
    fn scaling_covariance(c in amplitudes(), s in 1.0..5.0f64) {
        let a = coefficient_2d(&c);
        let scaled = CoefficientField::new(a.a.scale(s), None).unwrap();
        let (u, v) = (CorrectorSuite::build(&a).unwrap(), CorrectorSuite::build(&scaled).unwrap());
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((v.abar[i][j] - s * u.abar[i][j]).abs() < 1e-10 * s);
            }
            prop_assert!(v.chi1[i].sub(&u.chi1[i]).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn cell_solve_is_linear(c in amplitudes(), s in -3.0..3.0f64) {
        let a = coefficient_1d(&c);
        let grid = a.grid();
        let f1 = PeriodicField::vector(grid, vec![PeriodicField::from_fn(grid, |y| (2.0 * std::f64::consts::PI * y[0]).cos()).values().to_vec()]);
        let f2 = PeriodicField::vector(grid, vec![PeriodicField::from_fn(grid, |y| (4.0 * std::f64::consts::PI * y[0]).sin()).values().to_vec()]);
        let g = PeriodicField::from_fn(grid, |y| (2.0 * std::f64::consts::PI * y[0]).sin());
        let zero = PeriodicField::zeros(grid, 0);
        let u1 = solve_cell(&a, &f1, &g).unwrap();
        let u2 = solve_cell(&a, &f2, &zero).unwrap();
        let u = solve_cell(&a, &f1.axpy(s, &f2).unwrap(), &g).unwrap();
        prop_assert!(u.sub(&u1.axpy(s, &u2).unwrap()).unwrap().max_abs() < 1e-10);
        prop_assert!(u.mean()[0].abs() < 1e-12);
    }

    #[test]
    fn oscillator_scaling(s in 0.3..4.0f64) {
        // -s u'' + x^2 u has eigenvalues sqrt(s) (2k + 1)
        let w = SlowPolynomial::squared_norm(1);
        let basis = MacroBasis::new(1, 48, s.powf(0.25)).unwrap();
        let spec = eigensolve_checked(&[vec![s]], &w, &basis, 4, None).unwrap();
        for k in 0..4 {
            prop_assert!((spec.values[k] - s.sqrt() * (2 * k + 1) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn resolvent_bound(coeffs in proptest::collection::vec(-1.0..1.0f64, 8)) {
        let w = SlowPolynomial::squared_norm(1);
        let basis = MacroBasis::new(1, 32, 1.0).unwrap();
        let spec = eigensolve_checked(&[vec![1.0]], &w, &basis, 6, None).unwrap();
        let mut f = MacroFunction::zero(basis);
        // odd Hermite functions: orthogonal to the ground state
        for (k, c) in coeffs.iter().enumerate() {
            f.coeffs[2 * k + 1] = *c;
        }
        let u = resolvent_solve(&spec, 1, &f).unwrap();
        let gap = spectral_gap(&spec, 1).unwrap();
        prop_assert!(u.norm() <= f.norm() / gap * (1.0 + 1e-12));
    }

    #[test]
    fn fit_recovers_power_law(slope in 0.5..5.0f64, c in 1e-3..1e3f64) {
        let eps = [0.1f64, 0.05, 0.025, 0.0125];
        let err: Vec<f64> = eps.iter().map(|e| c * e.powf(slope)).collect();
        let f = fit_rate(&eps, &err, None).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-10);
        prop_assert!((f.intercept - c.ln()).abs() < 1e-8);
        prop_assert!(f.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn band_cholesky_solves(diag in proptest::collection::vec(3.0..6.0f64, 20), off in proptest::collection::vec(-1.0..1.0f64, 40)) {
        let n = 20;
        let mut m = BandMatrix::zeros(n, 2);
        for i in 0..n {
            m.set(i, i, diag[i]);
            if i + 1 < n {
                m.set(i, i + 1, off[i]);
            }
            if i + 2 < n {
                m.set(i, i + 2, 0.5 * off[20 + i]);
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = BandCholesky::new(&m).unwrap().solve(&b);
        let r = m.mul(&x);
        prop_assert!(r.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
    }

    #[test]
    fn config_round_trip(j in 1usize..4, n in 1usize..5, order in 0usize..4, torus in 2usize..20) {
        let mut cfg = RunConfig::from_toml(MINIMAL_CONFIG).unwrap();
        cfg.experiment.j = j;
        cfg.experiment.count = j + 3;
        cfg.experiment.epsilons = (0..n).map(|k| 0.2 / 2f64.powi(k as i32)).collect();
        cfg.experiment.order = Some(order);
        cfg.discretization.torus_modes = 2 * torus;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(cfg, back);
    }
}

#[test]
fn constant_coefficients_have_no_correctors() {
    let a = CoefficientField::constant(TorusGrid::new(2, 8).unwrap(), &[vec![1.6, 0.2], vec![0.2, 1.3]]).unwrap();
    let s = CorrectorSuite::build(&a).unwrap();
    assert!(s.chi1.iter().all(|c| c.max_abs() < 1e-14));
    assert!((s.abar[0][1] - 0.2).abs() < 1e-14);
}

#[test]
fn invalid_configs_are_rejected() {
    for (from, to) in [("j = 1", "j = 0"), ("epsilons = [0.1]", "epsilons = [1.5]"), ("torus_modes = 8", "torus_modes = 7")] {
        let src = MINIMAL_CONFIG.replace(from, to);
        assert!(RunConfig::from_toml(&src).is_err(), "{to}");
    }
    assert!(RunConfig::from_toml(&format!("{MINIMAL_CONFIG}\n[extra]\nx = 1\n")).is_err());
}
