//! Two-scale expansion of eigenpairs: corrector tables, the macroscopic
//! hierarchy for simple and clustered eigenvalues, and assembly of the
//! approximate eigenvalue and eigenfunction.

mod assemble;
mod recursion;
mod separable;
mod table;

pub use assemble::{assemble, choose_p, divergence_cap, epsilon_condition, Assembled, EvalGrid};
pub use recursion::{
    apply_tensors, build_corrector_table, build_d_matrix, expand, multiple_recursion, simple_recursion, Expansion,
    ExpansionBranch, ExpansionOptions, SplittingMatrix, TensorList,
};
pub use separable::{SeparableField, DROP_TOLERANCE};
pub use table::{CellRhs, CorrectorEntry, CorrectorTable};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::CorrectorSuite;
    use crate::hermite::{default_scale, eigensolve_checked, MacroBasis};
    use crate::poly::{MultiIndex, SlowPolynomial};
    use crate::torus::{CellSolverOptions, CoefficientField, CoefficientSpec, PeriodicField, TorusGrid};

    fn scalar_of(f: &SeparableField) -> PeriodicField {
        let d = f.dim();
        f.terms.iter().fold(PeriodicField::zeros(f.grid, 0), |acc, (p, s)| {
            assert_eq!(p.degree(), 0);
            acc.axpy(p.coefficient(&vec![0; d]), s).unwrap()
        })
    }

    fn one_d() -> (CoefficientField, SlowPolynomial) {
        let g = TorusGrid::new(1, 64).unwrap();
        let a = CoefficientField::from_spec(&CoefficientSpec::diagonal(&["2 + cos(2*pi*y)"]), g, None).unwrap();
        (a, SlowPolynomial::squared_norm(1))
    }

    #[test]
    fn low_levels_match_classical_correctors() {
        let g = TorusGrid::new(2, 16).unwrap();
        let spec = CoefficientSpec::Expression {
            entries: vec![
                vec!["2 + 0.5*cos(2*pi*y1) + 0.3*sin(2*pi*(y1+y2))".into(), "0.2*cos(2*pi*y2)".into()],
                vec!["0.2*cos(2*pi*y2)".into(), "1.8 + 0.4*sin(2*pi*y2)".into()],
            ],
        };
        let a = CoefficientField::from_spec(&spec, g, None).unwrap();
        let suite = CorrectorSuite::build(&a).unwrap();
        let t = build_corrector_table(&a, &SlowPolynomial::squared_norm(2), 3.0, 3, &CellSolverOptions::default())
            .unwrap();
        for j in 0..2 {
            let c = scalar_of(&t.get(1, &MultiIndex::unit(2, j)).unwrap().chi);
            assert!(c.sub(&suite.chi1[j]).unwrap().max_abs() < 1e-12);
            for k in 0..2 {
                let al = MultiIndex::unit(2, j).add(&MultiIndex::unit(2, k));
                let c = scalar_of(&t.get(2, &al).unwrap().chi);
                let expect = if j == k { suite.chi2[j][j].clone() } else { suite.chi2[j][k].add(&suite.chi2[k][j]).unwrap() };
                assert!(c.sub(&expect).unwrap().max_abs() < 1e-11, "{j}{k}");
            }
        }
        for j in 0..2 {
            let e = t.get(2, &MultiIndex::unit(2, j)).unwrap();
            assert!(e.chi.is_zero());
        }
    }

    #[test]
    fn third_level_is_a_single_separable_term() {
        let (a, w) = one_d();
        let t = build_corrector_table(&a, &w, 1.3, 4, &CellSolverOptions::default()).unwrap();
        let e = t.get(3, &MultiIndex::unit(1, 0)).unwrap();
        assert_eq!(e.chi.terms.len(), 1);
        let p = &e.chi.terms[0].0;
        // proportional to x^2 - 1.3
        assert!((p.coefficient(&[0]) / p.coefficient(&[2]) + 1.3).abs() < 1e-12);
    }

    #[test]
    fn constant_coefficient_degeneracy() {
        let g = TorusGrid::new(1, 16).unwrap();
        let a = CoefficientField::constant(g, &[vec![1.7]]).unwrap();
        let w = SlowPolynomial::squared_norm(1);
        let abar = vec![vec![1.7]];
        let basis = MacroBasis::new(1, 48, default_scale(&abar, &w)).unwrap();
        let spec = eigensolve_checked(&abar, &w, &basis, 4, None).unwrap();
        let b = simple_recursion(&a, &w, &spec, 1, &ExpansionOptions::new(4)).unwrap();
        assert!(b.mu[1..].iter().all(|m| m.abs() < 1e-12), "{:?}", b.mu);
        assert!(b.u[1..].iter().all(|u| u.norm() < 1e-12));
        assert!(b.table.entries.iter().filter(|((n, _), _)| *n >= 1).all(|(_, e)| e.chi.size() < 1e-12));
    }

    #[test]
    fn cluster_path_reduces_to_simple_path() {
        let (a, w) = one_d();
        let abar = vec![vec![3f64.sqrt()]];
        let basis = MacroBasis::new(1, 64, default_scale(&abar, &w)).unwrap();
        let spec = eigensolve_checked(&abar, &w, &basis, 4, None).unwrap();
        let opts = ExpansionOptions::new(3);
        let s = simple_recursion(&a, &w, &spec, 1, &opts).unwrap();
        let e = expand(&a, &w, &spec, 1, &opts).unwrap();
        assert_eq!(e.branches.len(), 1);
        for (x, y) in s.mu.iter().zip(&e.branches[0].mu) {
            assert!((x - y).abs() < 1e-12, "{:?} vs {:?}", s.mu, e.branches[0].mu);
        }
    }

    #[test]
    fn second_order_correction_matches_covariance_formula() {
        let (a, w) = one_d();
        let abar = vec![vec![3f64.sqrt()]];
        let basis = MacroBasis::new(1, 64, default_scale(&abar, &w)).unwrap();
        let spec = eigensolve_checked(&abar, &w, &basis, 4, None).unwrap();
        let b = simple_recursion(&a, &w, &spec, 1, &ExpansionOptions::new(3)).unwrap();
        let suite = CorrectorSuite::build(&a).unwrap();
        let cov = suite.corrector_covariance()[0][0];
        let phi = spec.eigenfunction(1).padded();
        let shifted = w.add(&SlowPolynomial::constant(1, -spec.eigenvalue(1)));
        let oracle = cov * phi.deriv(0).mul_poly(&shifted).unwrap().dot(&phi.deriv(0));
        assert!((b.mu[2] - oracle).abs() < 1e-8 * oracle.abs(), "{} vs {}", b.mu[2], oracle);
        assert!(b.mu[1].abs() < 1e-10);
        assert!(b.mu[3].abs() < 1e-10, "odd correction for even a: {}", b.mu[3]);
        assert!(b.residuals.iter().all(|r| *r < 1e-8), "{:?}", b.residuals);
    }

    #[test]
    fn laminate_cluster_splits() {
        let g = TorusGrid::new(2, 16).unwrap();
        let a = CoefficientField::from_spec(&CoefficientSpec::diagonal(&["2 + cos(2*pi*y1)", "1"]), g, None).unwrap();
        let suite = CorrectorSuite::build(&a).unwrap();
        let ab = &suite.abar;
        let inv = [[1.0 / ab[0][0], 0.0], [0.0, 1.0 / ab[1][1]]];
        let w = SlowPolynomial::quadratic_form(&[inv[0].to_vec(), inv[1].to_vec()]);
        let basis = MacroBasis::new(2, 24, default_scale(ab, &w)).unwrap();
        let spec = eigensolve_checked(ab, &w, &basis, 6, None).unwrap();
        assert_eq!(spec.cluster_of(2).unwrap().1, 2);
        let (split, branches, _) = multiple_recursion(&a, &w, &spec, 2, &ExpansionOptions::new(2)).unwrap();
        assert!(split.asymmetry < 1e-12, "{}", split.asymmetry);
        assert!(split.dual_difference < 1e-8, "{}", split.dual_difference);
        assert!(split.spacing > 1e-3);
        assert_eq!(branches.len(), 2);
        for (b, m) in branches.iter().zip(&split.mu2) {
            assert!((b.mu[2] - m).abs() < 1e-10);
            assert!(b.residuals.iter().all(|r| *r < 1e-8));
        }
    }
}
