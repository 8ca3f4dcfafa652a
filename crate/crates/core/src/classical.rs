//! First- and second-order correctors, stream matrices and the
//! homogenized tensors built from them.

use crate::error::Result;
use crate::torus::{solve_cell_with, solve_flux_corrector, CellReport, CellSolverOptions, CoefficientField, PeriodicField};
use rayon::prelude::*;

/// Correctors and homogenized tensors of order one and two.
#[derive(Clone, Debug)]
pub struct CorrectorSuite {
    /// chi1[k] solves -div a (e_k + grad chi) = 0.
    pub chi1: Vec<PeriodicField>,
    /// g[k] = a (e_k + grad chi1[k]) - abar e_k.
    pub g: Vec<PeriodicField>,
    /// s1[k]: skew matrix with div s1[k] = g[k].
    pub s1: Vec<PeriodicField>,
    /// chi2[j][k] solves -div a grad chi = div(a e_j chi1[k] + s1[k] e_j).
    pub chi2: Vec<Vec<PeriodicField>>,
    pub abar: Vec<Vec<f64>>,
    /// abar3[i][j][k] = <(a grad chi2[j][k] + a e_j chi1[k] + s1[k] e_j)_i>.
    pub abar3: Vec<Vec<Vec<f64>>>,
    pub abar3_sym: Vec<Vec<Vec<f64>>>,
    pub reports: Vec<CellReport>,
}

/// Output of the first-order stage.
#[derive(Clone, Debug)]
pub struct FirstOrder {
    pub chi1: Vec<PeriodicField>,
    pub g: Vec<PeriodicField>,
    pub s1: Vec<PeriodicField>,
    pub abar: Vec<Vec<f64>>,
    pub reports: Vec<CellReport>,
}

fn unit_column(a: &CoefficientField, j: usize) -> PeriodicField {
    let d = a.dim();
    PeriodicField::vector(a.grid(), (0..d).map(|i| a.a.entry(i, j).to_vec()).collect())
}

pub fn build_first_order(a: &CoefficientField, opts: &CellSolverOptions) -> Result<FirstOrder> {
    let d = a.dim();
    let solved: Vec<Result<(PeriodicField, CellReport)>> =
        (0..d).into_par_iter().map(|k| solve_cell_with(a, Some(&unit_column(a, k)), None, opts)).collect();
    let mut chi1 = Vec::with_capacity(d);
    let mut reports = Vec::with_capacity(d);
    for r in solved {
        let (u, rep) = r?;
        chi1.push(u);
        reports.push(rep);
    }
    // flux a (e_k + grad chi_k)
    let mut fluxes = Vec::with_capacity(d);
    for (k, chi) in chi1.iter().enumerate() {
        let f = a.a.mat_vec(&chi.grad(), true)?.add(&unit_column(a, k))?;
        fluxes.push(f);
    }
    let mut abar = vec![vec![0.0; d]; d];
    for (k, f) in fluxes.iter().enumerate() {
        let m = f.mean();
        for i in 0..d {
            abar[i][k] = m[i];
        }
    }
    let mut g = Vec::with_capacity(d);
    for (k, f) in fluxes.iter().enumerate() {
        let mut gk = f.clone();
        for i in 0..d {
            let shift = abar[i][k];
            gk.data[i].iter_mut().for_each(|v| *v -= shift);
        }
        g.push(gk);
    }
    let s1 = g.iter().map(solve_flux_corrector).collect::<Result<Vec<_>>>()?;
    Ok(FirstOrder { chi1, g, s1, abar, reports })
}

/// Flux driving chi2[j][k]: a e_j chi1[k] + s1[k] e_j.
fn second_order_flux(a: &CoefficientField, first: &FirstOrder, j: usize, k: usize) -> Result<PeriodicField> {
    let d = a.dim();
    let col = unit_column(a, j);
    let mut f = first.chi1[k].multiply(&col, true)?;
    for i in 0..d {
        let s = first.s1[k].entry(i, j);
        f.data[i].iter_mut().zip(s).for_each(|(v, x)| *v += x);
    }
    Ok(f)
}

impl CorrectorSuite {
    pub fn build(a: &CoefficientField) -> Result<Self> {
        CorrectorSuite::build_with(a, &CellSolverOptions::default())
    }

    pub fn build_with(a: &CoefficientField, opts: &CellSolverOptions) -> Result<Self> {
        let first = build_first_order(a, opts)?;
        let d = a.dim();
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|j| (0..d).map(move |k| (j, k))).collect();
        let solved: Vec<Result<(PeriodicField, PeriodicField, CellReport)>> = pairs
            .par_iter()
            .map(|&(j, k)| {
                let f = second_order_flux(a, &first, j, k)?;
                let (u, rep) = solve_cell_with(a, Some(&f), None, opts)?;
                Ok((u, f, rep))
            })
            .collect();
        let mut chi2 = vec![Vec::with_capacity(d); d];
        let mut abar3 = vec![vec![vec![0.0; d]; d]; d];
        let mut reports = first.reports.clone();
        for (r, &(j, k)) in solved.into_iter().zip(&pairs) {
            let (u, f, rep) = r?;
            let total = a.a.mat_vec(&u.grad(), true)?.add(&f)?;
            let m = total.mean();
            for i in 0..d {
                abar3[i][j][k] = m[i];
            }
            chi2[j].push(u);
            reports.push(rep);
        }
        let abar3_sym = symmetrize_last_two(&abar3);
        Ok(CorrectorSuite {
            chi1: first.chi1,
            g: first.g,
            s1: first.s1,
            chi2,
            abar: first.abar,
            abar3,
            abar3_sym,
            reports,
        })
    }

    pub fn dim(&self) -> usize {
        self.abar.len()
    }

    pub fn first_order(&self) -> FirstOrder {
        FirstOrder {
            chi1: self.chi1.clone(),
            g: self.g.clone(),
            s1: self.s1.clone(),
            abar: self.abar.clone(),
            reports: Vec::new(),
        }
    }

    /// The mean-zero, divergence-free field
    /// a grad chi2[j][k] + a e_j chi1[k] + s1[k] e_j - abar3[., j, k].
    pub fn second_order_flux_difference(&self, a: &CoefficientField, j: usize, k: usize) -> Result<PeriodicField> {
        let f = second_order_flux(a, &self.first_order(), j, k)?;
        let mut total = a.a.mat_vec(&self.chi2[j][k].grad(), true)?.add(&f)?;
        for i in 0..self.dim() {
            let shift = self.abar3[i][j][k];
            total.data[i].iter_mut().for_each(|v| *v -= shift);
        }
        Ok(total)
    }

    /// Second-order stream matrix for (j, k), computed on demand.
    pub fn second_order_stream(&self, a: &CoefficientField, j: usize, k: usize) -> Result<PeriodicField> {
        solve_flux_corrector(&self.second_order_flux_difference(a, j, k)?)
    }

    /// Covariance matrix <chi1_i chi1_k>.
    pub fn corrector_covariance(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|k| self.chi1[i].inner(&self.chi1[k])).collect()).collect()
    }
}

/// (t_ijk + t_ikj) / 2.
pub fn symmetrize_last_two(t: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let d = t.len();
    (0..d)
        .map(|i| (0..d).map(|j| (0..d).map(|k| 0.5 * (t[i][j][k] + t[i][k][j])).collect()).collect())
        .collect()
}

/// max_ijk |s_ijk + s_jki + s_kij|.
pub fn cyclic_check(sym: &[Vec<Vec<f64>>]) -> f64 {
    let d = sym.len();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                worst = worst.max((sym[i][j][k] + sym[j][k][i] + sym[k][i][j]).abs());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{CoefficientSpec, TorusGrid};

    #[test]
    fn identity_has_trivial_suite() {
        let g = TorusGrid::new(2, 8).unwrap();
        let s = CorrectorSuite::build(&CoefficientField::identity(g).unwrap()).unwrap();
        assert_eq!(s.abar, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(s.chi1.iter().chain(s.chi2.iter().flatten()).all(|c| c.max_abs() == 0.0));
        assert_eq!(cyclic_check(&s.abar3_sym), 0.0);
    }

    #[test]
    fn laminate_closed_form() {
        let g = TorusGrid::new(2, 32).unwrap();
        let spec = CoefficientSpec::diagonal(&["1.5 + 0.4*cos(2*pi*y1)", "1.5 + 0.4*cos(2*pi*y1)"]);
        let a = CoefficientField::from_spec(&spec, g, None).unwrap();
        let s = CorrectorSuite::build(&a).unwrap();
        let harmonic = (1.5f64 * 1.5 - 0.16).sqrt();
        assert!((s.abar[0][0] - harmonic).abs() < 1e-12);
        assert!((s.abar[1][1] - 1.5).abs() < 1e-12);
        assert!(s.abar[0][1].abs() < 1e-14 && s.abar[1][0].abs() < 1e-14);
    }
}
