use super::spectral::{self, touches_nyquist, wavevector};
use super::{CoefficientField, PeriodicField};
use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug)]
pub struct CellSolverOptions {
    /// Relative residual target in the H^-1 norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Absolute tolerance on |<G>| (scaled by max(1, |G|)).
    pub mean_tolerance: f64,
    pub dealias: bool,
}

impl Default for CellSolverOptions {
    fn default() -> Self {
        CellSolverOptions { tolerance: 1e-12, max_iterations: 2000, mean_tolerance: 1e-10, dealias: true }
    }
}

/// Diagnostics of one cell solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct CellReport {
    pub iterations: usize,
    /// Final relative residual in the H^-1 norm.
    pub residual: f64,
    /// Mean of the returned solution.
    pub mean: f64,
}

struct CellOperator<'a> {
    a: &'a CoefficientField,
    dim: usize,
    n: usize,
    m: usize,
    dealias: bool,
}

impl CellOperator<'_> {
    fn k2pi(&self, idx: usize) -> [f64; 2] {
        let k = wavevector(self.dim, self.n, idx);
        [2.0 * PI * k[0] as f64, 2.0 * PI * k[1] as f64]
    }

    /// Fourier coefficients of -div(a grad u) given those of u.
    fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let (d, n) = (self.dim, self.n);
        let m = if self.dealias { self.m } else { n };
        let i = Complex64::new(0.0, 1.0);
        let grads: Vec<Vec<f64>> = (0..d)
            .map(|axis| {
                let g: Vec<Complex64> = u.iter().enumerate().map(|(idx, c)| i * self.k2pi(idx)[axis] * c).collect();
                spectral::inverse(d, m, &spectral::pad(d, n, m, &g))
            })
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); u.len()];
        for row in 0..d {
            let mut flux = vec![0.0; m.pow(d as u32)];
            for col in 0..d {
                let coef: &[f64] = if self.dealias { &self.a.padded[row * d + col] } else { self.a.a.entry(row, col) };
                for (f, (c, g)) in flux.iter_mut().zip(coef.iter().zip(&grads[col])) {
                    *f += c * g;
                }
            }
            let fh = spectral::truncate(d, n, m, &spectral::forward(d, m, &flux));
            for (idx, o) in out.iter_mut().enumerate() {
                *o -= i * self.k2pi(idx)[row] * fh[idx];
            }
        }
        out
    }

    fn precondition(&self, r: &[Complex64]) -> Vec<Complex64> {
        r.iter()
            .enumerate()
            .map(|(idx, c)| {
                if idx == 0 || touches_nyquist(self.dim, self.n, idx) {
                    return Complex64::new(0.0, 0.0);
                }
                let k = self.k2pi(idx);
                c / (self.a.scale * (k[0] * k[0] + k[1] * k[1]))
            })
            .collect()
    }
}

fn dot(x: &[Complex64], y: &[Complex64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a.conj() * b).re).sum()
}

/// Solves -div(a grad u) = div F + G on the torus with <u> = 0.
pub fn solve_cell(a: &CoefficientField, f: &PeriodicField, g: &PeriodicField) -> Result<PeriodicField> {
    solve_cell_with(a, Some(f), Some(g), &CellSolverOptions::default()).map(|(u, _)| u)
}

/// As [`solve_cell`], with optional right-hand side parts and diagnostics.
pub fn solve_cell_with(
    a: &CoefficientField,
    f: Option<&PeriodicField>,
    g: Option<&PeriodicField>,
    opts: &CellSolverOptions,
) -> Result<(PeriodicField, CellReport)> {
    let grid = a.grid();
    let (d, n) = (grid.dim, grid.n);
    let mut rhs = vec![Complex64::new(0.0, 0.0); grid.len()];
    let i = Complex64::new(0.0, 1.0);
    if let Some(f) = f {
        if f.grid != grid || f.rank != 1 {
            return Err(Error::GridMismatch("flux term must be a vector field on the coefficient grid".into()));
        }
        for axis in 0..d {
            let fh = spectral::forward(d, n, f.component(axis));
            for (idx, r) in rhs.iter_mut().enumerate() {
                let k = 2.0 * PI * wavevector(d, n, idx)[axis] as f64;
                *r += i * k * fh[idx];
            }
        }
    }
    if let Some(g) = g {
        if g.grid != grid || g.rank != 0 {
            return Err(Error::GridMismatch("source term must be a scalar field on the coefficient grid".into()));
        }
        let gh = spectral::forward(d, n, g.values());
        let tol = opts.mean_tolerance * g.l2_norm().max(1.0);
        if gh[0].re.abs() > tol {
            return Err(Error::NonZeroMean { mean: gh[0].re, tol });
        }
        rhs.iter_mut().zip(&gh).for_each(|(r, v)| *r += v);
    }
    rhs[0] = Complex64::new(0.0, 0.0);
    for (idx, r) in rhs.iter_mut().enumerate() {
        if touches_nyquist(d, n, idx) {
            *r = Complex64::new(0.0, 0.0);
        }
    }
    let op = CellOperator { a, dim: d, n, m: a.padded_n, dealias: opts.dealias };
    let zero = || vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut x = zero();
    let mut r = rhs.clone();
    let mut z = op.precondition(&r);
    let bnorm = dot(&r, &z).sqrt();
    if bnorm == 0.0 {
        return Ok((PeriodicField::zeros(grid, 0), CellReport::default()));
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let ap = op.apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SingularSystem { residual, iterations });
        }
        let alpha = rz / pap;
        for k in 0..x.len() {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        z = op.precondition(&r);
        let rz_new = dot(&r, &z);
        residual = rz_new.max(0.0).sqrt() / bnorm;
        if residual <= opts.tolerance {
            break;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..p.len() {
            p[k] = z[k] + beta * p[k];
        }
    }
    if residual > opts.tolerance {
        return Err(Error::SingularSystem { residual, iterations });
    }
    x[0] = Complex64::new(0.0, 0.0);
    let u = PeriodicField::scalar(grid, spectral::inverse(d, n, &x));
    let mean = u.mean()[0];
    Ok((u, CellReport { iterations, residual, mean }))
}

/// Skew matrix s with -Laplace s_ij = d_j g_i - d_i g_j and div s = g.
pub fn solve_flux_corrector(g: &PeriodicField) -> Result<PeriodicField> {
    let grid = g.grid;
    let (d, n) = (grid.dim, grid.n);
    if g.rank != 1 {
        return Err(Error::GridMismatch("flux corrector expects a vector field".into()));
    }
    let norm = g.l2_norm();
    // absolute floor: a roundoff-sized field is treated as zero
    let tol = 1e-10 * norm.max(1.0);
    for m in g.mean() {
        if m.abs() > tol {
            return Err(Error::NonZeroMean { mean: m, tol });
        }
    }
    let gh: Vec<Vec<Complex64>> = (0..d).map(|i| spectral::forward(d, n, g.component(i))).collect();
    // H^-1 norm of div g, compared with the L2 norm of g.
    let mut div2 = 0.0;
    for idx in 1..grid.len() {
        if touches_nyquist(d, n, idx) {
            continue;
        }
        let k = wavevector(d, n, idx);
        let kk = [k[0] as f64, k[1] as f64];
        let k2 = kk[0] * kk[0] + kk[1] * kk[1];
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..d {
            s += kk[i] * gh[i][idx];
        }
        div2 += s.norm_sqr() / k2;
    }
    if div2.sqrt() > tol {
        return Err(Error::NotDivergenceFree(div2.sqrt() / norm.max(1.0)));
    }
    let mut s = PeriodicField::zeros(grid, 2);
    let ic = Complex64::new(0.0, 1.0);
    for i in 0..d {
        for j in (i + 1)..d {
            let mut sh = vec![Complex64::new(0.0, 0.0); grid.len()];
            for (idx, v) in sh.iter_mut().enumerate() {
                if idx == 0 || touches_nyquist(d, n, idx) {
                    continue;
                }
                let k = wavevector(d, n, idx);
                let kk = [2.0 * PI * k[0] as f64, 2.0 * PI * k[1] as f64];
                let k2 = kk[0] * kk[0] + kk[1] * kk[1];
                *v = (ic * kk[j] * gh[i][idx] - ic * kk[i] * gh[j][idx]) / k2;
            }
            let vals = spectral::inverse(d, n, &sh);
            s.data[j * d + i] = vals.iter().map(|x| -x).collect();
            s.data[i * d + j] = vals;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{CoefficientSpec, TorusGrid};

    #[test]
    fn laplace_single_mode() {
        let g = TorusGrid::new(2, 16).unwrap();
        let a = CoefficientField::identity(g).unwrap();
        let src = PeriodicField::from_fn(g, |y| (2.0 * PI * y[0]).sin());
        let u = solve_cell(&a, &PeriodicField::zeros(g, 1), &src).unwrap();
        let expect = src.scale(1.0 / (4.0 * PI * PI));
        assert!(u.sub(&expect).unwrap().max_abs() < 1e-15);
        let zero = solve_cell(&a, &PeriodicField::zeros(g, 1), &PeriodicField::zeros(g, 0)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn nonzero_mean_rejected() {
        let g = TorusGrid::new(1, 16).unwrap();
        let a = CoefficientField::identity(g).unwrap();
        let r = solve_cell(&a, &PeriodicField::zeros(g, 1), &PeriodicField::constant(g, 1.0));
        assert!(matches!(r, Err(Error::NonZeroMean { .. })));
    }

    #[test]
    fn one_dimensional_corrector_closed_form() {
        let g = TorusGrid::new(1, 64).unwrap();
        let a = CoefficientField::from_spec(&CoefficientSpec::diagonal(&["2 + cos(2*pi*y1)"]), g, None).unwrap();
        let flux = PeriodicField::vector(g, vec![a.a.entry(0, 0).to_vec()]);
        let u = solve_cell(&a, &flux, &PeriodicField::zeros(g, 0)).unwrap();
        let du = u.grad().component_field(0);
        let expect = PeriodicField::from_fn(g, |y| 3f64.sqrt() / (2.0 + (2.0 * PI * y[0]).cos()) - 1.0);
        assert!(du.sub(&expect).unwrap().l2_norm() < 1e-10);
    }

    #[test]
    fn stream_matrix_single_mode() {
        let g = TorusGrid::new(2, 16).unwrap();
        let h = PeriodicField::from_fn(g, |y| (2.0 * PI * y[0]).sin() * (2.0 * PI * y[1]).sin());
        let gh = h.grad();
        let flux = PeriodicField::vector(g, vec![gh.component(1).to_vec(), gh.component(0).iter().map(|x| -x).collect()]);
        let s = solve_flux_corrector(&flux).unwrap();
        assert!(s.component_field(1).add(&h).unwrap().max_abs() < 1e-14);
        assert!(s.add(&s.transpose()).unwrap().max_abs() == 0.0);
        assert!(s.div().unwrap().sub(&flux).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn flux_corrector_rejects_divergent_fields() {
        let g = TorusGrid::new(2, 16).unwrap();
        let f = PeriodicField::from_fn(g, |y| (2.0 * PI * y[0]).sin());
        let v = PeriodicField::vector(g, vec![f.values().to_vec(), vec![0.0; g.len()]]);
        assert!(matches!(solve_flux_corrector(&v), Err(Error::NotDivergenceFree(_))));
    }
}
