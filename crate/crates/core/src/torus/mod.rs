//! Periodic fields on the unit torus and the two elementary cell solvers.

mod cell;
mod coefficient;
pub mod spectral;

pub use cell::{solve_cell, solve_cell_with, solve_flux_corrector, CellReport, CellSolverOptions};
pub use coefficient::{CoefficientField, CoefficientSpec};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform grid on T^d with `n` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub dim: usize,
    pub n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Unsupported(format!("torus dimension {dim}")));
        }
        if n < 4 || n % 2 != 0 {
            return Err(Error::Config(format!("modes per axis must be even and >= 4, got {n}")));
        }
        Ok(TorusGrid { dim, n })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinates of flat grid index `idx`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let h = 1.0 / self.n as f64;
        match self.dim {
            1 => [idx as f64 * h, 0.0],
            _ => [(idx / self.n) as f64 * h, (idx % self.n) as f64 * h],
        }
    }

    pub fn refined(&self, factor: usize) -> TorusGrid {
        TorusGrid { dim: self.dim, n: self.n * factor }
    }
}

/// Real scalar, vector or matrix field sampled on a torus grid.
///
/// Components are stored separately; matrix entries row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicField {
    pub grid: TorusGrid,
    pub rank: usize,
    pub data: Vec<Vec<f64>>,
}

impl PeriodicField {
    pub fn scalar(grid: TorusGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        PeriodicField { grid, rank: 0, data: vec![values] }
    }

    pub fn vector(grid: TorusGrid, comps: Vec<Vec<f64>>) -> Self {
        assert_eq!(comps.len(), grid.dim);
        PeriodicField { grid, rank: 1, data: comps }
    }

    pub fn matrix(grid: TorusGrid, comps: Vec<Vec<f64>>) -> Self {
        assert_eq!(comps.len(), grid.dim * grid.dim);
        PeriodicField { grid, rank: 2, data: comps }
    }

    pub fn zeros(grid: TorusGrid, rank: usize) -> Self {
        let count = grid.dim.pow(rank as u32);
        PeriodicField { grid, rank, data: vec![vec![0.0; grid.len()]; count] }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        PeriodicField::scalar(grid, vec![c; grid.len()])
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..grid.dim])).collect();
        PeriodicField::scalar(grid, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.data[0]
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.data[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.data[i * self.grid.dim + j]
    }

    pub fn component_field(&self, i: usize) -> PeriodicField {
        PeriodicField::scalar(self.grid, self.data[i].clone())
    }

    fn check(&self, other: &PeriodicField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// Mean of every component (flattened tensor of matching rank).
    pub fn mean(&self) -> Vec<f64> {
        self.data.iter().map(|c| spectral::forward(self.grid.dim, self.grid.n, c)[0].re).collect()
    }

    pub fn mean_zero_part(&self) -> PeriodicField {
        let mut out = self.clone();
        for c in out.data.iter_mut() {
            let mut f = spectral::forward(self.grid.dim, self.grid.n, c);
            f[0] = num_complex::Complex64::new(0.0, 0.0);
            *c = spectral::inverse(self.grid.dim, self.grid.n, &f);
        }
        out
    }

    /// Gradient of a scalar field, or row-wise gradient of a vector field
    /// (component (i, j) = d_j f_i).
    pub fn grad(&self) -> PeriodicField {
        let d = self.grid.dim;
        let mut comps = Vec::with_capacity(self.data.len() * d);
        for c in &self.data {
            for axis in 0..d {
                comps.push(spectral::derivative(d, self.grid.n, c, axis));
            }
        }
        PeriodicField { grid: self.grid, rank: self.rank + 1, data: comps }
    }

    /// Divergence: sum_i d_i f_i for vectors, (div s)_j = sum_i d_i s_ij for matrices.
    pub fn div(&self) -> Result<PeriodicField> {
        let d = self.grid.dim;
        match self.rank {
            1 => {
                let mut out = vec![0.0; self.grid.len()];
                for i in 0..d {
                    let di = spectral::derivative(d, self.grid.n, &self.data[i], i);
                    out.iter_mut().zip(&di).for_each(|(o, v)| *o += v);
                }
                Ok(PeriodicField::scalar(self.grid, out))
            }
            2 => {
                let mut comps = vec![vec![0.0; self.grid.len()]; d];
                for j in 0..d {
                    for i in 0..d {
                        let di = spectral::derivative(d, self.grid.n, self.entry(i, j), i);
                        comps[j].iter_mut().zip(&di).for_each(|(o, v)| *o += v);
                    }
                }
                Ok(PeriodicField::vector(self.grid, comps))
            }
            r => Err(Error::GridMismatch(format!("divergence of rank-{r} field"))),
        }
    }

    /// Pointwise product of a scalar field with any field.
    pub fn multiply(&self, other: &PeriodicField, dealias: bool) -> Result<PeriodicField> {
        self.check(other)?;
        if self.rank != 0 {
            return Err(Error::GridMismatch("left factor must be scalar".into()));
        }
        let f = &self.data[0];
        let data = other
            .data
            .iter()
            .map(|g| {
                if dealias {
                    spectral::dealiased_product(self.grid.dim, self.grid.n, f, g)
                } else {
                    f.iter().zip(g).map(|(a, b)| a * b).collect()
                }
            })
            .collect();
        Ok(PeriodicField { grid: self.grid, rank: other.rank, data })
    }

    /// Matrix field times vector field.
    pub fn mat_vec(&self, v: &PeriodicField, dealias: bool) -> Result<PeriodicField> {
        self.check(v)?;
        if self.rank != 2 || v.rank != 1 {
            return Err(Error::GridMismatch("mat_vec expects rank 2 and rank 1".into()));
        }
        let d = self.grid.dim;
        let mut comps = vec![vec![0.0; self.grid.len()]; d];
        for i in 0..d {
            for j in 0..d {
                let e = self.entry(i, j);
                if e.iter().all(|x| *x == 0.0) {
                    continue;
                }
                let p = if dealias {
                    spectral::dealiased_product(d, self.grid.n, e, &v.data[j])
                } else {
                    e.iter().zip(&v.data[j]).map(|(a, b)| a * b).collect()
                };
                comps[i].iter_mut().zip(&p).for_each(|(o, x)| *o += x);
            }
        }
        Ok(PeriodicField::vector(self.grid, comps))
    }

    pub fn add(&self, other: &PeriodicField) -> Result<PeriodicField> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &PeriodicField) -> Result<PeriodicField> {
        self.axpy(-1.0, other)
    }

    /// self + s * other.
    pub fn axpy(&self, s: f64, other: &PeriodicField) -> Result<PeriodicField> {
        self.check(other)?;
        if self.rank != other.rank {
            return Err(Error::GridMismatch(format!("rank {} vs {}", self.rank, other.rank)));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
            .collect();
        Ok(PeriodicField { grid: self.grid, rank: self.rank, data })
    }

    pub fn scale(&self, s: f64) -> PeriodicField {
        let data = self.data.iter().map(|c| c.iter().map(|x| x * s).collect()).collect();
        PeriodicField { grid: self.grid, rank: self.rank, data }
    }

    /// L2(T^d) inner product summed over components.
    pub fn inner(&self, other: &PeriodicField) -> f64 {
        let n = self.grid.len() as f64;
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum::<f64>()
            / n
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Transposed matrix field.
    pub fn transpose(&self) -> PeriodicField {
        assert_eq!(self.rank, 2);
        let d = self.grid.dim;
        let mut data = self.data.clone();
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] = self.data[j * d + i].clone();
            }
        }
        PeriodicField { grid: self.grid, rank: 2, data }
    }

    /// Resample onto a grid with `m` points per axis by trigonometric interpolation.
    pub fn resample(&self, m: usize) -> Result<PeriodicField> {
        let grid = TorusGrid::new(self.grid.dim, m)?;
        let d = self.grid.dim;
        let n = self.grid.n;
        let data = self
            .data
            .iter()
            .map(|c| {
                let f = spectral::forward(d, n, c);
                let g = if m >= n { spectral::pad(d, n, m, &f) } else { spectral::truncate(d, m, n, &f) };
                spectral::inverse(d, m, &g)
            })
            .collect();
        Ok(PeriodicField { grid, rank: self.rank, data })
    }

    pub fn interpolant(&self, component: usize) -> spectral::Interpolant {
        spectral::Interpolant::new(self.grid.dim, self.grid.n, &self.data[component])
    }

    /// Fraction of L2 energy in the outer quarter of each axis' modes.
    pub fn tail_energy(&self) -> f64 {
        let d = self.grid.dim;
        let n = self.grid.n;
        let mut total = 0.0;
        let mut tail = 0.0;
        for c in &self.data {
            let f = spectral::forward(d, n, c);
            for (idx, v) in f.iter().enumerate() {
                let k = spectral::wavevector(d, n, idx);
                let e = v.norm_sqr();
                total += e;
                if k[0].unsigned_abs() as usize > n / 4 || k[1].unsigned_abs() as usize > n / 4 {
                    tail += e;
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn mean_of_trig_fields() {
        let g = TorusGrid::new(1, 64).unwrap();
        let f = PeriodicField::from_fn(g, |y| 2.0 + (2.0 * PI * y[0]).cos());
        assert!((f.mean()[0] - 2.0).abs() < 1e-15);
        let g2 = TorusGrid::new(2, 16).unwrap();
        let s = PeriodicField::from_fn(g2, |y| (2.0 * PI * y[0]).sin());
        assert!(s.mean()[0].abs() < 1e-16);
        assert_eq!(PeriodicField::constant(g2, 3.0).mean()[0], 3.0);
        assert!(f.mean_zero_part().mean()[0].abs() < 1e-16);
    }

    #[test]
    fn grad_div_laplacian() {
        let g = TorusGrid::new(2, 16).unwrap();
        let f = PeriodicField::from_fn(g, |y| (2.0 * PI * y[0]).sin());
        let lap = f.grad().div().unwrap();
        let expect = f.scale(-4.0 * PI * PI);
        assert!(lap.sub(&expect).unwrap().max_abs() < 1e-11);
        assert!(PeriodicField::constant(g, 2.0).grad().max_abs() < 1e-14);
    }

    #[test]
    fn product_of_sines_has_half_mean() {
        let g = TorusGrid::new(2, 8).unwrap();
        let s = PeriodicField::from_fn(g, |y| (2.0 * PI * y[0]).sin());
        for dealias in [false, true] {
            let p = s.multiply(&s, dealias).unwrap();
            assert!((p.mean()[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn resample_is_exact_for_bandlimited() {
        let g = TorusGrid::new(2, 8).unwrap();
        let f = PeriodicField::from_fn(g, |y| (2.0 * PI * y[0]).cos() * (4.0 * PI * y[1]).sin());
        let r = f.resample(24).unwrap();
        let exact = PeriodicField::from_fn(r.grid, |y| (2.0 * PI * y[0]).cos() * (4.0 * PI * y[1]).sin());
        assert!(r.sub(&exact).unwrap().max_abs() < 1e-14);
        let it = f.interpolant(0);
        assert!((it.eval(&[0.3, 0.7]) - (0.6 * PI).cos() * (2.8 * PI).sin()).abs() < 1e-14);
    }
}
