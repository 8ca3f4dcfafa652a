//! Tensorized Hermite-function basis on R^d and the homogenized operator.

mod spectrum;

pub use spectrum::{
    apply_l0, assemble_l0, default_scale, eigensolve, eigensolve_checked, resolvent_solve, spectral_gap, SpectrumResult,
    CLUSTER_TOLERANCE,
};

use crate::error::{Error, Result};
use crate::poly::{MultiIndex, SlowPolynomial, DEGREE_CAP};
use serde::{Deserialize, Serialize};

/// Basis functions psi_n(x) = sigma^{-1/2} h_n(x / sigma), tensorized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroBasis {
    pub dim: usize,
    pub n: usize,
    pub sigma: f64,
}

impl MacroBasis {
    pub fn new(dim: usize, n: usize, sigma: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Unsupported(format!("macro dimension {dim}")));
        }
        if n < 8 {
            return Err(Error::Config(format!("Hermite basis size must be >= 8, got {n}")));
        }
        if !(sigma > 0.0) {
            return Err(Error::Config(format!("Hermite scale must be positive, got {sigma}")));
        }
        Ok(MacroBasis { dim, n, sigma })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn with_size(&self, n: usize) -> MacroBasis {
        MacroBasis { n, ..*self }
    }
}

/// Extra modes per axis used when applying operators, so that products and
/// derivatives of basis functions are represented without truncation.
pub const PAD: usize = 16;

/// Function on R^d given by its Hermite coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroFunction {
    pub basis: MacroBasis,
    pub coeffs: Vec<f64>,
}

impl MacroFunction {
    pub fn zero(basis: MacroBasis) -> Self {
        MacroFunction { basis, coeffs: vec![0.0; basis.len()] }
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &MacroFunction) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn axpy(&mut self, s: f64, other: &MacroFunction) {
        self.coeffs.iter_mut().zip(&other.coeffs).for_each(|(a, b)| *a += s * b);
    }

    pub fn scale(&self, s: f64) -> MacroFunction {
        MacroFunction { basis: self.basis, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn padded(&self) -> Padded {
        Padded::from_function(self)
    }

    /// Relative weight of the coefficients in the outer quarter of each axis.
    pub fn tail_fraction(&self) -> f64 {
        let n = self.basis.n;
        let cut = n - n / 4;
        let total: f64 = self.coeffs.iter().map(|c| c * c).sum();
        if total == 0.0 {
            return 0.0;
        }
        let tail: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(idx, _)| match self.basis.dim {
                1 => *idx >= cut,
                _ => idx / n >= cut || idx % n >= cut,
            })
            .map(|(_, c)| c * c)
            .sum();
        (tail / total).sqrt()
    }

    /// Values at points of a 1D line.
    pub fn eval_line(&self, xs: &[f64]) -> Vec<f64> {
        assert_eq!(self.basis.dim, 1);
        let table = hermite_table(self.basis.n, self.basis.sigma, xs);
        (0..xs.len())
            .map(|p| (0..self.basis.n).map(|k| self.coeffs[k] * table[p * self.basis.n + k]).sum())
            .collect()
    }

    /// Values on the tensor grid xs1 x xs2 (row-major in xs1).
    pub fn eval_tensor(&self, xs1: &[f64], xs2: &[f64]) -> Vec<f64> {
        assert_eq!(self.basis.dim, 2);
        let n = self.basis.n;
        let t1 = hermite_table(n, self.basis.sigma, xs1);
        let t2 = hermite_table(n, self.basis.sigma, xs2);
        let m2 = xs2.len();
        // tmp[k1, q] = sum_k2 c[k1, k2] t2[q, k2]
        let mut tmp = vec![0.0; n * m2];
        for k1 in 0..n {
            for q in 0..m2 {
                tmp[k1 * m2 + q] = (0..n).map(|k2| self.coeffs[k1 * n + k2] * t2[q * n + k2]).sum();
            }
        }
        let mut out = vec![0.0; xs1.len() * m2];
        for p in 0..xs1.len() {
            for q in 0..m2 {
                out[p * m2 + q] = (0..n).map(|k1| t1[p * n + k1] * tmp[k1 * m2 + q]).sum();
            }
        }
        out
    }

    /// Value at a single point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.basis.dim {
            1 => self.eval_line(&x[..1])[0],
            _ => self.eval_tensor(&x[..1], &x[1..2])[0],
        }
    }

    /// Derivative d^alpha, represented exactly in a basis enlarged by |alpha|.
    pub fn derivative(&self, alpha: &MultiIndex) -> MacroFunction {
        let mut p = self.padded();
        for (axis, k) in alpha.0.iter().enumerate() {
            for _ in 0..*k {
                p = p.deriv(axis);
            }
        }
        p.truncate(self.basis.n + alpha.order() as usize)
    }
}

/// Hermite functions psi_0..psi_{n-1} at each point; row p holds point p.
pub fn hermite_table(n: usize, sigma: f64, xs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; xs.len() * n];
    let norm = std::f64::consts::PI.powf(-0.25) / sigma.sqrt();
    for (p, x) in xs.iter().enumerate() {
        let xi = x / sigma;
        let row = &mut out[p * n..(p + 1) * n];
        let h0 = norm * (-0.5 * xi * xi).exp();
        row[0] = h0;
        if n > 1 {
            row[1] = std::f64::consts::SQRT_2 * xi * h0;
        }
        for k in 1..n.saturating_sub(1) {
            let kf = k as f64;
            row[k + 1] = (2.0 / (kf + 1.0)).sqrt() * xi * row[k] - (kf / (kf + 1.0)).sqrt() * row[k - 1];
        }
    }
    out
}

/// Coefficient tensor in an enlarged basis where operators act exactly
/// (up to the final truncation).
#[derive(Clone, Debug, PartialEq)]
pub struct Padded {
    pub dim: usize,
    pub m: usize,
    pub sigma: f64,
    pub data: Vec<f64>,
}

impl Padded {
    pub fn zeros(dim: usize, m: usize, sigma: f64) -> Self {
        Padded { dim, m, sigma, data: vec![0.0; m.pow(dim as u32)] }
    }

    pub fn from_function(f: &MacroFunction) -> Self {
        let n = f.basis.n;
        let m = n + PAD;
        let mut p = Padded::zeros(f.basis.dim, m, f.basis.sigma);
        match f.basis.dim {
            1 => p.data[..n].copy_from_slice(&f.coeffs),
            _ => {
                for i in 0..n {
                    p.data[i * m..i * m + n].copy_from_slice(&f.coeffs[i * n..(i + 1) * n]);
                }
            }
        }
        p
    }

    /// Restriction to the first `n` modes per axis.
    pub fn truncate(&self, n: usize) -> MacroFunction {
        let basis = MacroBasis { dim: self.dim, n, sigma: self.sigma };
        let mut out = MacroFunction::zero(basis);
        let k = n.min(self.m);
        match self.dim {
            1 => out.coeffs[..k].copy_from_slice(&self.data[..k]),
            _ => {
                for i in 0..k {
                    out.coeffs[i * n..i * n + k].copy_from_slice(&self.data[i * self.m..i * self.m + k]);
                }
            }
        }
        out
    }

    /// Applies a three-term recurrence along `axis`: out[k-1] += lo(k) v[k], out[k+1] += hi(k) v[k].
    fn recurrence(&self, axis: usize, lo: impl Fn(usize) -> f64, hi: impl Fn(usize) -> f64) -> Padded {
        let m = self.m;
        let mut out = Padded::zeros(self.dim, m, self.sigma);
        let lines = if self.dim == 1 { 1 } else { m };
        let (stride, step) = match (self.dim, axis) {
            (1, _) => (0, 1),
            (_, 0) => (1, m),
            _ => (m, 1),
        };
        for line in 0..lines {
            let base = line * stride;
            for k in 0..m {
                let v = self.data[base + k * step];
                if v == 0.0 {
                    continue;
                }
                if k > 0 {
                    out.data[base + (k - 1) * step] += lo(k) * v;
                }
                if k + 1 < m {
                    out.data[base + (k + 1) * step] += hi(k) * v;
                }
            }
        }
        out
    }

    pub fn mul_x(&self, axis: usize) -> Padded {
        let s = self.sigma;
        self.recurrence(axis, |k| s * (k as f64 / 2.0).sqrt(), |k| s * ((k + 1) as f64 / 2.0).sqrt())
    }

    pub fn deriv(&self, axis: usize) -> Padded {
        let s = self.sigma;
        self.recurrence(axis, |k| (k as f64 / 2.0).sqrt() / s, |k| -((k + 1) as f64 / 2.0).sqrt() / s)
    }

    pub fn deriv_multi(&self, alpha: &MultiIndex) -> Padded {
        let mut p = self.clone();
        for (axis, k) in alpha.0.iter().enumerate() {
            for _ in 0..*k {
                p = p.deriv(axis);
            }
        }
        p
    }

    pub fn mul_poly(&self, poly: &SlowPolynomial) -> Result<Padded> {
        let deg = poly.degree();
        if deg > DEGREE_CAP {
            return Err(Error::DegreeCapExceeded { degree: deg, cap: DEGREE_CAP });
        }
        let mut out = Padded::zeros(self.dim, self.m, self.sigma);
        for (e, c) in &poly.terms {
            if *c == 0.0 {
                continue;
            }
            let mut t = self.clone();
            for (axis, k) in e.0.iter().enumerate() {
                for _ in 0..*k {
                    t = t.mul_x(axis);
                }
            }
            out.axpy(*c, &t);
        }
        Ok(out)
    }

    pub fn axpy(&mut self, s: f64, other: &Padded) {
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += s * b);
    }

    pub fn dot(&self, other: &Padded) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_orthonormal() {
        // Gauss-type check by fine trapezoid sums.
        let h = 0.01;
        let xs: Vec<f64> = (-1500..=1500).map(|i| i as f64 * h).collect();
        let t = hermite_table(6, 1.3, &xs);
        for a in 0..6 {
            for b in 0..6 {
                let s: f64 = (0..xs.len()).map(|p| t[p * 6 + a] * t[p * 6 + b]).sum::<f64>() * h;
                let e = if a == b { 1.0 } else { 0.0 };
                assert!((s - e).abs() < 1e-12, "{a} {b} {s}");
            }
        }
    }

    #[test]
    fn second_moment_of_ground_state() {
        let b = MacroBasis::new(1, 8, 1.0).unwrap();
        let mut f = MacroFunction::zero(b);
        f.coeffs[0] = 1.0;
        let p = f.padded();
        let x2 = p.mul_poly(&SlowPolynomial::monomial(&[2], 1.0)).unwrap();
        assert!((p.dot(&x2) - 0.5).abs() < 1e-15);
        let mult1 = p.mul_poly(&SlowPolynomial::constant(1, 1.0)).unwrap();
        assert_eq!(mult1, p);
    }

    #[test]
    fn derivative_matches_pointwise() {
        let b = MacroBasis::new(2, 10, 0.8).unwrap();
        let mut f = MacroFunction::zero(b);
        f.coeffs[2 * 10 + 3] = 1.0;
        f.coeffs[1] = -0.5;
        let df = f.derivative(&MultiIndex(vec![1, 1]));
        let hh = 1e-4;
        let x = [0.3, -0.2];
        let fd = (f.eval(&[x[0] + hh, x[1] + hh]) - f.eval(&[x[0] + hh, x[1] - hh]) - f.eval(&[x[0] - hh, x[1] + hh])
            + f.eval(&[x[0] - hh, x[1] - hh]))
            / (4.0 * hh * hh);
        assert!((df.eval(&x) - fd).abs() < 1e-6);
    }
}
